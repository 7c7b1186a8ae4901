import logging

import numpy as np
import pytest

from qecstep import fitting


def test_fit_slope():
    x = np.logspace(-3, -1, 5)
    fit = fitting.fit_slope(x, 2.5 * x**3)
    assert fit.slope == pytest.approx(3)
    assert fit.intercept == pytest.approx(np.log10(2.5))
    assert fit.r_squared == pytest.approx(1)
    assert fit.window == pytest.approx((1e-3, 1e-1))
    assert fit.decades == pytest.approx(2)
    assert fit.within(3.1, 0.2)
    assert not fit.within(3.5, 0.2)
    assert fit.to_dict()["points"] == 5


@pytest.mark.parametrize(
    "x, y, match",
    [
        ([1, 2, 3], [1, 2, 3], "at least 4 points"),
        ([1, 2, 3, 4], [1, 2, 3], "differ in length"),
        ([1, 2, 3, 4], [1, 0, 3, 4], "strictly positive"),
        ([-1, 2, 3, 4], [1, 2, 3, 4], "strictly positive"),
    ],
)
def test_fit_slope_errors(x, y, match):
    with pytest.raises(ValueError, match=match):
        fitting.fit_slope(x, y)


def test_narrow_window_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="qecstep.fitting"):
        fitting.fit_slope([1, 2, 3, 4], [1, 4, 9, 16])
    assert "less than" in caplog.text


def test_wilson_interval():
    low, high = fitting.wilson_interval(5, 100)
    assert low < 0.05 < high
    assert fitting.wilson_interval(0, 10)[0] == pytest.approx(0, abs=1e-12)
    assert fitting.wilson_interval(10, 10)[1] == pytest.approx(1)

    with pytest.raises(ValueError, match="at least one trial"):
        fitting.wilson_interval(0, 0)
