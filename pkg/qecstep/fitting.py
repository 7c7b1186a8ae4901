"""Log-log slope fits and binomial confidence intervals."""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Sequence
from typing import Final

import numpy as np
import scipy.stats

logger = logging.getLogger(__name__)

MIN_POINTS: Final = 4
MIN_DECADES: Final = 1.0


@dataclasses.dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(log10 x, log10 y)``"""

    x: tuple[float, ...]
    y: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]

    @property
    def decades(self) -> float:
        return math.log10(self.window[1] / self.window[0])

    def within(self, expected: float, tolerance: float) -> bool:
        return abs(self.slope - expected) <= tolerance

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "points": len(self.x),
        }


def fit_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """Fit ``y ~ x^slope``.

    A warning is logged when ``x`` spans less than a decade.

    Raises:
        ValueError: With fewer than four points, mismatched lengths, or
            non-positive values.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError(f"x and y differ in length ({xs.size} and {ys.size})")
    if xs.size < MIN_POINTS:
        raise ValueError(f"A slope fit needs at least {MIN_POINTS} points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("Log-log fits require strictly positive values")

    window = (float(xs.min()), float(xs.max()))
    if math.log10(window[1] / window[0]) < MIN_DECADES:
        logger.warning("Fit window %s spans less than %s decade", window, MIN_DECADES)

    result = scipy.stats.linregress(np.log10(xs), np.log10(ys))
    return SlopeFit(
        x=tuple(xs.tolist()),
        y=tuple(ys.tolist()),
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue**2),
        window=window,
    )


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion"""
    if trials < 1:
        raise ValueError("A proportion needs at least one trial")

    ci = scipy.stats.binomtest(successes, trials).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return float(ci.low), float(ci.high)
