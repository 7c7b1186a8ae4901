import threading

import pytest

from qecstep import utils


def test_derive_seed():
    seed = utils.derive_seed(7, "protocol", 0)
    assert seed == utils.derive_seed(7, "protocol", 0)
    assert 0 <= seed < 2**64
    assert seed != utils.derive_seed(7, "protocol", 1)
    assert seed != utils.derive_seed(7, "channel", 0)
    assert seed != utils.derive_seed(8, "protocol", 0)

    with pytest.raises(TypeError, match="is not an int"):
        utils.derive_seed("7", "protocol")
    with pytest.raises(TypeError, match="is not an int"):
        utils.derive_seed(True, "protocol")


def test_parallel_map_preserves_order():
    assert utils.parallel_map(lambda x: x * x, range(10), threads=4) == [
        x * x for x in range(10)
    ]
    assert utils.parallel_map(lambda x: x, [], threads=4) == []


def test_parallel_map_single_thread(monkeypatch):
    monkeypatch.setenv("QECSTEP_THREADS", "1")
    seen = set()

    def record(x):
        seen.add(threading.get_ident())
        return x

    assert utils.parallel_map(record, range(5)) == list(range(5))
    assert seen == {threading.get_ident()}
