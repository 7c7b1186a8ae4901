from __future__ import annotations

import concurrent.futures
import hashlib
from collections.abc import Callable, Iterable
from typing import TypeVar

from qecstep import config

_T = TypeVar("_T")
_R = TypeVar("_R")


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Hash a top-level seed, a component label and an index into a 64-bit stream seed"""
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise TypeError(f'Seed "{seed}" is not an int')

    digest = hashlib.sha256(f"{seed}:{label}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little", signed=False)


def parallel_map(
    fn: Callable[[_T], _R], items: Iterable[_T], threads: int | None = None
) -> list[_R]:
    """Map ``fn`` over ``items`` on a thread pool, preserving input order"""
    items = list(items)
    threads = threads or config.threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with concurrent.futures.ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
