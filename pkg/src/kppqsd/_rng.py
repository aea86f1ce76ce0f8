"""Deterministic random streams and block-parallel execution.

Work is cut into fixed-size blocks; block ``k`` of a job tagged ``tag``
always draws from the stream keyed by ``(seed, tag, k)``. Results are merged
in block order, so the thread count never changes a number.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")


def stream(seed: int, tag: str, *key: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required")
    spawn_key = (zlib.crc32(tag.encode()),) + tuple(int(k) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


def blocks(n: int, size: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` pairs."""
    size = max(1, int(size))
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def block_map(fn: Callable[[int, int, int], T], n: int, size: int, threads: int = 1) -> list[T]:
    """Apply ``fn(block_index, start, stop)`` to every block, in order."""
    spans = blocks(n, size)
    if threads <= 1 or len(spans) <= 1:
        return [fn(k, s, e) for k, (s, e) in enumerate(spans)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, k, s, e) for k, (s, e) in enumerate(spans)]
        return [f.result() for f in futures]
