"""Deterministic random-stream plumbing.

Every stochastic routine in the package draws from a stream derived from
(seed, path...) where the path components name the consumer.  Streams are
independent of worker count: work is split into fixed-size chunks, chunk j
always uses stream(seed, ..., j), and reductions run in chunk order.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator

import numpy as np

CHUNK = 1 << 15


def _component(x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x) & 0xFFFFFFFFFFFFFFFF
    if isinstance(x, str):
        return int.from_bytes(hashlib.sha256(x.encode()).digest()[:8], "big")
    raise TypeError(f"stream path component must be int or str, got {type(x)!r}")


def stream(seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by (seed, *path); stable across runs."""
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_component(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def chunk_sizes(total: int, chunk: int = CHUNK) -> Iterator[tuple[int, int]]:
    """Yield (chunk_index, size) pairs covering `total` samples."""
    done = 0
    idx = 0
    while done < total:
        size = min(chunk, total - done)
        yield idx, size
        done += size
        idx += 1


def map_chunks(fn, total: int, threads: int = 1, chunk: int = CHUNK) -> list:
    """Apply fn(chunk_index, size) over all chunks, in chunk order.

    Results are collected by index, so the output is identical for any
    thread count.
    """
    jobs = list(chunk_sizes(total, chunk))
    if threads <= 1 or len(jobs) <= 1:
        return [fn(i, s) for i, s in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, i, s) for i, s in jobs]
        return [f.result() for f in futures]


def subsample_indices(rng: np.random.Generator, total: int, budget: int) -> np.ndarray | None:
    """Seeded uniform subsample of range(total), or None if within budget."""
    if total <= budget:
        return None
    return rng.integers(0, total, size=budget)


def choice_iter(rng: np.random.Generator, items: Iterable, k: int) -> list:
    seq = list(items)
    idx = rng.integers(0, len(seq), size=k)
    return [seq[i] for i in idx]
