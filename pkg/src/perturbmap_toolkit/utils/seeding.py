"""Counter-based seed derivation.

Every random stream is keyed by the user seed plus a tuple of non-negative integers
(purpose tag, block or replicate index, ...), so a stream never depends on how work
was scheduled.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar
import zlib

import numpy as np

T = TypeVar("T")


def purpose_tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    spawn_key = tuple(purpose_tag(k) if isinstance(k, str) else int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def derive_seed(seed: int, *keys: int | str) -> int:
    return int(derive_rng(seed, *keys).integers(0, 2**63 - 1))


def block_sizes(total: int, block_size: int) -> list[int]:
    if total <= 0:
        return []
    full, rest = divmod(total, block_size)
    return [block_size] * full + ([rest] if rest else [])


def ordered_map(fn: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """Evaluate fn(0..count-1) and return results in index order."""
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))

