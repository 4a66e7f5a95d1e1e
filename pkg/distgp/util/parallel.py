from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply fn to every item, on a thread pool when workers > 1; results keep input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="distgp-worker") as pool:
        return list(pool.map(fn, items))


def run_seeds(master_seed: int | None, runs: int) -> Sequence[np.random.SeedSequence]:
    """Per-run seed sequences derived from the master seed and the run index."""
    return np.random.SeedSequence(master_seed).spawn(runs)
