"""Ordered replication map over an optional process pool."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")


def map_replications(fn: Callable[[int], T], rep_ids: Iterable[int], workers: int = 1) -> list[T]:
    """Apply ``fn`` to every replication id and return results in id order.

    Each replication derives its random streams from its id, so the output
    does not depend on ``workers``. ``fn`` must be picklable when
    ``workers > 1``.
    """
    rep_ids = list(rep_ids)
    if workers <= 1 or len(rep_ids) <= 1:
        return [fn(r) for r in rep_ids]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rep_ids, chunksize=1))
