"""Ensemble-parallel map with a deterministic reduction order.

Workers receive independent, fully seeded tasks; results come back indexed
by task position, so means and errors are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, workers=1):
    """Apply a picklable top-level function to each item, in order."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
