"""Consumers of the other modules; provides call-site fixtures."""

from __future__ import annotations

from itertools import islice

from calcs.geometry import area, unit_area
from calcs.stats import Accumulator, mean


def consume(iterator, n=None):
    """Advance the iterator n steps ahead; entirely if n is None."""
    if n is None:
        for _ in iterator:
            pass
    else:
        next(islice(iterator, n, n), None)


def summarize(radii) -> dict:
    acc = Accumulator()
    for radius in radii:
        acc.add(area(radius))
    return {"mean": acc.mean(), "count": acc.count}


def polygon_series(max_sides: int) -> float:
    return mean(unit_area(n) for n in range(3, max_sides + 1))


async def gather_areas(radii):
    """Async def entity for indexing coverage."""
    return [area(r) for r in radii]
