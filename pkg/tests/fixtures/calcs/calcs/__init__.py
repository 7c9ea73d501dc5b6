"""Tiny calculator library used as an indexing and sandbox fixture."""

from calcs.geometry import area, perimeter
from calcs.util import consume

__all__ = ["area", "consume", "perimeter"]
