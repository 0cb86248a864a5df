"""Uniform-grid spatial hash for broad-phase neighbour queries."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np


class SpatialHash:
    """Buckets points into square cells of side ``cell_size``.

    With ``cell_size`` equal to the query radius, every neighbour of a point
    lies in the 3x3 block of cells around it.
    """

    def __init__(self, cell_size: float):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, int], list[int]] = defaultdict(list)

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(x / self.cell_size), math.floor(y / self.cell_size)

    def insert(self, key: int, x: float, y: float) -> None:
        self.cells[self._cell(x, y)].append(key)

    def clear(self) -> None:
        self.cells.clear()

    def pairs_within(self, xs, ys, radius: float) -> list[tuple[int, int]]:
        """All index pairs (i < j) whose points are at most ``radius`` apart."""
        self.clear()
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        for i in range(len(xs)):
            self.insert(i, xs[i], ys[i])
        r2 = radius * radius
        out = []
        for (cx, cy), members in self.cells.items():
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    other = self.cells.get((cx + dx, cy + dy))
                    if not other:
                        continue
                    for i in members:
                        for j in other:
                            if i < j and (xs[i] - xs[j]) ** 2 + (ys[i] - ys[j]) ** 2 <= r2:
                                out.append((i, j))
        out.sort()
        return out


def candidate_pairs(xs, ys, radius: float) -> list[tuple[int, int]]:
    if radius <= 0:
        return []
    return SpatialHash(radius).pairs_within(xs, ys, radius)
