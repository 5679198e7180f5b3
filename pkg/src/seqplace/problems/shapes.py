"""Polyomino block shapes and their collision sphere sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import SphereSet


@dataclass(frozen=True)
class BlockShape:
    """A flat polyomino block: unit cells on a grid, scaled by ``cell_size``.

    Cells are (col, row) integer pairs, normalized so min col/row is 0.
    The block's pose origin is the outer corner of cell (0, 0); cell (i, j)
    contributes one collision sphere of radius ``cell_size / 2`` centred at
    local ((i + .5) c, (j + .5) c, c / 2).
    """

    name: str
    cells: tuple[tuple[int, int], ...]
    cell_size: float
    _spheres: SphereSet = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError(f"block {self.name!r} has no cells")
        if self.cell_size <= 0:
            raise ValueError(f"block {self.name!r}: cell_size must be positive")
        cells = [(int(i), int(j)) for i, j in self.cells]
        if len(set(cells)) != len(cells):
            raise ValueError(f"block {self.name!r} has duplicate cells")
        min_i = min(i for i, _ in cells)
        min_j = min(j for _, j in cells)
        if min_i != 0 or min_j != 0:
            raise ValueError(f"block {self.name!r}: cells must be normalized to min (0, 0)")
        self._check_connected(cells)
        object.__setattr__(self, "cells", tuple(cells))
        c = self.cell_size
        centers = np.array([[(i + 0.5) * c, (j + 0.5) * c, 0.5 * c] for i, j in cells])
        radii = np.full(len(cells), 0.5 * c)
        object.__setattr__(self, "_spheres", SphereSet(centers, radii))

    def _check_connected(self, cells: list[tuple[int, int]]) -> None:
        # Edge-adjacency flood fill; diagonal contact does not count.
        todo = [cells[0]]
        seen = {cells[0]}
        cellset = set(cells)
        while todo:
            i, j = todo.pop()
            for nb in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if nb in cellset and nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        if len(seen) != len(cells):
            raise ValueError(f"block {self.name!r}: cells are not edge-connected")

    @property
    def sphere_set(self) -> SphereSet:
        return self._spheres

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def width(self) -> float:
        """Extent along local x at yaw 0."""
        return (max(i for i, _ in self.cells) + 1) * self.cell_size

    @property
    def height(self) -> float:
        """Extent along local y at yaw 0."""
        return (max(j for _, j in self.cells) + 1) * self.cell_size

    @property
    def area(self) -> float:
        return self.n_cells * self.cell_size**2
