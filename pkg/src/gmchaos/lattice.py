"""Regular box lattices on which fields and measures live."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: refuse lattices above this many cells (keeps accidental d=2 blowups out)
MAX_CELLS = 1 << 26


@dataclass(frozen=True)
class LatticeSpec:
    """d-dimensional box [0, L]^d split into n^d cells, values at cell centers."""

    d: int
    n: int
    box_side: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 16 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"points per side must be a power of two >= 16, got {self.n}")
        if self.box_side <= 0:
            raise ValueError("box side must be positive")
        if self.n**self.d > MAX_CELLS:
            raise ValueError(f"lattice of {self.n}^{self.d} cells exceeds the memory budget")

    @property
    def spacing(self) -> float:
        return self.box_side / self.n

    @property
    def cells(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def axis_centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.spacing

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (n, ) in d=1 or (n, n, 2) in d=2."""
        ax = self.axis_centers()
        if self.d == 1:
            return ax
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def region_mask(self, lo, hi) -> np.ndarray:
        """Boolean mask of cells whose centers lie in the box [lo, hi]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != (self.d,) or hi.shape != (self.d,):
            raise ValueError("region bounds must match the lattice dimension")
        ax = self.axis_centers()
        masks = [(ax >= lo[k]) & (ax <= hi[k]) for k in range(self.d)]
        if self.d == 1:
            return masks[0]
        return np.outer(masks[0], masks[1])
