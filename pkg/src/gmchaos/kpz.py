"""Box-counting dimension machinery and the critical KPZ experiment.

Dimensions here follow the measure-based convention: coverings are
scored by sum_k mu(B_k)^s, and the dimension is the threshold s at
which the level-to-level slope of log sum mu(B)^s changes sign.  In
this normalization every dimension lands in [0, 1] (a full box has
dimension 1 whatever the ambient d), and the critical KPZ relation
reads delta = 2q - q^2 with delta the Lebesgue and q the quantum
dimension, inverted by q = 1 - sqrt(1 - delta).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import FormatError, ResolutionError
from .lattice import LatticeSpec
from .measures import ChaosMeasure

CANTOR_DIM = math.log(2.0) / math.log(3.0)

MASK_MAGIC = b"GMCK"
_MASK_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class TargetSet:
    """Deterministic target set, independent of the measures it will be boxed against."""

    kind: str  # full_box | segment | cantor | custom
    mask: np.ndarray | None = field(default=None, repr=False)
    analytic_dim_leb: float | None = None

    @staticmethod
    def full_box() -> "TargetSet":
        return TargetSet(kind="full_box", analytic_dim_leb=1.0)

    @staticmethod
    def segment() -> "TargetSet":
        """Horizontal mid-height segment in d=2 (Euclidean dim 1, normalized 1/2)."""
        return TargetSet(kind="segment", analytic_dim_leb=0.5)

    @staticmethod
    def cantor() -> "TargetSet":
        """Middle-thirds Cantor set in d=1, normalized dimension ln2/ln3."""
        return TargetSet(kind="cantor", analytic_dim_leb=CANTOR_DIM)

    @staticmethod
    def custom(mask: np.ndarray) -> "TargetSet":
        return TargetSet(kind="custom", mask=np.asarray(mask, dtype=bool))

    def cell_mask(self, lattice: LatticeSpec) -> np.ndarray:
        """Cells whose centers belong to the set (to lattice resolution)."""
        if self.kind == "custom":
            if self.mask is None or self.mask.shape != lattice.shape:
                raise ValueError("custom mask must match the lattice shape")
            return self.mask
        if self.kind == "full_box":
            return np.ones(lattice.shape, dtype=bool)
        if self.kind == "segment":
            if lattice.d != 2:
                raise ValueError("segment target lives in d=2")
            m = np.zeros(lattice.shape, dtype=bool)
            m[:, lattice.n // 2] = True
            return m
        if self.kind == "cantor":
            if lattice.d != 1:
                raise ValueError("cantor target lives in d=1")
            depth = int(math.floor(math.log(lattice.n) / math.log(3.0)))
            x = lattice.axis_centers() / lattice.box_side
            mask = np.ones(lattice.n, dtype=bool)
            for _ in range(depth):
                frac = x % 1.0
                mask &= ~((frac > 1.0 / 3.0) & (frac < 2.0 / 3.0))
                x = x * 3.0
            return mask
        raise ValueError(f"unknown target kind {self.kind!r}")


def cantor_intervals(depth: int) -> list[tuple[float, float]]:
    """Closed intervals of the depth-n middle-thirds prefractal on [0,1]."""
    intervals = [(0.0, 1.0)]
    for _ in range(depth):
        nxt = []
        for lo, hi in intervals:
            third = (hi - lo) / 3.0
            nxt.append((lo, lo + third))
            nxt.append((hi - third, hi))
        intervals = nxt
    return intervals


def euclidean_dimension(target: TargetSet, lattice: LatticeSpec | None = None):
    """Normalized dimension of a built-in set; box-count estimate for custom masks."""
    if target.kind != "custom":
        return target.analytic_dim_leb, False
    if lattice is None:
        raise ValueError("custom masks need the lattice for a box-count estimate")
    counts = []
    levels = []
    level = 1
    while lattice.n // 2**level >= 2:
        cells = lattice.n // 2**level
        if lattice.d == 1:
            hits = target.mask.reshape(2**level, cells).any(axis=1).sum()
        else:
            hits = (target.mask.reshape(2**level, cells, 2**level, cells)
                    .any(axis=(1, 3)).sum())
        counts.append(math.log(max(int(hits), 1)))
        levels.append(level * math.log(2.0))
        level += 1
    slope = np.polyfit(levels, counts, 1)[0]
    return float(slope / lattice.d), True


def quantum_box_masses(measure: ChaosMeasure, target: TargetSet, level: int) -> np.ndarray:
    """mu(B) for dyadic boxes of side 2^{-level} L that intersect the target set."""
    lat = measure.lattice
    cells_per_box = lat.n // 2**level
    if cells_per_box < 4:
        raise ResolutionError(
            f"level {level} boxes have {cells_per_box} cells per side; need >= 4"
        )
    mask = target.cell_mask(lat)
    if lat.d == 1:
        sums = measure.weights.reshape(-1, cells_per_box).sum(axis=1)
        hit = mask.reshape(-1, cells_per_box).any(axis=1)
        return sums[hit]
    sums = _accel.box_mass_sums(measure.weights, cells_per_box)
    hit = mask.reshape(2**level, cells_per_box, 2**level, cells_per_box).any(axis=(1, 3))
    return np.asarray(sums)[hit]


def lebesgue_box_masses(kind: str, level: int) -> np.ndarray:
    """Analytic covering-box Lebesgue masses of the built-in sets (unit box).

    full_box/segment use dyadic levels; cantor uses base-3 levels, where
    the covering boxes are exactly the 2^level prefractal intervals.
    """
    if kind == "full_box":
        return np.full(4**level, 4.0 ** (-level))
    if kind == "segment":
        return np.full(2**level, 4.0 ** (-level))
    if kind == "cantor":
        return np.full(2**level, 3.0 ** (-level))
    raise ValueError(f"no analytic masses for kind {kind!r}")


@dataclass
class DimensionEstimate:
    value: float
    crossed: bool
    s_grid: np.ndarray
    slopes: np.ndarray


def dimension_estimate(masses_by_level: dict, s_grid=None) -> DimensionEstimate:
    """Threshold s where the slope of log sum_B mu(B)^s across levels hits zero.

    ``masses_by_level`` maps level index -> array of covering-box masses.
    For each s the sums are fitted linearly against the level index; the
    dimension is the linear-interpolation zero crossing of slope(s) on
    the grid.  No crossing in [0,1] returns the boundary value flagged.
    """
    if s_grid is None:
        s_grid = np.linspace(0.0, 1.0, 41)
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.size < 2 or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be increasing")
    if np.max(np.diff(s_grid)) > 0.05 + 1e-12:
        raise ValueError("s_grid step must be <= 0.05")
    levels = sorted(masses_by_level)
    if len(levels) < 3:
        raise ValueError("need at least 3 levels")
    logs = []
    for lv in levels:
        m = np.clip(np.asarray(masses_by_level[lv], dtype=float), 0.0, None)
        m = m[m > 0]
        if m.size == 0:
            raise ResolutionError(f"level {lv} has no positive box masses")
        logs.append(np.log(m))
    x = np.asarray(levels, dtype=float)
    slopes = np.empty(s_grid.size)
    for i, s in enumerate(s_grid):
        y = np.array([_logsumexp(s * lg) for lg in logs])
        slopes[i] = np.polyfit(x, y, 1)[0]
    if slopes[0] <= 0.0:
        return DimensionEstimate(float(s_grid[0]), False, s_grid, slopes)
    for i in range(s_grid.size - 1):
        if slopes[i] > 0.0 >= slopes[i + 1]:
            s0, s1 = s_grid[i], s_grid[i + 1]
            f0, f1 = slopes[i], slopes[i + 1]
            est = s0 + (s1 - s0) * f0 / (f0 - f1)
            return DimensionEstimate(float(est), True, s_grid, slopes)
    return DimensionEstimate(float(s_grid[-1]), False, s_grid, slopes)


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    return float(m + math.log(np.exp(a - m).sum()))


def kpz_predict(delta: float, d: int = 1) -> float:
    """Quantum dimension q in [0,1] solving 2q - q^2 = delta."""
    if not (0.0 <= delta <= 1.0):
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    return 1.0 - math.sqrt(1.0 - delta)


# ---------------------------------------------------------------------------
# mask file format: GMCK | d u32 | N u32 | one byte per cell, row-major
# ---------------------------------------------------------------------------

def write_mask(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    n = mask.shape[0]
    with open(path, "wb") as fh:
        fh.write(_MASK_HEADER.pack(MASK_MAGIC, d, n))
        fh.write(mask.astype(np.uint8).tobytes())


def read_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read(_MASK_HEADER.size)
        if len(raw) < _MASK_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, d, n = _MASK_HEADER.unpack(raw)
        if magic != MASK_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        body = fh.read(n**d)
        if len(body) != n**d:
            raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(body, dtype=np.uint8).reshape((n,) * d).astype(bool)
