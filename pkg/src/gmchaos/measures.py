"""Chaos measures built from a field state.

All measures share one weight layout: one nonnegative (or signed, for
the derivative and barrier-Z kinds) weight per lattice cell, already
multiplied by the cell volume, so region masses are plain sums.  The
variance profile E[X_t(x)^2] is stored per cell: it is the constant t
for star kernels and position dependent for the free fields, which lets
the same constructors serve both.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import CorruptFieldError
from .lattice import LatticeSpec
from .synthesis import FieldState


@dataclass
class ChaosMeasure:
    lattice: LatticeSpec
    t: float
    kind: str  # gmc | derivative | seneta_heyde | barrier_Z | barrier_R
    weights: np.ndarray
    variance_profile: np.ndarray
    gamma: float | None = None
    beta: float | None = None
    signed: bool = field(init=False)

    def __post_init__(self):
        self.signed = self.kind in ("derivative", "barrier_Z")

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _variance_profile(state: FieldState, lattice: LatticeSpec, variance_profile):
    if variance_profile is None:
        return np.full(lattice.shape, state.t)
    vp = np.asarray(variance_profile, dtype=float)
    if vp.shape != lattice.shape:
        raise ValueError("variance profile shape must match the lattice")
    return vp


def _check_field(state: FieldState):
    if not np.all(np.isfinite(state.values)):
        raise CorruptFieldError("field values contain non-finite entries")


def gmc_measure(state: FieldState, lattice: LatticeSpec, gamma: float,
                variance_profile=None) -> ChaosMeasure:
    """M_t^gamma: weights h^d exp(gamma X - gamma^2 V / 2); unit mean per cell."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    _check_field(state)
    vp = _variance_profile(state, lattice, variance_profile)
    w = _accel.gmc_weights(state.values, vp, float(gamma), lattice.cell_volume)
    return ChaosMeasure(lattice, state.t, "gmc", w, vp, gamma=gamma)


def derivative_measure(state: FieldState, lattice: LatticeSpec,
                       variance_profile=None) -> ChaosMeasure:
    """M'_t: weights h^d (sqrt(2d) V - X) exp(sqrt(2d) X - d V), signed cellwise."""
    _check_field(state)
    vp = _variance_profile(state, lattice, variance_profile)
    w = _accel.derivative_weights(state.values, vp, float(state.d), lattice.cell_volume)
    return ChaosMeasure(lattice, state.t, "derivative", w, vp,
                        gamma=math.sqrt(2.0 * state.d))


def seneta_heyde_measure(state: FieldState, lattice: LatticeSpec,
                         variance_profile=None) -> ChaosMeasure:
    """sqrt(t) M_t^{sqrt(2d)}: the renormalized critical martingale."""
    if state.t <= 0:
        raise ValueError("Seneta-Heyde norming needs t > 0")
    gamma = math.sqrt(2.0 * state.d)
    m = gmc_measure(state, lattice, gamma, variance_profile)
    m.kind = "seneta_heyde"
    m.weights = m.weights * math.sqrt(state.t)
    return m


def barrier_measures(state: FieldState, lattice: LatticeSpec, beta: float,
                     variance_profile=None) -> tuple[ChaosMeasure, ChaosMeasure]:
    """Barrier-killed pair (Z_t^beta, R_t^beta).

    The stopping indicator 1{tau^beta > t} is realized as
    1{running_sup <= beta} with the supremum recorded at layer
    boundaries (one discretization shared with the synthesis module).
    """
    if not (beta > 0):
        raise ValueError(f"beta must be positive, got {beta}")
    if state.running_sup is None:
        raise ValueError("field state carries no running supremum")
    _check_field(state)
    vp = _variance_profile(state, lattice, variance_profile)
    z, r = _accel.barrier_weights(state.values, state.running_sup, vp,
                                  float(beta), float(state.d), lattice.cell_volume)
    mz = ChaosMeasure(lattice, state.t, "barrier_Z", z, vp, beta=beta)
    mr = ChaosMeasure(lattice, state.t, "barrier_R", r, vp, beta=beta)
    return mz, mr


def total_mass(measure: ChaosMeasure, lo=None, hi=None) -> float:
    """Mass of cells whose centers lie in the axis-aligned box [lo, hi]."""
    if lo is None and hi is None:
        return measure.total
    d = measure.lattice.d
    lo = np.zeros(d) if lo is None else np.atleast_1d(np.asarray(lo, dtype=float))
    hi = (np.full(d, measure.lattice.box_side) if hi is None
          else np.atleast_1d(np.asarray(hi, dtype=float)))
    mask = measure.lattice.region_mask(lo, hi)
    if not mask.any():
        return 0.0
    return float(measure.weights[mask].sum())


def centered_box(lattice: LatticeSpec, side: float) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the box of the given side centered in the lattice."""
    c = 0.5 * lattice.box_side
    half = 0.5 * side
    lo = np.full(lattice.d, c - half)
    hi = np.full(lattice.d, c + half)
    return lo, hi


def export_csv(measure: ChaosMeasure, path) -> None:
    lat = measure.lattice
    ax = lat.axis_centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if lat.d == 1:
            w.writerow(["i", "x", "weight"])
            for i in range(lat.n):
                w.writerow([i, repr(float(ax[i])), repr(float(measure.weights[i]))])
        else:
            w.writerow(["i", "j", "x", "y", "weight"])
            for i in range(lat.n):
                for j in range(lat.n):
                    w.writerow([i, j, repr(float(ax[i])), repr(float(ax[j])),
                                repr(float(measure.weights[i, j]))])


def summary_json(measure: ChaosMeasure, regions: dict | None = None) -> str:
    """Summary with masses by named region; regions map name -> (lo, hi)."""
    out = {
        "kind": measure.kind,
        "t": measure.t,
        "gamma": measure.gamma,
        "beta": measure.beta,
        "lattice": {"d": measure.lattice.d, "n": measure.lattice.n,
                    "box_side": measure.lattice.box_side},
        "total_mass": measure.total,
        "regions": {},
    }
    for name, (lo, hi) in (regions or {}).items():
        out["regions"][name] = total_mass(measure, lo, hi)
    return json.dumps(out, indent=2, sort_keys=True)
