"""Scale-layer synthesis of the cut-off field X_t on a lattice.

The field accumulates independent stationary Gaussian layers; layer j
covers [t_lo, t_hi) and has covariance C_j(x) = int k(ux)/u du over
u in [e^{t_lo}, e^{t_hi}].  Layers are sampled by circulant embedding on
a torus padded past the layer support, so the restriction to the box
carries exactly the target covariance for compactly supported seeds.
Each lattice point then performs a Brownian motion in t, and the running
supremum of X_s(x) - sqrt(2d) s is tracked at layer boundaries for the
barrier measures.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import next_fast_len

from . import _accel
from .errors import FormatError, SequencingError, SynthesisError
from .kernels import StarCovariance
from .lattice import LatticeSpec
from .seeding import seed_stream

SNAPSHOT_MAGIC = b"GMCF"
SNAPSHOT_VERSION = 1

#: embedding eigenvalues below -1e-8 * max trigger the dense fallback
_EMBED_TOL = 1e-8
_CHOLESKY_NUGGET = 1e-12


@dataclass(frozen=True)
class ScaleLayer:
    index: int
    t_lo: float
    t_hi: float
    support_radius: float

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo


def plan_layers(cov: StarCovariance, t_max: float, layers_per_unit_t: int = 4) -> list[ScaleLayer]:
    """Contiguous layers covering [0, t_max], each of width <= 1/layers_per_unit_t."""
    if t_max < 0.25:
        raise ValueError(f"t_max must be at least 0.25, got {t_max}")
    if layers_per_unit_t < 1:
        raise ValueError("layers_per_unit_t must be a positive integer")
    n = int(math.ceil(t_max * layers_per_unit_t - 1e-12))
    edges = np.linspace(0.0, t_max, n + 1)
    sup = cov.seed.support_radius
    return [
        ScaleLayer(index=j, t_lo=float(edges[j]), t_hi=float(edges[j + 1]),
                   support_radius=sup * math.exp(-float(edges[j])))
        for j in range(n)
    ]


def default_t_max(lattice: LatticeSpec) -> float:
    """Deep enough that scales down to the lattice spacing are resolved."""
    return math.log(lattice.n) + 2.0


class LayerSampler:
    """Circulant-embedding sampler for one (layer, lattice) pair.

    The spectrum is computed once and shared read-only; ``sample`` only
    consumes the provided generator, so replicas can run concurrently.
    """

    def __init__(self, layer: ScaleLayer, lattice: LatticeSpec, cov: StarCovariance):
        self.layer = layer
        self.lattice = lattice
        h = lattice.spacing
        pad = int(math.ceil(layer.support_radius / h)) + 1
        m = next_fast_len(lattice.n + pad)
        self.m = m
        ax = np.minimum(np.arange(m), m - np.arange(m)) * h
        if lattice.d == 1:
            lags = ax
        else:
            lags = np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)
        c = cov.profile(layer.t_lo, layer.t_hi, lags)
        lam = np.fft.fftn(c).real
        lmax = lam.max()
        self._dense_fallback = None
        if lam.min() < -_EMBED_TOL * max(lmax, 1e-300):
            self._build_dense(lattice, cov)
        else:
            self._amp = np.sqrt(np.clip(lam, 0.0, None))
            self._scale = 1.0 / math.sqrt(float(lam.size))

    def _build_dense(self, lattice: LatticeSpec, cov: StarCovariance):
        if lattice.cells > 4096:
            raise SynthesisError(
                f"layer {self.layer.index}: embedding spectrum indefinite and lattice "
                f"too large for the dense fallback"
            )
        pts = lattice.centers().reshape(-1, lattice.d) if lattice.d == 2 else \
            lattice.centers()[:, None]
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        mat = cov.profile(self.layer.t_lo, self.layer.t_hi, dist)
        mat[np.diag_indices_from(mat)] += _CHOLESKY_NUGGET
        try:
            self._dense_fallback = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError as exc:
            raise SynthesisError(
                f"layer {self.layer.index}: dense Cholesky failed after nugget"
            ) from exc

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Zero-mean stationary increments on the box for one replica."""
        return self.sample_block([rng])[0]

    def sample_block(self, rngs) -> np.ndarray:
        """Stacked increments, one replica per generator; shape (len(rngs), *lattice.shape).

        Noise is drawn per generator (stream discipline), only the FFT is
        batched, so results match the one-at-a-time path bit for bit.
        """
        b = len(rngs)
        n = self.lattice.n
        if self._dense_fallback is not None:
            w = np.stack([rng.standard_normal(self.lattice.cells) for rng in rngs])
            return (w @ self._dense_fallback.T).reshape((b, *self.lattice.shape))
        cells = self.m**self.lattice.d
        zeta = np.empty((b, cells), dtype=np.complex128)
        for i, rng in enumerate(rngs):
            w = rng.standard_normal(2 * cells)
            zeta[i] = w[:cells] + 1j * w[cells:]
        zeta = zeta.reshape((b,) + (self.m,) * self.lattice.d)
        axes = tuple(range(1, 1 + self.lattice.d))
        field = np.fft.ifftn(zeta * self._amp, axes=axes).real
        # ifftn carries 1/M^d; the unitary convention needs 1/sqrt(M^d)
        field *= float(self._amp.size) * self._scale
        if self.lattice.d == 1:
            return np.ascontiguousarray(field[:, :n])
        return np.ascontiguousarray(field[:, :n, :n])


def build_samplers(cov: StarCovariance, lattice: LatticeSpec,
                   layers: list[ScaleLayer]) -> list[LayerSampler]:
    return [LayerSampler(layer, lattice, cov) for layer in layers]


@dataclass
class FieldState:
    """Lattice values of X_t plus the barrier bookkeeping.

    ``running_sup`` holds, at each cell, the max over completed layer
    boundaries of X_s(x) - sqrt(2d) s; it starts at -inf for the blank
    state so the first advance installs the first boundary value.
    """

    t: float
    d: int
    values: np.ndarray
    running_sup: np.ndarray
    master_seed: int = 0
    replica: int = 0

    @staticmethod
    def blank(lattice: LatticeSpec, master_seed: int = 0, replica: int = 0) -> "FieldState":
        return FieldState(
            t=0.0,
            d=lattice.d,
            values=np.zeros(lattice.shape),
            running_sup=np.full(lattice.shape, -np.inf),
            master_seed=master_seed,
            replica=replica,
        )


def advance(state: FieldState, increment: np.ndarray, layer: ScaleLayer) -> FieldState:
    """Add one layer's increment and refresh the running supremum at its boundary."""
    if abs(layer.t_lo - state.t) > 1e-9:
        raise SequencingError(
            f"layer {layer.index} starts at t={layer.t_lo}, state is at t={state.t}"
        )
    values = state.values + increment
    sup = state.running_sup.copy()
    _accel.update_running_sup(sup, values, math.sqrt(2.0 * state.d) * layer.t_hi)
    return replace(state, t=layer.t_hi, values=values, running_sup=sup)


def sample_field(cov: StarCovariance, lattice: LatticeSpec, t_max: float,
                 master_seed: int, replica: int = 0, layers_per_unit_t: int = 4,
                 checkpoints=None, samplers=None) -> list[FieldState]:
    """Evolve one replica to t_max, returning states at the checkpoints.

    ``checkpoints`` defaults to [t_max]; each must align with a layer
    boundary.  Layer j consumes the (replica, j) random stream, so the
    result is independent of scheduling and worker count.
    """
    layers = plan_layers(cov, t_max, layers_per_unit_t)
    if samplers is None:
        samplers = build_samplers(cov, lattice, layers)
    if checkpoints is None:
        checkpoints = [t_max]
    remaining = sorted(float(c) for c in checkpoints)
    for c in remaining:
        if not any(abs(c - L.t_hi) < 1e-9 for L in layers):
            raise ValueError(f"checkpoint t={c} does not align with a layer boundary")
    state = FieldState.blank(lattice, master_seed, replica)
    out = []
    for layer, sampler in zip(layers, samplers):
        rng = seed_stream(master_seed, replica, layer.index)
        state = advance(state, sampler.sample(rng), layer)
        while remaining and abs(state.t - remaining[0]) < 1e-9:
            out.append(state)
            remaining.pop(0)
        if not remaining:
            break
    return out


class BatchSynthesizer:
    """Vectorized many-replica evolution (one array row per replica).

    Streams stay per (replica, layer): batching changes the execution
    layout, never the numbers.
    """

    def __init__(self, cov: StarCovariance, lattice: LatticeSpec, t_max: float,
                 layers_per_unit_t: int = 4):
        self.cov = cov
        self.lattice = lattice
        self.layers = plan_layers(cov, t_max, layers_per_unit_t)
        self.samplers = build_samplers(cov, lattice, self.layers)

    def run(self, master_seed: int, replicas: range, checkpoints):
        """Yield (t, values, running_sup) with arrays of shape (B, *lattice.shape)."""
        reps = list(replicas)
        b = len(reps)
        checkpoints = sorted(float(c) for c in checkpoints)
        for c in checkpoints:
            if not any(abs(c - L.t_hi) < 1e-9 for L in self.layers):
                raise ValueError(f"checkpoint t={c} does not align with a layer boundary")
        values = np.zeros((b, *self.lattice.shape))
        sup = np.full((b, *self.lattice.shape), -np.inf)
        drift = math.sqrt(2.0 * self.lattice.d)
        next_cp = 0
        for layer, sampler in zip(self.layers, self.samplers):
            rngs = [seed_stream(master_seed, rep, layer.index) for rep in reps]
            values += sampler.sample_block(rngs)
            np.maximum(sup, values - drift * layer.t_hi, out=sup)
            while next_cp < len(checkpoints) and abs(layer.t_hi - checkpoints[next_cp]) < 1e-9:
                yield layer.t_hi, values.copy(), sup.copy()
                next_cp += 1
            if next_cp >= len(checkpoints):
                return


def empirical_cov_report(states: list[FieldState], lags: list[int],
                         cov: StarCovariance, lattice: LatticeSpec):
    """Empirical covariance at lattice offsets vs the K_t target.

    Returns rows (lag_cells, lag, empirical, target, se, z).  Estimates
    average spatially over the box (valid overlap, no wraparound) and
    then over replicas, so the SE comes from the replica scatter.
    """
    if len(states) < 100:
        raise ValueError("need at least 100 replicas for a covariance report")
    t = states[0].t
    h = lattice.spacing
    rows = []
    vals = np.stack([s.values for s in states])
    for lag in sorted(set(int(abs(l)) for l in lags)):
        if lattice.d == 1:
            prod = vals[:, : lattice.n - lag or None] * vals[:, lag:]
            per_rep = prod.mean(axis=1)
        else:
            prod = vals[:, : lattice.n - lag or None, :] * vals[:, lag:, :]
            per_rep = prod.mean(axis=(1, 2))
        est = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / math.sqrt(len(states)))
        target = cov.K(t, lag * h) if lattice.d == 1 else cov.K(t, (lag * h, 0.0))
        rows.append({
            "lag_cells": lag,
            "lag": lag * h,
            "empirical": est,
            "target": target,
            "se": se,
            "z": (est - target) / se if se > 0 else 0.0,
        })
    return rows


# ---------------------------------------------------------------------------
# snapshot format: GMCF | version u32 | d u32 | N u32 | L f64 | t f64
#                  | master_seed u64 | replica u32 | values f64[N^d] | sup f64[N^d]
# all little-endian
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIIddQI")


def write_snapshot(state: FieldState, lattice: LatticeSpec, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(
            SNAPSHOT_MAGIC, SNAPSHOT_VERSION, lattice.d, lattice.n,
            lattice.box_side, state.t, state.master_seed & (2**64 - 1), state.replica,
        ))
        fh.write(np.ascontiguousarray(state.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.running_sup, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[FieldState, LatticeSpec]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, d, n, box, t, seed, rep = _HEADER.unpack(raw)
        if magic != SNAPSHOT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        lattice = LatticeSpec(d=d, n=n, box_side=box)
        count = lattice.cells
        body = fh.read(2 * count * 8)
        if len(body) != 2 * count * 8:
            raise FormatError(f"{path}: truncated payload")
        arr = np.frombuffer(body, dtype="<f8")
        values = arr[:count].reshape(lattice.shape).copy()
        sup = arr[count:].reshape(lattice.shape).copy()
    return FieldState(t=t, d=d, values=values, running_sup=sup,
                      master_seed=seed, replica=rep), lattice
