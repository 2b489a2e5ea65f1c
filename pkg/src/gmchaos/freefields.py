"""Two-dimensional free fields: Dirichlet GFF on rectangles, disc checks, MFF glue.

The rectangle carries an explicit sine eigenbasis, so the white-noise
cutoff X_t (covariance pi * int_{e^{-2t}}^inf p_D(s,x,y) ds) has exact
independent increments in t with per-mode coefficients in closed form.
The unit disc has a closed-form Green function instead; there the cutoff
covariance subtracts the whole-plane small-s heat mass (an exponential
integral), and sampling goes through a dense Cholesky factor at modest
resolution, which is all the conformal-covariance check needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.fft import dst
from scipy.special import exp1

from .errors import GmchaosError
from .estimators import ExperimentReport
from .lattice import LatticeSpec
from .measures import ChaosMeasure
from .seeding import seed_stream
from .synthesis import FieldState

EULER_GAMMA = float(np.euler_gamma)

#: additive constant linking the heat-kernel-cutoff variance shift to ln C(x, D)
VARIANCE_SHIFT_OFFSET = 0.5 * EULER_GAMMA - 0.5 * math.log(2.0)


@dataclass(frozen=True)
class DomainSpec:
    kind: str  # rectangle | unit_disc
    a: float = 1.0
    b: float = 1.0
    delta: float | None = None  # interior margin of the working subdomain D'

    def __post_init__(self):
        if self.kind not in ("rectangle", "unit_disc"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "rectangle" and (self.a <= 0 or self.b <= 0):
            raise ValueError("rectangle sides must be positive")

    @property
    def margin(self) -> float:
        if self.delta is not None:
            return self.delta
        return 0.1 * (min(self.a, self.b) if self.kind == "rectangle" else 1.0)


# ---------------------------------------------------------------------------
# rectangle eigenbasis and heat kernels
# ---------------------------------------------------------------------------

@dataclass
class EigenBasis:
    """Dirichlet eigensystem of -Delta/2 on (0,a)x(0,b), modes 1..kmax per axis."""

    a: float
    b: float
    kmax: int = 256
    lam: np.ndarray = field(init=False, repr=False)
    _n: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kmax < 32:
            raise ValueError("kmax must be at least 32")
        n = np.arange(1, self.kmax + 1, dtype=float)
        self._n = n
        self.lam = 0.5 * math.pi**2 * (
            (n[:, None] / self.a) ** 2 + (n[None, :] / self.b) ** 2
        )

    def sin_matrix(self, coords, axis_len: float) -> np.ndarray:
        """sin(n pi x / L) for the given coordinates, shape (len(coords), kmax)."""
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        return np.sin(np.pi * np.outer(coords, self._n) / axis_len)

    def phi(self, x) -> np.ndarray:
        """phi_nm(x) = (2/sqrt(ab)) sin(n pi x1/a) sin(m pi x2/b), shape (kmax, kmax)."""
        x = np.asarray(x, dtype=float)
        sx = self.sin_matrix(x[0], self.a)[0]
        sy = self.sin_matrix(x[1], self.b)[0]
        return (2.0 / math.sqrt(self.a * self.b)) * np.outer(sx, sy)

    def min_truncated_lambda(self) -> float:
        k1 = self.kmax + 1
        return 0.5 * math.pi**2 * min(
            (k1 / self.a) ** 2 + (1.0 / self.b) ** 2,
            (1.0 / self.a) ** 2 + (k1 / self.b) ** 2,
        )


def _gauss_1d(s, z):
    return np.exp(-z * z / (2.0 * s)) / math.sqrt(2.0 * math.pi * s)


def _heat_1d_images(s, u, v, length, tol=1e-14):
    """One-axis Dirichlet heat kernel by the method of images."""
    reach = math.sqrt(2.0 * s * 2.0 * -math.log(tol)) + abs(u) + abs(v) + 2 * length
    n_img = int(math.ceil(reach / (2.0 * length))) + 1
    total = 0.0
    for n in range(-n_img, n_img + 1):
        total += _gauss_1d(s, u - v + 2 * n * length) - _gauss_1d(s, u + v + 2 * n * length)
    return total


def dirichlet_heat_kernel(domain: DomainSpec, s: float, x, y) -> float:
    """p_D(s, x, y) on a rectangle: product of per-axis image series."""
    if domain.kind != "rectangle":
        raise ValueError("image-series heat kernel is for rectangles")
    if not (s > 0):
        raise ValueError("s must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if not (0 < p[0] < domain.a and 0 < p[1] < domain.b):
            return 0.0  # boundary or exterior point
    return (_heat_1d_images(s, x[0], y[0], domain.a)
            * _heat_1d_images(s, x[1], y[1], domain.b))


def heat_kernel_eigen(basis: EigenBasis, s: float, x, y) -> float:
    """Eigen-series p_D(s,x,y); the dual representation of the image series."""
    px = basis.phi(x)
    py = basis.phi(y)
    return float(np.sum(np.exp(-basis.lam * s) * px * py))


def gff_cutoff_covariance(basis: EigenBasis, t: float, x, y) -> tuple[float, float]:
    """Covariance pi sum e^{-lam e^{-2t}} / lam phi(x) phi(y), with its tail estimate.

    Returns (value, truncation_tail); the tail is the isotropic-count
    estimate E1(lam_cut eps)/2 of the discarded modes, a precision
    warning when above 1e-6.
    """
    eps = math.exp(-2.0 * t)
    px = basis.phi(x)
    py = basis.phi(y)
    val = math.pi * float(np.sum(np.exp(-basis.lam * eps) / basis.lam * px * py))
    tail = 0.5 * float(exp1(basis.min_truncated_lambda() * eps))
    return val, tail


def rect_cutoff_cov_hybrid(domain: DomainSpec, basis: EigenBasis, t: float, x, y,
                           s_split: float = 0.05, nodes: int = 96) -> float:
    """pi int_{e^{-2t}}^inf p_D(s,x,y) ds with the small-s part done by images.

    Image series on [e^{-2t}, s_split] (Gauss-Legendre in ln s), eigen
    series beyond; accurate for any t at moderate kmax because the eigen
    part always enjoys e^{-lam s_split} damping.
    """
    eps = math.exp(-2.0 * t)
    val = 0.0
    if eps < s_split:
        gx, gw = leggauss(nodes)
        lo, hi = math.log(eps), math.log(s_split)
        ys = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
        for yv, wv in zip(ys, gw):
            s = math.exp(yv)
            val += wv * dirichlet_heat_kernel(domain, s, x, y) * s
        val *= 0.5 * (hi - lo) * math.pi
        s_tail = s_split
    else:
        s_tail = eps
    px = basis.phi(x)
    py = basis.phi(y)
    val += math.pi * float(np.sum(np.exp(-basis.lam * s_tail) / basis.lam * px * py))
    return val


def rect_variance_shift(domain: DomainSpec, basis: EigenBasis, t: float, x) -> float:
    """Var[X_t(x)] - t for the rectangle cutoff (hybrid integrator)."""
    return rect_cutoff_cov_hybrid(domain, basis, t, x, x) - t


def _heat_diag_1d_images(s, u: np.ndarray, length: float, tol=1e-14) -> np.ndarray:
    """Vectorized one-axis image series at coincident points p1d(s, u, u)."""
    reach = math.sqrt(4.0 * s * -math.log(tol)) + 2 * length
    n_img = int(math.ceil(reach / (2.0 * length))) + 1
    total = np.zeros_like(u)
    for n in range(-n_img, n_img + 1):
        total += _gauss_1d(s, 2 * n * length) - _gauss_1d(s, 2 * u + 2 * n * length)
    return total


def rect_variance_profile_hybrid(domain: DomainSpec, basis: EigenBasis, t: float,
                                 points: np.ndarray, s_split: float = 0.05,
                                 nodes: int = 96) -> np.ndarray:
    """Var[X_t] at many points at once (images below s_split, eigen tail above)."""
    pts = np.asarray(points, dtype=float)
    eps = math.exp(-2.0 * t)
    out = np.zeros(len(pts))
    if eps < s_split:
        gx, gw = leggauss(nodes)
        lo, hi = math.log(eps), math.log(s_split)
        ys = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
        for yv, wv in zip(ys, gw):
            s = math.exp(yv)
            p = (_heat_diag_1d_images(s, pts[:, 0], domain.a)
                 * _heat_diag_1d_images(s, pts[:, 1], domain.b))
            out += wv * p * s
        out *= 0.5 * (hi - lo) * math.pi
        s_tail = s_split
    else:
        s_tail = eps
    w = math.pi * np.exp(-basis.lam * s_tail) / basis.lam
    sx = basis.sin_matrix(pts[:, 0], domain.a)
    sy = basis.sin_matrix(pts[:, 1], domain.b)
    out += (4.0 / (domain.a * domain.b)) * np.einsum("ik,kl,il->i", sx**2, w, sy**2)
    return out


def conformal_radius_grid(domain: DomainSpec, points: np.ndarray,
                          basis: EigenBasis | None = None,
                          t_grid=(4.0, 5.0, 6.0)) -> np.ndarray:
    """Vectorized conformal_radius over many rectangle points (same Aitken limit)."""
    if domain.kind == "unit_disc":
        pts = np.asarray(points, dtype=float)
        return np.clip(1.0 - np.sum(pts**2, axis=-1), 0.0, None)
    if basis is None:
        basis = EigenBasis(domain.a, domain.b, kmax=64)
    pts = np.asarray(points, dtype=float)
    shifts = [rect_variance_profile_hybrid(domain, basis, t, pts) - t for t in t_grid]
    d1 = shifts[1] - shifts[0]
    d2 = shifts[2] - shifts[1]
    denom = d2 - d1
    limit = np.where(np.abs(denom) > 1e-14, shifts[2] - d2 * d2 / np.where(denom != 0, denom, 1.0),
                     shifts[2])
    return np.exp(limit)


def conformal_radius(domain: DomainSpec, x, basis: EigenBasis | None = None,
                     t_grid=(4.0, 5.0, 6.0)):
    """C(x, D): closed form 1-|x|^2 on the unit disc, variance-shift limit otherwise.

    For rectangles the estimate is exp of the Aitken-extrapolated
    Var[X_t(x)] - t over the t grid.  That limit carries the cutoff
    constant exp(gamma_E/2 - ln(2)/2) ~ 0.944 relative to the true
    conformal radius; it is uniform in x, and all downstream uses are
    shape-based.  Returns (value, near_boundary_flag).
    """
    x = np.asarray(x, dtype=float)
    if domain.kind == "unit_disc":
        r2 = float(x @ x)
        near = math.sqrt(r2) > 1.0 - domain.margin
        return max(0.0, 1.0 - r2), near
    near = min(x[0], domain.a - x[0], x[1], domain.b - x[1]) < domain.margin
    if basis is None:
        basis = EigenBasis(domain.a, domain.b, kmax=64)
    v = [rect_variance_shift(domain, basis, t, x) for t in t_grid]
    d1, d2 = v[1] - v[0], v[2] - v[1]
    if abs(d2 - d1) > 1e-14:
        limit = v[2] - d2 * d2 / (d2 - d1)
    else:
        limit = v[2]
    return math.exp(limit), near


def disc_green(x, y) -> float:
    """Dirichlet Green function of the unit disc, ln |1 - x conj(y)| / |x - y|."""
    zx = complex(*np.asarray(x, dtype=float))
    zy = complex(*np.asarray(y, dtype=float))
    if abs(zx) >= 1.0 or abs(zy) >= 1.0:
        raise ValueError("points must be interior to the unit disc")
    if zx == zy:
        raise GmchaosError("Green function diverges on the diagonal")
    return math.log(abs(1.0 - zx * zy.conjugate()) / abs(zx - zy))


def disc_cutoff_covariance(t: float, points: np.ndarray) -> np.ndarray:
    """Covariance matrix of the cutoff GFF on the disc at the given (n,2) points.

    K_t(x,y) = G_D(x,y) - E1(|x-y|^2 e^{2t} / 2)/2 off the diagonal; on
    the diagonal t + ln(1-|x|^2) + gamma_E/2 - ln(2)/2 (its r -> 0
    limit).  Exact up to the exponentially small boundary defect of the
    whole-plane small-s heat mass, so valid for interior points and
    moderately large t.
    """
    pts = np.asarray(points, dtype=float)
    z = pts[:, 0] + 1j * pts[:, 1]
    n = len(z)
    eps = math.exp(-2.0 * t)
    dz = np.abs(z[:, None] - z[None, :])
    cross = np.abs(1.0 - z[:, None] * z[None, :].conjugate())
    with np.errstate(divide="ignore", invalid="ignore"):
        green = np.log(cross / np.where(dz > 0, dz, 1.0))
        small_s = 0.5 * exp1(dz**2 / (2.0 * eps))
    cov = green - small_s
    diag = t + np.log(1.0 - np.abs(z) ** 2) + VARIANCE_SHIFT_OFFSET
    cov[np.diag_indices(n)] = diag
    return cov


class DiscSampler:
    """Dense-Cholesky sampler of the cutoff GFF at an arbitrary disc point cloud."""

    def __init__(self, points: np.ndarray, t: float, jitter: float = 1e-10):
        self.points = np.asarray(points, dtype=float)
        self.t = t
        cov = disc_cutoff_covariance(t, self.points)
        self.variance = np.diag(cov).copy()
        n = len(cov)
        try:
            self._chol = np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(cov)
            self._chol = vecs * np.sqrt(np.clip(vals, 0.0, None))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self._chol @ rng.standard_normal(len(self.points))


# ---------------------------------------------------------------------------
# rectangle sampling through the eigenbasis
# ---------------------------------------------------------------------------

def _dst3_2d(coef: np.ndarray, n: int) -> np.ndarray:
    """f[i,j] = sum_{n,m>=1} coef[n-1,m-1] sin(n pi (i+1/2)/N) sin(m pi (j+1/2)/N)."""
    k = coef.shape[0]
    if k > n - 1:
        raise ValueError("mode count must stay below the lattice Nyquist index")
    padded = np.zeros((n, n))
    padded[:k, :k] = coef
    out = dst(dst(padded, type=3, axis=0), type=3, axis=1)
    return 0.25 * out


def _mode_amplitudes(basis: EigenBasis, t_lo: float | None, t_hi: float) -> np.ndarray:
    """Std dev of each mode coefficient for the increment over (t_lo, t_hi].

    t_lo = None denotes the base layer (everything up to t_hi), i.e.
    pi e^{-lam e^{-2 t_hi}} / lam in variance.
    """
    hi = np.exp(-basis.lam * math.exp(-2.0 * t_hi))
    lo = 0.0 if t_lo is None else np.exp(-basis.lam * math.exp(-2.0 * t_lo))
    return np.sqrt(math.pi * np.clip(hi - lo, 0.0, None) / basis.lam)


def sample_gff_increment(basis: EigenBasis, t_lo: float | None, t_hi: float,
                         lattice: LatticeSpec, rng: np.random.Generator) -> np.ndarray:
    """One increment of the cutoff GFF on a square lattice (a = b = box side)."""
    if lattice.d != 2:
        raise ValueError("the GFF sampler needs a d=2 lattice")
    if abs(basis.a - lattice.box_side) > 1e-12 or abs(basis.b - lattice.box_side) > 1e-12:
        raise ValueError("lattice box must match the rectangle (square domains only)")
    if t_lo is not None and not (t_hi > t_lo):
        raise ValueError("need t_hi > t_lo")
    amp = _mode_amplitudes(basis, t_lo, t_hi)
    k = min(basis.kmax, lattice.n - 1)
    zeta = rng.standard_normal((k, k))
    coef = zeta * amp[:k, :k]
    return (2.0 / math.sqrt(basis.a * basis.b)) * _dst3_2d(coef, lattice.n)


def gff_variance_profile(basis: EigenBasis, t: float, lattice: LatticeSpec) -> np.ndarray:
    """Eigen-series Var[X_t] at every cell center (vectorized mode sums)."""
    eps = math.exp(-2.0 * t)
    w = math.pi * np.exp(-basis.lam * eps) / basis.lam
    ax = lattice.axis_centers()
    sx = basis.sin_matrix(ax, basis.a) ** 2  # (n, kmax)
    sy = basis.sin_matrix(ax, basis.b) ** 2
    return (4.0 / (basis.a * basis.b)) * (sx @ w @ sy.T)


def sample_gff_field(basis: EigenBasis, lattice: LatticeSpec, t: float,
                     master_seed: int, replica: int, t_step: float = 0.5) -> FieldState:
    """Cutoff GFF at time t as base layer + independent increments.

    The running supremum of X_s - sqrt(2d) s is recorded at every layer
    boundary (s = 0 included: the base layer is already nontrivial).
    """
    edges = [0.0]
    while edges[-1] < t - 1e-9:
        edges.append(min(t, edges[-1] + t_step))
    values = sample_gff_increment(basis, None, 0.0, lattice,
                                  seed_stream(master_seed, replica, 0))
    sup = values.copy()  # X_0 - 0
    drift = 2.0  # sqrt(2d) with d=2
    for j in range(1, len(edges)):
        rng = seed_stream(master_seed, replica, j)
        values = values + sample_gff_increment(basis, edges[j - 1], edges[j], lattice, rng)
        np.maximum(sup, values - drift * edges[j], out=sup)
    return FieldState(t=t, d=2, values=values, running_sup=sup,
                      master_seed=master_seed, replica=replica)


def liouville_measure(deriv: ChaosMeasure, domain: DomainSpec,
                      basis: EigenBasis | None = None) -> ChaosMeasure:
    """Critical Liouville measure: derivative weights times C(x, D)^2 cellwise."""
    if deriv.kind != "derivative":
        raise ValueError("the Liouville measure is built from a derivative measure")
    lat = deriv.lattice
    if lat.d != 2:
        raise ValueError("the Liouville measure lives on a planar lattice")
    if domain.kind == "rectangle":
        if abs(lat.box_side - domain.a) > 1e-12 or abs(domain.a - domain.b) > 1e-12:
            raise ValueError("lattice box does not match the (square) domain")
        if basis is None:
            basis = EigenBasis(domain.a, domain.b, kmax=64)
        pts = lat.centers().reshape(-1, 2)
        c = np.array([conformal_radius(domain, p, basis)[0] for p in pts])
        factor = (c**2).reshape(lat.shape)
    else:
        if abs(lat.box_side - 2.0) > 1e-12:
            raise ValueError("unit-disc lattices use a side-2 box centered on the disc")
        centers = lat.centers() - 1.0
        r2 = np.sum(centers**2, axis=-1)
        factor = np.clip(1.0 - r2, 0.0, None) ** 2
    out = ChaosMeasure(lat, deriv.t, "derivative", deriv.weights * factor,
                       deriv.variance_profile, gamma=deriv.gamma)
    out.kind = "liouville"
    return out


# ---------------------------------------------------------------------------
# Mobius maps and the conformal covariance experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MobiusMap:
    """Disc automorphism psi(z) = (z - a) / (1 - conj(a) z)."""

    a: complex

    def __call__(self, z):
        return (z - self.a) / (1.0 - np.conjugate(self.a) * z)

    def inverse(self, w):
        return (w + self.a) / (1.0 + np.conjugate(self.a) * w)

    def abs_derivative(self, z):
        return (1.0 - abs(self.a) ** 2) / np.abs(1.0 - np.conjugate(self.a) * z) ** 2


def ks_statistic(sample_a, sample_b) -> float:
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    both = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, both, side="right") / a.size
    cdf_b = np.searchsorted(b, both, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_critical(n: int, m: int, alpha: float = 0.01) -> float:
    c = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}[alpha]
    return c * math.sqrt((n + m) / (n * m))


def _disc_grid(n_grid: int, keep) -> np.ndarray:
    h = 2.0 / n_grid
    ax = -1.0 + (np.arange(n_grid) + 0.5) * h
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return pts[keep(pts)], h


def conformal_covariance_check(n_replicas: int = 400, t: float = 3.5,
                               n_grid: int = 64, mobius_a: complex = 0.3 + 0.0j,
                               region_radius: float = 0.25,
                               master_seed: int = 2024) -> ExperimentReport:
    """Two-sample test of M^{X~,D~}(A) against M^{X,D}(psi(A)) on the unit disc.

    Side one pulls the field back through psi (the non-centered GFF
    X o psi + 2 ln|psi'|), side two measures the image region directly;
    the limit theorem says the two mass distributions coincide.
    """
    psi = MobiusMap(complex(mobius_a))

    def in_region(pts):
        return np.hypot(pts[:, 0], pts[:, 1]) <= region_radius

    def in_image(pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        return (np.abs(z) < 1.0) & (np.abs(psi.inverse(z)) <= region_radius)

    pts_a, h = _disc_grid(n_grid, in_region)
    pts_b, _ = _disc_grid(n_grid, in_image)

    za = pts_a[:, 0] + 1j * pts_a[:, 1]
    mapped = psi(za)
    mapped_pts = np.stack([mapped.real, mapped.imag], axis=1)
    dpsi = psi.abs_derivative(za)
    conf_a = 1.0 - np.abs(za) ** 2
    conf_b = 1.0 - (pts_b[:, 0] ** 2 + pts_b[:, 1] ** 2)

    sampler_a = DiscSampler(mapped_pts, t)
    sampler_b = DiscSampler(pts_b, t)

    log_dpsi = np.log(dpsi)
    masses_a = np.empty(n_replicas)
    masses_b = np.empty(n_replicas)
    for r in range(n_replicas):
        x = sampler_a.sample(seed_stream(master_seed, r, 1))
        va = sampler_a.variance
        w = ((2.0 * va - x - 2.0 * log_dpsi)
             * np.exp(2.0 * x + 4.0 * log_dpsi - 2.0 * va) * conf_a**2)
        masses_a[r] = w.sum() * h * h
        y = sampler_b.sample(seed_stream(master_seed, r, 2))
        vb = sampler_b.variance
        w = (2.0 * vb - y) * np.exp(2.0 * y - 2.0 * vb) * conf_b**2
        masses_b[r] = w.sum() * h * h

    stat = ks_statistic(masses_a, masses_b)
    report = ExperimentReport(name="conformal-covariance", metadata={
        "t": t, "n_grid": n_grid, "mobius_a": [psi.a.real, psi.a.imag],
        "region_radius": region_radius, "replicas_per_side": n_replicas,
        "cells_region": int(len(pts_a)), "cells_image": int(len(pts_b)),
    })
    report.rows.append({
        "ks_statistic": stat,
        "ks_critical_1pct": ks_critical(n_replicas, n_replicas, 0.01),
        "ks_critical_5pct": ks_critical(n_replicas, n_replicas, 0.05),
        "median_mass_pullback": float(np.median(masses_a)),
        "median_mass_image": float(np.median(masses_b)),
    })
    return report
