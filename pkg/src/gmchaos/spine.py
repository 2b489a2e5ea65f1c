"""One-dimensional Monte Carlo checks of the rooted-measure machinery.

At a single point the field is a Brownian motion in t, and the barrier
functional f_t^beta = (sqrt(2d) t - X_t + beta) 1{tau^beta > t}
exp(sqrt(2d) X_t - d t) has mean beta.  The Girsanov shift X -> B +
sqrt(2d) t turns the exponential weight into the constant 1 and the
barrier event into {sup B <= beta}, which is how every estimator here
simulates: the exponential weight has second moment growing like
e^{d t}, so weighting directly is hopeless at large t (a directly
weighted variant is kept for small-t cross-checks).  Under the tilted
law the process Y_s = beta + sqrt(2d) s - X_s is a 3d Bessel process
started at beta, i.e. beta - B_s weighted by (Y_t / beta) 1{Y > 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import _accel
from .seeding import seed_stream

_CHUNK = 20_000


def asymptotic_ratio(t: float) -> float:
    """Large-t equivalent sqrt(2 / (pi t)) of the barrier ratio expectation."""
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    return math.sqrt(2.0 / (math.pi * t))


def bessel3_density(t: float, beta: float, y) -> np.ndarray:
    """Transition density of a 3d Bessel process started at beta.

    q_t(beta, y) = (y/beta) (2 pi t)^{-1/2} (e^{-(y-beta)^2/2t} - e^{-(y+beta)^2/2t})
    """
    if not (t > 0 and beta > 0):
        raise ValueError("t and beta must be positive")
    y = np.asarray(y, dtype=float)
    norm = 1.0 / math.sqrt(2.0 * math.pi * t)
    out = (y / beta) * norm * (
        np.exp(-((y - beta) ** 2) / (2.0 * t)) - np.exp(-((y + beta) ** 2) / (2.0 * t))
    )
    return np.where(y > 0, out, 0.0)


def _scan_paths(beta, t, n_paths, n_steps, seed, bridge, want_terminal, drift=0.0):
    """Simulate Brownian paths (optional drift) against the level-beta barrier.

    Returns (b_final, survival) where survival is the per-path
    probability of never crossing: the on-grid indicator, or the product
    of Brownian-bridge non-crossing factors when ``bridge`` (conditioned
    on grid endpoints the bridge law is drift-free, so the same factor
    applies to drifted paths).
    """
    dt = t / n_steps
    sqdt = math.sqrt(dt)
    b_out = np.empty(n_paths) if want_terminal else None
    surv_out = np.empty(n_paths)
    done = 0
    chunk_index = 0
    while done < n_paths:
        npc = min(_CHUNK, n_paths - done)
        rng = seed_stream(seed, chunk_index, 0)
        b = np.zeros(npc)
        max_b = np.zeros(npc)
        log_surv = np.zeros(npc)
        steps_done = 0
        while steps_done < n_steps:
            block = min(512, n_steps - steps_done)
            inc = rng.standard_normal((npc, block)) * sqdt + drift * dt
            _accel.spine_scan(b, max_b, log_surv, inc, dt, beta, bridge)
            steps_done += block
        if not bridge:
            log_surv = np.where(max_b > beta, -np.inf, 0.0)
        surv_out[done:done + npc] = np.exp(log_surv)
        if want_terminal:
            b_out[done:done + npc] = b
        done += npc
        chunk_index += 1
    return b_out, surv_out


def barrier_ratio_expectation(beta: float, t: float, n_paths: int = 100_000,
                              n_steps: int | None = None, d: int = 1,
                              bridge: bool = True, seed: int = 7,
                              girsanov: bool = True):
    """MC estimate of (1/beta) E[1{tau^beta > t} e^{sqrt(2d) X_t - d t}] vs closed form.

    Returns (estimate, standard_error, analytic) with analytic =
    erf(beta / sqrt(2 t)) / beta, the reflection-principle value.
    """
    if not (beta > 0 and t > 0):
        raise ValueError("beta and t must be positive")
    if n_paths < 1_000:
        raise ValueError("need at least 1000 paths")
    if n_steps is None:
        n_steps = max(100, int(math.ceil(100 * t)))
    analytic = erf(beta / math.sqrt(2.0 * t)) / beta
    s2d = math.sqrt(2.0 * d)
    if girsanov:
        # after the Girsanov shift the weight is 1 and the barrier acts on a
        # driftless Brownian motion
        _, surv = _scan_paths(beta, t, n_paths, n_steps, seed, bridge, want_terminal=False)
        est = surv / beta
    else:
        # direct weighting (small t only): simulate W_u = X_u - sqrt(2d) u, whose
        # barrier is the constant beta, and carry e^{sqrt(2d) X_t - d t} =
        # e^{sqrt(2d) W_t + d t}
        w, surv = _scan_paths(beta, t, n_paths, n_steps, seed, bridge,
                              want_terminal=True, drift=-s2d)
        est = surv * np.exp(s2d * w + d * t) / beta
    mc = float(est.mean())
    se = float(est.std(ddof=1) / math.sqrt(n_paths))
    return mc, se, float(analytic)


@dataclass
class SpineReport:
    beta: float
    t: float
    n_paths: int
    n_steps: int
    bridge: bool
    rows: list = field(default_factory=list)
    ess: float = 0.0
    low_ess: bool = False
    mean_weight: float = 0.0
    survival_fraction: float = 0.0
    second_moment: float = 0.0
    second_moment_se: float = 0.0
    second_moment_target: float = 0.0
    sup_abs_z: float = 0.0
    frac_bins_z_le_4: float = 1.0


def spine_histogram(beta: float, t: float, n_paths: int = 100_000,
                    n_steps: int | None = None, d: int = 1, bins: int = 40,
                    bridge: bool = True, seed: int = 11) -> SpineReport:
    """Weighted histogram of Y_t^beta against the Bessel-3 transition density.

    Paths are Y_s = beta - B_s with weight (Y_t/beta) * survival; the
    weighted law of Y_t is exactly Bessel-3 in continuous time.
    """
    if not (beta > 0):
        raise ValueError("beta must be positive")
    if t == 0.0:
        rep = SpineReport(beta, 0.0, n_paths, 0, bridge)
        rep.rows = [{"bin_center": beta, "weighted_density": math.inf,
                     "target_density": math.inf, "z": 0.0}]
        rep.second_moment = beta * beta
        rep.second_moment_target = beta * beta
        return rep
    if n_steps is None:
        n_steps = max(100, int(math.ceil(100 * t)))
    b, surv = _scan_paths(beta, t, n_paths, n_steps, seed, bridge, want_terminal=True)
    y = beta - b
    w = np.where(y > 0, y / beta, 0.0) * surv

    wsum = float(w.sum())
    ess = wsum**2 / float((w**2).sum()) if wsum > 0 else 0.0
    lo, hi = 0.0, beta + 4.0 * math.sqrt(t)
    edges = np.linspace(lo, hi, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dy = edges[1] - edges[0]

    rows = []
    zs = []
    for k in range(bins):
        inbin = (y >= edges[k]) & (y < edges[k + 1])
        contrib = w * inbin
        dens = float(contrib.mean()) / dy
        se = float(contrib.std(ddof=1)) / math.sqrt(n_paths) / dy
        # bin-averaged target by 3-point Gauss
        gx = centers[k] + 0.5 * dy * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
        gw = np.array([5.0, 8.0, 5.0]) / 18.0
        target = float(np.sum(bessel3_density(t, beta, gx) * gw))
        z = (dens - target) / se if se > 0 else 0.0
        rows.append({"bin_center": float(centers[k]), "weighted_density": dens,
                     "target_density": target, "z": z})
        zs.append(abs(z))

    m2 = float((w * y * y).sum() / wsum) if wsum > 0 else math.nan
    # delta-method SE of the ratio estimator sum(w y^2)/sum(w)
    g = w * (y * y - m2)
    m2_se = float(g.std(ddof=1) / (w.mean() * math.sqrt(n_paths))) if wsum > 0 else math.nan

    rep = SpineReport(beta, t, n_paths, n_steps, bridge)
    rep.rows = rows
    rep.ess = ess
    rep.low_ess = ess < 100
    rep.mean_weight = float(w.mean())
    rep.survival_fraction = float(surv.mean())
    rep.second_moment = m2
    rep.second_moment_se = m2_se
    rep.second_moment_target = beta * beta + 3.0 * t
    zs = np.array(zs)
    rep.sup_abs_z = float(zs.max()) if zs.size else 0.0
    rep.frac_bins_z_le_4 = float((zs <= 4.0).mean()) if zs.size else 1.0
    return rep
