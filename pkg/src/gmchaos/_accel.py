"""Hot numeric kernels, in two flavours.

Every kernel here exists twice: a pure-numpy implementation and a
numba-compiled one.  ``GMCHAOS_NUMBA=0`` in the environment forces the
numpy path; anything else (or an unavailable numba) falls back
automatically.  Both flavours are bit-compatible for the deterministic
kernels and statistically identical for the rest; ``benchmarks/bench_accel.py``
times them side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np

_env = os.environ.get("GMCHAOS_NUMBA", "").strip().lower()
if _env in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
else:
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _gmc_weights_np(values, varprof, gamma, cell_volume):
    return cell_volume * np.exp(gamma * values - 0.5 * gamma * gamma * varprof)


def _derivative_weights_np(values, varprof, d, cell_volume):
    s = math.sqrt(2.0 * d)
    return cell_volume * (s * varprof - values) * np.exp(s * values - d * varprof)


def _barrier_weights_np(values, running_sup, varprof, beta, d, cell_volume):
    s = math.sqrt(2.0 * d)
    alive = running_sup <= beta
    base = cell_volume * np.exp(s * values - d * varprof) * alive
    z = (s * varprof - values + beta) * base
    return z, base


def _update_running_sup_np(running_sup, values, drift):
    np.maximum(running_sup, values - drift, out=running_sup)
    return running_sup


def _box_mass_sums_np(weights_2d, box_cells):
    n = weights_2d.shape[0]
    edges = np.arange(0, n, box_cells)
    return np.add.reduceat(np.add.reduceat(weights_2d, edges, axis=0), edges, axis=1)


def _spine_scan_np(b, max_b, log_surv, increments, dt, beta, bridge):
    """Advance Brownian paths through one block of steps.

    ``b``/``max_b``/``log_surv`` are per-path state vectors updated in
    place; ``increments`` is (paths, steps).  With ``bridge`` the
    log-survival accumulates the Brownian-bridge non-crossing
    probability log(1 - exp(-2(beta-a)(beta-b)/dt)) per step, otherwise
    only the on-grid indicator is tracked (log_surv stays 0 or -inf).
    """
    for j in range(increments.shape[1]):
        b_new = b + increments[:, j]
        if bridge:
            ga = beta - b
            gb = beta - b_new
            with np.errstate(divide="ignore"):
                cross = np.exp(-2.0 * ga * gb / dt)
                step = np.where(
                    (ga <= 0.0) | (gb <= 0.0), -np.inf, np.log1p(-np.minimum(cross, 1.0))
                )
            log_surv += step
        else:
            log_surv[b_new > beta] = -np.inf
        b[:] = b_new
        np.maximum(max_b, b_new, out=max_b)
    return b, max_b, log_surv


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @numba.njit(cache=True, fastmath=False)
    def _gmc_weights_nb(values, varprof, gamma, cell_volume):
        out = np.empty_like(values)
        for i in range(values.size):
            out.flat[i] = cell_volume * math.exp(
                gamma * values.flat[i] - 0.5 * gamma * gamma * varprof.flat[i]
            )
        return out

    @numba.njit(cache=True, fastmath=False)
    def _derivative_weights_nb(values, varprof, d, cell_volume):
        s = math.sqrt(2.0 * d)
        out = np.empty_like(values)
        for i in range(values.size):
            v = values.flat[i]
            w = varprof.flat[i]
            out.flat[i] = cell_volume * (s * w - v) * math.exp(s * v - d * w)
        return out

    @numba.njit(cache=True, fastmath=False)
    def _barrier_weights_nb(values, running_sup, varprof, beta, d, cell_volume):
        s = math.sqrt(2.0 * d)
        z = np.zeros_like(values)
        r = np.zeros_like(values)
        for i in range(values.size):
            if running_sup.flat[i] <= beta:
                v = values.flat[i]
                w = varprof.flat[i]
                base = cell_volume * math.exp(s * v - d * w)
                r.flat[i] = base
                z.flat[i] = (s * w - v + beta) * base
        return z, r

    @numba.njit(cache=True, fastmath=False)
    def _update_running_sup_nb(running_sup, values, drift):
        for i in range(running_sup.size):
            cand = values.flat[i] - drift
            if cand > running_sup.flat[i]:
                running_sup.flat[i] = cand
        return running_sup

    @numba.njit(cache=True, fastmath=False)
    def _box_mass_sums_nb(weights_2d, box_cells):
        n = weights_2d.shape[0]
        m = n // box_cells
        out = np.zeros((m, m))
        for i in range(n):
            bi = i // box_cells
            for j in range(weights_2d.shape[1]):
                out[bi, j // box_cells] += weights_2d[i, j]
        return out

    @numba.njit(cache=True, fastmath=False)
    def _spine_scan_nb(b, max_b, log_surv, increments, dt, beta, bridge):
        npaths, nsteps = increments.shape
        for p in range(npaths):
            bp = b[p]
            mp = max_b[p]
            lp = log_surv[p]
            for j in range(nsteps):
                bn = bp + increments[p, j]
                if bridge:
                    ga = beta - bp
                    gb = beta - bn
                    if ga <= 0.0 or gb <= 0.0:
                        lp = -np.inf
                    else:
                        arg = -2.0 * ga * gb / dt
                        if arg > -745.0:  # else the factor underflows to exactly 1
                            lp += math.log1p(-math.exp(arg))
                else:
                    if bn > beta:
                        lp = -np.inf
                bp = bn
                if bn > mp:
                    mp = bn
            b[p] = bp
            max_b[p] = mp
            log_surv[p] = lp
        return b, max_b, log_surv

    gmc_weights = _gmc_weights_nb
    derivative_weights = _derivative_weights_nb
    barrier_weights = _barrier_weights_nb
    update_running_sup = _update_running_sup_nb
    box_mass_sums = _box_mass_sums_nb
    spine_scan = _spine_scan_nb
else:
    gmc_weights = _gmc_weights_np
    derivative_weights = _derivative_weights_np
    barrier_weights = _barrier_weights_np
    update_running_sup = _update_running_sup_np
    box_mass_sums = _box_mass_sums_np
    spine_scan = _spine_scan_np


IMPLEMENTATIONS = {
    "gmc_weights": (_gmc_weights_np, gmc_weights),
    "derivative_weights": (_derivative_weights_np, derivative_weights),
    "barrier_weights": (_barrier_weights_np, barrier_weights),
    "update_running_sup": (_update_running_sup_np, update_running_sup),
    "box_mass_sums": (_box_mass_sums_np, box_mass_sums),
    "spine_scan": (_spine_scan_np, spine_scan),
}
