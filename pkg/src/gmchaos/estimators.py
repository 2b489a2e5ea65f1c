"""Moment and scaling estimators plus the Kahane comparison harness.

Everything here is a pure fold over replica outputs: the inputs are
plain arrays of region masses produced elsewhere, so the estimators are
trivially parallel and deterministic.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSampleError, InsufficientScalesError

SENETA_HEYDE_CONSTANT = math.sqrt(2.0 / math.pi)


@dataclass
class ExperimentReport:
    """Tabular estimator output with enough metadata to reproduce it."""

    name: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row.get(c)) for c in cols])

    def to_json(self, path=None):
        payload = {
            "name": self.name,
            "metadata": self.metadata,
            "warnings": self.warnings,
            "rows": self.rows,
        }
        text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not jsonable: {type(v)}")


def xi(q: float, d: int) -> float:
    """Power-law spectrum exponent 2dq - dq^2 (paper-backed for q < 1)."""
    return 2.0 * d * q - d * q * q


def moment_estimate(masses, q: float):
    """Sample mean of mass^q with a jackknife standard error.

    Returns (estimate, se, n_nonpositive): nonpositive masses are
    excluded from the mean and counted separately (they would blow up
    negative moments).
    """
    masses = np.asarray(masses, dtype=float)
    if masses.size < 100:
        raise ValueError("need a sample of at least 100 masses")
    pos = masses[masses > 0]
    n_bad = int(masses.size - pos.size)
    if pos.size == 0:
        raise DegenerateSampleError("all masses are nonpositive")
    vals = pos**q
    n = vals.size
    est = float(vals.mean())
    if n > 1:
        loo = (vals.sum() - vals) / (n - 1)
        se = float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    else:
        se = math.nan
    return est, se, n_bad


def spectrum_fit(masses_by_scale: dict, q: float, d: int):
    """OLS slope of log E[mass(lambda A)^q] against log lambda, vs xi(q).

    ``masses_by_scale`` maps lambda -> per-replica masses (replica-aligned
    across scales).  Returns (slope, se, target); the SE jackknifes whole
    replicas when the samples align, else falls back to the OLS residual
    formula.
    """
    scales = sorted(masses_by_scale)
    samples = [np.asarray(masses_by_scale[s], dtype=float) for s in scales]
    valid = [i for i, s in enumerate(samples) if np.any(s > 0)]
    if len(valid) < 4:
        raise InsufficientScalesError(f"need >= 4 scales with mass, got {len(valid)}")
    lam = np.array([scales[i] for i in valid], dtype=float)
    if lam.max() / lam.min() < 4.0 - 1e-9:
        raise InsufficientScalesError("scales must span at least two octaves")
    samples = [samples[i] for i in valid]

    def slope_of(arrs):
        y = np.array([math.log(np.mean(np.clip(a, 0.0, None) ** q)) for a in arrs])
        x = np.log(lam)
        return float(np.polyfit(x, y, 1)[0]), y

    slope, y = slope_of(samples)
    sizes = {a.size for a in samples}
    if len(sizes) == 1 and samples[0].size > 1:
        n = samples[0].size
        loo = np.empty(n)
        keep = np.ones(n, dtype=bool)
        for i in range(n):
            keep[i] = False
            loo[i] = slope_of([a[keep] for a in samples])[0]
            keep[i] = True
        se = float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    else:
        x = np.log(lam)
        resid = y - np.polyval(np.polyfit(x, y, 1), x)
        dof = max(len(x) - 2, 1)
        se = float(math.sqrt(resid @ resid / dof / np.sum((x - x.mean()) ** 2)))
    return slope, se, xi(q, d)


def seneta_ratio_series(paired_masses: dict) -> ExperimentReport:
    """Median and IQR of sqrt(t) M_t^{sqrt(2d)}(A) / M'_t(A) across a t grid.

    ``paired_masses`` maps t -> (seneta_heyde_masses, derivative_masses)
    from common replicas (nested field trajectories).  Replicas with a
    nonpositive derivative mass are excluded and counted.  Medians, not
    means: the convergence is in probability and the tails are heavy.
    """
    report = ExperimentReport(name="seneta-ratio", metadata={
        "reference": SENETA_HEYDE_CONSTANT,
    })
    for t in sorted(paired_masses):
        num, den = paired_masses[t]
        num = np.asarray(num, dtype=float)
        den = np.asarray(den, dtype=float)
        ok = den > 0
        excluded = int(np.size(den) - ok.sum())
        ratios = num[ok] / den[ok]
        if ratios.size == 0:
            report.warnings.append(f"t={t}: no usable replicas")
            continue
        med = float(np.median(ratios))
        if ratios.size > 1:
            q1, q3 = np.percentile(ratios, [25, 75])
        else:
            q1 = q3 = math.nan
            report.warnings.append(f"t={t}: single replica, IQR undefined")
        report.rows.append({
            "t": float(t),
            "n": int(ratios.size),
            "n_excluded": excluded,
            "median_ratio": med,
            "iqr_lo": float(q1),
            "iqr_hi": float(q3),
            "reference": SENETA_HEYDE_CONSTANT,
            "distance": abs(med - SENETA_HEYDE_CONSTANT),
        })
    return report


# ---------------------------------------------------------------------------
# Kahane convexity comparator
# ---------------------------------------------------------------------------

def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -1e-10 * max(abs(vals.max()), 1.0):
        raise ValueError("covariance is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def lognormal_square_moment(cov: np.ndarray) -> float:
    """Exact E[(sum_i e^{X_i - v_i/2})^2] = sum_ij e^{cov_ij} for centered Gaussians."""
    return float(np.exp(cov).sum())


def kahane_check(cov_a, cov_b, convex_form="square", n_samples: int = 100_000,
                 seed: int = 0, s: float = 1.0) -> ExperimentReport:
    """Monte Carlo comparison of E[F(sum_i e^{X_i - v_i/2})] under two covariances.

    Requires cov_a <= cov_b entrywise (both PSD); for convex F the A-side
    expectation must not exceed the B-side.  Common standard normals
    drive both sides, which tightens the SE of the difference.  For the
    square form the exact lognormal moments are reported as well.
    """
    a = np.asarray(cov_a, dtype=float)
    b = np.asarray(cov_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("covariances must be square matrices of equal shape")
    if a.shape[0] > 8:
        raise ValueError("comparator meant for dimension <= 8")
    if np.any(a > b + 1e-12):
        raise ValueError("entrywise domination cov_a <= cov_b violated")
    ra = _psd_sqrt(a)
    rb = _psd_sqrt(b)
    if convex_form == "square":
        def F(x):
            return x * x
    elif convex_form == "exp_negative":
        def F(x):
            return np.exp(-s * x)
    else:
        raise ValueError(f"unknown convex form {convex_form!r}")

    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xA11CE], dtype=np.uint64)))
    dim = a.shape[0]
    va = np.diag(a)
    vb = np.diag(b)
    fa_sum = fb_sum = 0.0
    fa_sq = fb_sq = 0.0
    diff_sum = diff_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(200_000, n_samples - done)
        z = rng.standard_normal((m, dim))
        sa = np.exp(z @ ra.T - 0.5 * va).sum(axis=1)
        sb = np.exp(z @ rb.T - 0.5 * vb).sum(axis=1)
        fa = F(sa)
        fb = F(sb)
        fa_sum += fa.sum(); fa_sq += (fa * fa).sum()
        fb_sum += fb.sum(); fb_sq += (fb * fb).sum()
        dd = fb - fa
        diff_sum += dd.sum(); diff_sq += (dd * dd).sum()
        done += m
    n = n_samples
    mean_a = fa_sum / n
    mean_b = fb_sum / n
    se_a = math.sqrt(max(fa_sq / n - mean_a**2, 0.0) / n)
    se_b = math.sqrt(max(fb_sq / n - mean_b**2, 0.0) / n)
    mean_d = diff_sum / n
    se_d = math.sqrt(max(diff_sq / n - mean_d**2, 0.0) / n)
    holds = mean_d >= -4.0 * se_d

    report = ExperimentReport(name="kahane-check", metadata={
        "convex_form": convex_form, "s": s, "n_samples": n_samples, "dim": dim,
    })
    row = {
        "side_a": mean_a, "se_a": se_a,
        "side_b": mean_b, "se_b": se_b,
        "difference": mean_d, "se_difference": se_d,
        "verdict": "holds" if holds else "violated",
    }
    if convex_form == "square":
        row["exact_a"] = lognormal_square_moment(a)
        row["exact_b"] = lognormal_square_moment(b)
    report.rows.append(row)
    return report


def random_dominated_covariances(rng: np.random.Generator, dim: int):
    """A random PSD pair with cov_a <= cov_b entrywise (rank-one nonnegative bump)."""
    g = rng.standard_normal((dim, dim))
    cov_a = g @ g.T / dim
    v = rng.uniform(0.1, 1.0, size=dim)
    cov_b = cov_a + rng.uniform(0.2, 1.0) * np.outer(v, v)
    return cov_a, cov_b
