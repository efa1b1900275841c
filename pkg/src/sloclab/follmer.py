"""Change of clock r = t / (1 + t) and the rescaled process.

In the new frame the driving data become

    x_r = (1 - r) theta_t        (marginal law: r X + sqrt(r (1 - r)) Z)
    v_r = (1 + t) a_t - theta_t  (score-type drift, v_0 = 0)
    Gamma_r = (1 + t) A_t        (rescaled tilt covariance)

with r running over [0, 1).  The energy E |v_r|^2 equals the relative Fisher
information J(nu_r || N(0, r Id)) of the law nu_r of x_r, which this module
also computes by an independent density-convolution quadrature for product
measures.  The Gamma process satisfies

    (i)   (1 - r) Gamma_r = A_t                       (algebraic rescaling)
    (ii)  E v (x) v = (Id - E Gamma) / (1 - r),  0 <= E Gamma <= Id
    (iii) d/dr E v (x) v = E (Id - Gamma)^2 / (1 - r)^2
    (iv)  d/dr E Gamma = (E Gamma - E Gamma^2) / (1 - r)
    (v)   Gamma_r <= Id / r almost surely

and E |v_r|^2 <= 4 n / (1 - r)^2 on the whole catalog.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import ks_2samp
from scipy.special import ndtr

from . import streams
from .errors import InputValidationError
from .localization import PathEnsemble, _entrywise_gate
from .measures import GaussianSpec, MeasureSpec, UniformFactor
from .numerics import central_difference, fd_error_budget, jackknife_se
from .reports import EstimatorResult, LemmaReport, gate

_QUAD_KW = dict(epsabs=1e-12, epsrel=1e-11, limit=200)


@dataclass(frozen=True)
class FrameEnsemble:
    """Localization ensemble transported to the r-clock."""

    spec: MeasureSpec
    driver: str
    t: np.ndarray               # (K,) original times
    r: np.ndarray               # (K,) r = t / (1 + t)
    x: np.ndarray               # (m, K, n)
    v: np.ndarray               # (m, K, n)
    gamma: np.ndarray           # (m, K, n, n)
    cov_t: np.ndarray           # (m, K, n, n) original A_t, kept for (i)
    se_gamma: np.ndarray | None = None   # sampling error when tilts use rejection

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[-1]


def to_follmer(ensemble: PathEnsemble) -> FrameEnsemble:
    t = ensemble.grid.points
    scale = (1.0 + t)[None, :, None]
    se_gamma = None
    if ensemble.se_cov is not None:
        se_gamma = ensemble.se_cov * (1.0 + t)[None, :, None, None]
    return FrameEnsemble(
        spec=ensemble.spec, driver=ensemble.driver,
        t=t, r=ensemble.grid.r_points,
        x=ensemble.theta / scale,
        v=ensemble.mean * scale - ensemble.theta,
        gamma=ensemble.cov * (1.0 + t)[None, :, None, None],
        cov_t=ensemble.cov,
        se_gamma=se_gamma)


# ---------------------------------------------------------------------------
# Fisher energy


@dataclass(frozen=True)
class FisherCurve:
    r: np.ndarray
    value: np.ndarray     # E |v_r|^2
    stderr: np.ndarray
    bound: np.ndarray     # 4 n / (1 - r)^2


def fisher_energy(frame: FrameEnsemble, r: float | None = None):
    """Monte Carlo Fisher energy E |v_r|^2 with jackknife errors.

    With ``r`` omitted, returns the whole curve on the grid image; with a
    scalar ``r`` (which must be a grid point), returns one EstimatorResult
    whose notes record the a-priori bound 4 n / (1 - r)^2.
    """
    sq = (frame.v ** 2).sum(axis=-1)
    cur = FisherCurve(
        r=frame.r, value=sq.mean(axis=0), stderr=jackknife_se(sq, axis=0),
        bound=4.0 * frame.dim / (1.0 - frame.r) ** 2)
    if r is None:
        return cur
    k = int(np.argmin(np.abs(frame.r - r)))
    if abs(frame.r[k] - r) > 1e-6:
        raise InputValidationError(f"r={r} is not in the grid image")
    ok = cur.value[k] <= cur.bound[k] + 4.0 * cur.stderr[k]
    return EstimatorResult(
        float(cur.value[k]), float(cur.stderr[k]), frame.n_paths, "plug-in-mc",
        notes=f"bound 4n/(1-r)^2 = {cur.bound[k]:.6g}: {'holds' if ok else 'VIOLATED'}")


def check_fisher_bound(frame: FrameEnsemble, sigma: float = 4.0) -> LemmaReport:
    """E |v_r|^2 <= 4 n / (1 - r)^2 along the whole grid."""
    cur = fisher_energy(frame)
    gap = cur.value - cur.bound
    return _entrywise_gate("fisher-bound", gap, sigma * cur.stderr + 1e-9, cur.stderr,
                           notes=f"n={frame.dim}, n_paths={frame.n_paths},")


def check_fisher_monotone(frame: FrameEnsemble, sigma: float = 4.0,
                          atol: float = 1e-9) -> LemmaReport:
    """r -> E |v_r|^2 is non-decreasing (paired increments)."""
    sq = (frame.v ** 2).sum(axis=-1)
    d = sq[:, 1:] - sq[:, :-1]
    mean = d.mean(axis=0)
    se = jackknife_se(d, axis=0)
    return _entrywise_gate("fisher-monotone", -mean, sigma * se + atol, se,
                           notes="consecutive r increments,")


def _uniform_marginal_fisher(half_width: float, r: float) -> float:
    """J(nu_r || N(0, r)) for one uniform factor, via the closed-form density.

    nu_r is the convolution of uniform[-rw, rw] with N(0, r(1-r)); its density
    is a difference of Gaussian CDFs, differentiable in closed form.
    """
    w = half_width
    s = math.sqrt(r * (1.0 - r))

    def dens(y):
        return (ndtr((y + r * w) / s) - ndtr((y - r * w) / s)) / (2.0 * r * w)

    def ddens(y):
        pa = math.exp(-0.5 * ((y + r * w) / s) ** 2)
        pb = math.exp(-0.5 * ((y - r * w) / s) ** 2)
        return (pa - pb) / (2.0 * r * w * s * math.sqrt(2.0 * math.pi))

    def integrand(y):
        f = dens(y)
        if f < 1e-280:
            return 0.0
        return (ddens(y) / f + y / r) ** 2 * f

    hi = r * w + 10.0 * s
    val, _ = quad(integrand, -hi, hi, **_QUAD_KW)
    return val


def _generic_marginal_fisher(factor, r: float) -> float:
    """Nested-quadrature J(nu_r || N(0, r)) for one 1D factor.

    Slow but independent of the tilt machinery: both the density of
    r X + sqrt(r (1 - r)) Z and its derivative are computed as raw
    convolution integrals against the factor density.
    """
    s = math.sqrt(r * (1.0 - r))
    s2 = s * s
    lo_u = max(factor.lo, -40.0)
    hi_u = min(factor.hi, 40.0)
    norm = 1.0 / math.sqrt(2.0 * math.pi * s2)

    def kernel(y, u, moment):
        z = (y - r * u) / s
        base = norm * math.exp(-0.5 * z * z + factor.log_density(u))
        if moment == 0:
            return base
        return base * (r * u - y) / s2  # d/dy of the Gaussian kernel

    def integrand(y):
        f, _ = quad(lambda u: kernel(y, u, 0), lo_u, hi_u, **_QUAD_KW)
        if f < 1e-280:
            return 0.0
        df, _ = quad(lambda u: kernel(y, u, 1), lo_u, hi_u, **_QUAD_KW)
        return (df / f + y / r) ** 2 * f

    lo_y = r * lo_u - 10.0 * s if np.isfinite(factor.lo) else -r * 40 - 10 * s
    hi_y = r * hi_u + 10.0 * s if np.isfinite(factor.hi) else r * 40 + 10 * s
    val, _ = quad(integrand, lo_y, hi_y, **_QUAD_KW)
    return val


def marginal_fisher_information(spec: MeasureSpec, r: float) -> float:
    """J(nu_r || N(0, r Id)) by density quadrature; nu_r = law(r X + sqrt(r(1-r)) Z).

    Factorizes over coordinates for product measures; identically zero for the
    Gaussian (nu_r is exactly N(0, r Id)).
    """
    if not 0.0 < r < 1.0:
        raise InputValidationError("need 0 < r < 1")
    if isinstance(spec, GaussianSpec):
        return 0.0
    if spec.factors is None:
        raise InputValidationError("quadrature route needs a product (or Gaussian) measure")
    total = 0.0
    for f in spec.factors:
        if isinstance(f, UniformFactor):
            total += _uniform_marginal_fisher(f.half_width, r)
        else:
            total += _generic_marginal_fisher(f, r)
    return total


def check_fisher_identity(frame: FrameEnsemble, indices=None, sigma: float = 4.0,
                          quad_tol: float = 1e-6) -> LemmaReport:
    """E |v_r|^2 equals the marginal relative Fisher information J(nu_r || gamma_r).

    The left side is the simulated energy, the right side an independent
    density-convolution quadrature; disagreement beyond Monte Carlo error
    fails the check.
    """
    cur = fisher_energy(frame)
    if indices is None:
        targets = (0.2, 0.5, 0.8)
        indices = sorted({int(np.argmin(np.abs(frame.r - rt))) for rt in targets})
    subs = []
    for k in indices:
        r = float(frame.r[k])
        if not 0.0 < r < 1.0:
            continue
        j_quad = marginal_fisher_information(frame.spec, r)
        gap = abs(float(cur.value[k]) - j_quad)
        tol = sigma * float(cur.stderr[k]) + quad_tol
        subs.append(gate(f"fisher-identity@r={r:.4g}", gap, tol,
                         stderr=float(cur.stderr[k]),
                         notes=f"mc={cur.value[k]:.6g} quad={j_quad:.6g}"))
    if not subs:
        raise InputValidationError("no interior r values to check")
    worst = max(subs, key=lambda s: s.statistic - s.tolerance)
    verdict = "FAIL" if any(s.failed for s in subs) else "PASS"
    return LemmaReport("fisher-identity", verdict, worst.statistic, worst.stderr,
                       worst.tolerance, notes=f"{len(subs)} r values", sub=tuple(subs))


# ---------------------------------------------------------------------------
# Gamma process properties


def check_gamma_properties(frame: FrameEnsemble, sigma: float = 4.0,
                           atol: float = 1e-8) -> LemmaReport:
    """All five structural properties of the Gamma process, as sub-reports."""
    r = frame.r
    m, k_pts, n = frame.v.shape
    eye = np.eye(n)
    subs = []

    # (i) algebraic rescaling back to the t-frame covariance
    back = frame.gamma / (1.0 + frame.t)[None, :, None, None]
    gap_i = np.abs(back - frame.cov_t)
    subs.append(_entrywise_gate("gamma-rescaling", gap_i, 1e-13,
                                notes="float roundoff only,"))

    # (ii) E v (x) v = (Id - E Gamma) / (1 - r), entrywise, t > 0
    one_minus_r = 1.0 - r
    per_path = (np.einsum("mki,mkj->mkij", frame.v, frame.v)
                - (eye - frame.gamma) / one_minus_r[None, :, None, None])
    mean_ii = per_path.mean(axis=0)
    se_ii = jackknife_se(per_path, axis=0)
    subs.append(_entrywise_gate("score-covariance", np.abs(mean_ii),
                                sigma * se_ii + atol, se_ii))

    # (ii') 0 <= E Gamma <= Id in the spectral sense
    mean_g = frame.gamma.mean(axis=0)
    se_g = jackknife_se(frame.gamma, axis=0)
    eig = np.linalg.eigvalsh(0.5 * (mean_g + np.swapaxes(mean_g, -1, -2)))
    slack = sigma * n * se_g.max(axis=(-2, -1)) + atol
    gap_lo = -eig[..., 0]
    gap_hi = eig[..., -1] - 1.0
    lo_rep = _entrywise_gate("gamma-psd", gap_lo, slack, notes="lambda_min >= 0,")
    hi_rep = _entrywise_gate("gamma-below-identity", gap_hi, slack, notes="lambda_max <= 1,")
    subs.extend([lo_rep, hi_rep])

    if k_pts >= 5:
        # (iii) d/dr E v (x) v = E (Id - Gamma)^2 / (1 - r)^2
        vv = np.einsum("mki,mkj->mkij", frame.v, frame.v)
        res = eye - frame.gamma
        rhs3 = (res @ res) / one_minus_r[None, :, None, None] ** 2
        g3 = central_difference(vv, r, axis=1) - rhs3[:, 1:-1]
        mean3 = g3.mean(axis=0)
        se3 = jackknife_se(g3, axis=0)
        bud3 = fd_error_budget(vv.mean(axis=0), r, axis=0)
        subs.append(_entrywise_gate("score-energy-derivative", np.abs(mean3),
                                    sigma * (se3 + bud3) + atol, se3))

        # (iv) d/dr E Gamma = (E Gamma - E Gamma^2) / (1 - r)
        rhs4 = (frame.gamma - frame.gamma @ frame.gamma) / one_minus_r[None, :, None, None]
        g4 = central_difference(frame.gamma, r, axis=1) - rhs4[:, 1:-1]
        mean4 = g4.mean(axis=0)
        se4 = jackknife_se(g4, axis=0)
        bud4 = fd_error_budget(mean_g, r, axis=0)
        subs.append(_entrywise_gate("gamma-derivative", np.abs(mean4),
                                    sigma * (se4 + bud4) + atol, se4))

    # (v) Gamma_r <= Id / r pathwise (r > 0); rejection tilts get a noise
    # allowance like the t-clock spectral check
    lam = np.linalg.eigvalsh(
        0.5 * (frame.gamma + np.swapaxes(frame.gamma, -1, -2)))[..., -1]
    margin = lam[:, 1:] * r[None, 1:] - 1.0
    slack_v = np.full_like(margin, 1e-6)
    if frame.se_gamma is not None:
        se_scale = frame.se_gamma.max(axis=(-2, -1)) * n
        slack_v = slack_v + sigma * se_scale[:, 1:] * r[None, 1:]
    subs.append(_entrywise_gate("gamma-spectral-bound", margin, slack_v,
                                notes="pathwise r * lambda_max <= 1,"))

    failed = any(s.failed for s in subs)
    worst = max(subs, key=lambda s: s.statistic - s.tolerance)
    return LemmaReport("gamma-properties", "FAIL" if failed else "PASS",
                       worst.statistic, worst.stderr, worst.tolerance,
                       notes=f"{len(subs)} properties", sub=tuple(subs))


def check_xr_law(frame: FrameEnsemble, seed: int, r: float = 0.5,
                 sigma: float = 4.0, ks_level: float = 0.01,
                 atol: float = 1e-9) -> LemmaReport:
    """x_r is distributed as r X + sqrt(r (1 - r)) Z.

    Moment part: E x_r = 0 and Cov x_r = r Id at every grid time (the catalog
    is isotropic).  Law part: per-coordinate KS against a freshly synthesized
    independent sample at the grid point nearest the requested ``r``.
    """
    if frame.spec is None:
        raise InputValidationError("frame lacks a measure reference")
    r_target = float(r)
    r = frame.r
    m = frame.n_paths
    n = frame.dim

    mean = frame.x.mean(axis=0)
    se_mean = jackknife_se(frame.x, axis=0)
    r_mean = _entrywise_gate("xr-mean", np.abs(mean), sigma * se_mean + atol, se_mean)

    xx = np.einsum("mki,mkj->mkij", frame.x, frame.x)
    target = r[:, None, None] * np.eye(n)[None]
    gap_cov = np.abs(xx.mean(axis=0) - target)
    se_cov = jackknife_se(xx, axis=0)
    r_cov = _entrywise_gate("xr-covariance", gap_cov, sigma * se_cov + atol, se_cov)

    k = int(np.argmin(np.abs(r - r_target)))
    rk = float(r[k])
    fresh_x = frame.spec.sample(streams.generator(seed, "xr-law", "x"), m)
    fresh_z = streams.generator(seed, "xr-law", "z").standard_normal((m, n))
    synth = rk * fresh_x + math.sqrt(rk * (1.0 - rk)) * fresh_z
    pvals = np.array([ks_2samp(frame.x[:, k, j], synth[:, j]).pvalue for j in range(n)])
    worst = int(np.argmin(pvals))
    r_ks = gate("xr-ks", float(-pvals[worst]), float(-ks_level),
                notes=f"min p-value {pvals[worst]:.4f} at r={rk:.4g}, level {ks_level}")

    failed = r_mean.failed or r_cov.failed or r_ks.failed
    return LemmaReport("xr-law", "FAIL" if failed else "PASS",
                       r_cov.statistic, r_cov.stderr, r_cov.tolerance,
                       notes=f"n_paths={m}", sub=(r_mean, r_cov, r_ks))
