"""Gaussian-tilted measures and their moments.

For a measure rho and parameters (t, theta) the tilted probability density is

    p_{t,theta}(x) = exp(theta . x - t |x|^2 / 2) rho(x) / Z(t, theta).

This module computes log Z, the barycenter a(t, theta) and the covariance
A(t, theta) of p_{t,theta} along three routes:

* closed form   -- Gaussian conjugacy, and truncated-normal algebra for the
                   coordinate-product factors (the hot path for drivers);
* quadrature    -- adaptive 1D integration per factor, abs tol ~1e-12; the
                   independent oracle for the closed forms and the only route
                   for factors without one;
* rejection     -- proposal N(theta/t, Id/t) thinned by rho/sup(rho); the
                   route for non-product specs (balls, affine images).

A t = 0 tilt is accepted only where the exponential moment is finite; the
divergent cases raise DivergentTilt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from . import streams
from .errors import DivergentTilt, InputValidationError, RejectionStall
from .measures import (BallSpec, GaussianFactor, GaussianSpec, MeasureSpec,
                       ProductSpec)
from .numerics import jackknife_se
from .reports import LemmaReport, gate

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
REJECTION = "rejection"

_QUAD_KW = dict(epsabs=1e-13, epsrel=1e-12, limit=300)
STALL_ACCEPTANCE = 1e-6
_STALL_MIN_PROPOSALS = 2_000_000


@dataclass(frozen=True)
class TiltState:
    """Moments of one tilted measure p_{t,theta}."""

    t: float
    theta: np.ndarray
    log_z: float
    mean: np.ndarray          # a(t, theta)
    cov: np.ndarray           # A(t, theta)
    method: str
    n_samples: int = 0
    se_mean: np.ndarray | None = None
    se_cov: np.ndarray | None = None


def _validate(spec: MeasureSpec, t: float, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, float))
    if theta.shape != (spec.dim,):
        raise InputValidationError(f"theta must have shape ({spec.dim},)")
    if not np.isfinite(theta).all() or not np.isfinite(t):
        raise InputValidationError("t and theta must be finite")
    if t < 0:
        raise InputValidationError("t must be >= 0")
    return theta


def _exact_base_state(spec: MeasureSpec) -> TiltState:
    return TiltState(0.0, np.zeros(spec.dim), 0.0, spec.mean(), spec.cov(), CLOSED_FORM)


def _check_rates(spec: ProductSpec, theta: np.ndarray) -> None:
    for j, f in enumerate(spec.factors):
        left, right = f.tilt_rates()
        if theta[j] >= right or -theta[j] >= left:
            raise DivergentTilt(
                f"t=0 tilt diverges on factor {j} ({f.tag}): theta={theta[j]:.3g} "
                f"outside (-{left:.3g}, {right:.3g})")


# ---------------------------------------------------------------------------
# Closed forms


def gaussian_tilt(dim: int, t: float, theta: np.ndarray):
    """Conjugate closed form: p_{t,theta} = N(theta/(1+t), Id/(1+t))."""
    tau = 1.0 + t
    log_z = -0.5 * dim * math.log(tau) + float(theta @ theta) / (2.0 * tau)
    return log_z, theta / tau, np.eye(dim) / tau


def product_tilt_table(spec: ProductSpec, t: float, thetas: np.ndarray):
    """Vectorized closed-form tilt moments for a batch of thetas at one t > 0.

    Returns (log_z (m,), mean (m, n), var (m, n)); var is the diagonal of A,
    which is diagonal for coordinate products.
    """
    thetas = np.asarray(thetas, float)
    m = thetas.shape[0]
    log_z = np.zeros(m)
    mean = np.empty((m, spec.dim))
    var = np.empty((m, spec.dim))
    for j, f in enumerate(spec.factors):
        if not f.has_closed_tilt:
            lz, mu, v = _factor_quad_batch(f, t, thetas[:, j])
        else:
            lz, mu, v = f.tilt_stats(t, thetas[:, j])
        log_z += lz
        mean[:, j] = mu
        var[:, j] = v
    return log_z, mean, var


def _factor_quad_batch(f, t, theta_col):
    lz = np.empty_like(theta_col)
    mu = np.empty_like(theta_col)
    v = np.empty_like(theta_col)
    for i, th in enumerate(theta_col):
        lz[i], mu[i], v[i] = factor_tilt_quadrature(f, t, float(th))
    return lz, mu, v


# ---------------------------------------------------------------------------
# Quadrature oracle


def factor_tilt_quadrature(f, t: float, theta: float):
    """(log Z, mean, var) of one tilted 1D factor by adaptive quadrature."""
    if t == 0.0:
        left, right = f.tilt_rates()
        if theta >= right or -theta >= left:
            raise DivergentTilt(f"t=0 tilt diverges on factor {f.tag}")

    def exponent(x):
        return float(theta * x - 0.5 * t * x * x + f.log_density(np.asarray(x, float)))

    # locate the mode of the concave exponent to anchor the integrand; the
    # mode sits near theta/t for t > 0, near 0 for t = 0, or at a finite
    # support endpoint
    if t > 0:
        center = theta / t
        width = 60.0 / math.sqrt(t) + 10.0
    else:
        center = 0.0
        width = 200.0
    lower = f.lo if np.isfinite(f.lo) else min(center, 0.0) - width
    upper = f.hi if np.isfinite(f.hi) else max(center, 0.0) + width
    res = minimize_scalar(lambda x: -exponent(x), bounds=(lower, upper),
                          method="bounded", options={"xatol": 1e-12})
    candidates = [float(res.x)]
    if np.isfinite(f.lo):
        candidates.append(float(f.lo))
    if np.isfinite(f.hi):
        candidates.append(float(f.hi))
    x_star = max(candidates, key=exponent)
    m_log = exponent(x_star)

    def h(x, k):
        return (x - x_star) ** k * np.exp(exponent(x) - m_log)

    a, b = f.lo, f.hi
    kw = dict(_QUAD_KW)
    i0 = quad(h, a, b, args=(0,), **kw)[0]
    i1 = quad(h, a, b, args=(1,), **kw)[0]
    i2 = quad(h, a, b, args=(2,), **kw)[0]
    if i0 <= 0 or not np.isfinite(i0):
        raise DivergentTilt(f"tilt normalization failed on factor {f.tag}")
    mean_c = i1 / i0
    var = i2 / i0 - mean_c * mean_c
    return m_log + math.log(i0), x_star + mean_c, max(var, 0.0)


def tilt_moments_quadrature(spec: MeasureSpec, t: float, theta) -> TiltState:
    """Per-factor adaptive quadrature; defined for coordinate products."""
    theta = _validate(spec, t, theta)
    if isinstance(spec, GaussianSpec):
        spec = ProductSpec([GaussianFactor() for _ in range(spec.dim)])
    if spec.factors is None:
        raise InputValidationError("quadrature route needs a coordinate product")
    log_z = 0.0
    mean = np.empty(spec.dim)
    var = np.empty(spec.dim)
    for j, f in enumerate(spec.factors):
        lz, mu, v = factor_tilt_quadrature(f, t, float(theta[j]))
        log_z += lz
        mean[j] = mu
        var[j] = v
    return TiltState(t, theta, float(log_z), mean, np.diag(var), QUADRATURE)


# ---------------------------------------------------------------------------
# Rejection route


def tilt_sample_batch(spec: MeasureSpec, t: float, theta, rng: np.random.Generator,
                      size: int):
    """Draw `size` points of p_{t,theta} by rejection.

    Proposal is the matched Gaussian N(theta/t, Id/t) thinned by
    rho(x)/sup rho; for t = 0 on a bounded-support spec the base measure
    proposes and the exponential factor thins.  Returns
    (samples, proposals, accepted); `accepted` counts every accepted proposal
    including surplus beyond `size`, so accepted/proposals estimates the true
    acceptance probability without truncation bias.  Raises RejectionStall
    when the measured acceptance falls below 1e-6.
    """
    theta = _validate(spec, t, theta)
    if isinstance(spec, GaussianSpec):  # conjugate: no rejection loop at all
        tau = 1.0 + t
        pts = theta / tau + rng.standard_normal((size, spec.dim)) / math.sqrt(tau)
        return pts, size, size
    if t == 0.0 and np.any(theta != 0.0):
        return _tilt_sample_base_proposal(spec, theta, rng, size)
    if t == 0.0:
        return spec.sample(rng, size), size, size

    peak = spec.peak_log_density()
    center = theta / t
    scale = 1.0 / math.sqrt(t)
    out = np.empty((size, spec.dim))
    filled = 0
    accepted = 0
    proposed = 0
    batch = max(4 * size, 4096)
    while filled < size:
        x = center + scale * rng.standard_normal((batch, spec.dim))
        log_ratio = spec.log_density(x) - peak
        keep = x[rng.random(batch) < np.exp(log_ratio)]
        take = min(len(keep), size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        accepted += len(keep)
        proposed += batch
        if proposed >= _STALL_MIN_PROPOSALS and (accepted / proposed) < STALL_ACCEPTANCE:
            raise RejectionStall(accepted / proposed, proposed, t, float(np.linalg.norm(theta)))
        batch = min(batch * 4, 1 << 21)
    return out, proposed, accepted


def _tilt_sample_base_proposal(spec, theta, rng, size):
    # t = 0, theta != 0 on a bounded-support spec: propose from the base
    # measure, thin by exp(theta.x - sup theta.x)
    if isinstance(spec, BallSpec):
        sup = spec.radius * float(np.linalg.norm(theta))
    else:
        raise InputValidationError("t=0 rejection tilts are supported on balls only")
    out = np.empty((size, spec.dim))
    filled = 0
    accepted = 0
    proposed = 0
    batch = max(4 * size, 4096)
    while filled < size:
        x = spec.sample(rng, batch)
        keep = x[rng.random(batch) < np.exp(x @ theta - sup)]
        take = min(len(keep), size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        accepted += len(keep)
        proposed += batch
        if proposed >= _STALL_MIN_PROPOSALS and (accepted / proposed) < STALL_ACCEPTANCE:
            raise RejectionStall(accepted / proposed, proposed, 0.0, float(np.linalg.norm(theta)))
        batch = min(batch * 4, 1 << 21)
    return out, proposed, accepted


def tilt_sample(spec: MeasureSpec, t: float, theta, stream) -> np.ndarray:
    """One exact draw from p_{t,theta}; `stream` is an RNG key tuple or int."""
    rng = streams.generator(*_as_key(stream))
    pts, _, _ = tilt_sample_batch(spec, t, theta, rng, 1)
    return pts[0]


def _as_key(stream):
    if isinstance(stream, tuple):
        return stream
    return (stream,)


def tilt_moments_rejection(spec: MeasureSpec, t: float, theta,
                           rng: np.random.Generator, n_samples: int = 1024) -> TiltState:
    """Monte Carlo tilt moments with batch-means standard errors."""
    theta = _validate(spec, t, theta)
    pts, proposed, accepted = tilt_sample_batch(spec, t, theta, rng, n_samples)
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / (n_samples - 1)

    n_blocks = 16
    usable = (n_samples // n_blocks) * n_blocks
    blocks = pts[:usable].reshape(n_blocks, -1, spec.dim)
    b_mean = blocks.mean(axis=1)
    b_cov = np.einsum("bki,bkj->bij", blocks - b_mean[:, None, :],
                      blocks - b_mean[:, None, :]) / (blocks.shape[1] - 1)
    se_mean = b_mean.std(axis=0, ddof=1) / math.sqrt(n_blocks)
    se_cov = b_cov.std(axis=0, ddof=1) / math.sqrt(n_blocks)

    # Z = E_proposal[rho] * (2 pi / t)^{n/2} exp(|theta|^2 / 2t) recovers log Z
    # from the acceptance rate
    acceptance = accepted / proposed
    if t > 0:
        log_z = (spec.peak_log_density() + math.log(acceptance)
                 + 0.5 * spec.dim * math.log(2.0 * math.pi / t)
                 + float(theta @ theta) / (2.0 * t))
    else:
        sup = spec.radius * float(np.linalg.norm(theta)) if isinstance(spec, BallSpec) else 0.0
        log_z = sup + math.log(acceptance)
    return TiltState(t, theta, log_z, mean, cov, REJECTION, n_samples, se_mean, se_cov)


# ---------------------------------------------------------------------------
# Dispatch


def tilt_moments(spec: MeasureSpec, t: float, theta, *, stream=None,
                 n_samples: int = 1024) -> TiltState:
    """Moments of p_{t,theta} along the best route for the measure.

    Gaussians and coordinate products are exact (closed form, with quadrature
    filling in factors without one); balls and affine images use rejection
    sampling and need a `stream` key.
    """
    theta = _validate(spec, t, theta)
    if t == 0.0 and not np.any(theta):
        return _exact_base_state(spec)
    if isinstance(spec, GaussianSpec):
        log_z, mean, cov = gaussian_tilt(spec.dim, t, theta)
        return TiltState(t, theta, log_z, mean, cov, CLOSED_FORM)
    if spec.factors is not None:
        if t == 0.0:
            _check_rates(spec, theta)
            return tilt_moments_quadrature(spec, t, theta)
        log_z, mean, var = product_tilt_table(spec, t, theta[None, :])
        method = CLOSED_FORM if all(f.has_closed_tilt for f in spec.factors) else QUADRATURE
        return TiltState(t, theta, float(log_z[0]), mean[0], np.diag(var[0]), method)
    if stream is None:
        raise InputValidationError(f"{spec.family} spec needs a stream for rejection moments")
    rng = streams.generator(*_as_key(stream))
    return tilt_moments_rejection(spec, t, theta, rng, n_samples)


# ---------------------------------------------------------------------------
# Conditional-covariance identity


def conditional_covariance_identity_check(spec: MeasureSpec, t: float, seed: int,
                                          n_outer: int = 1024, n_inner: int = 64,
                                          sigma: float = 4.0, atol: float = 1e-8) -> LemmaReport:
    """Check E A_t = E cov(X | X + sqrt(s) Z) with s = 1/t.

    Left side: tilt moments along simulated theta_t = t X + W_t.  Right side:
    a quadrature-free estimate -- for fresh pairs y = x + sqrt(s) z the
    conditional law of X given y is p_{t, t y}, sampled by rejection, and the
    empirical covariance of those draws estimates cov(X | y).  Both sides use
    disjoint streams, so the errors combine in quadrature.
    """
    if t <= 0:
        raise InputValidationError("t must be positive")
    dim = spec.dim

    covs = np.empty((n_outer, dim, dim))
    for i in range(n_outer):
        rng = streams.generator(seed, i, "cond-analytic")
        x = spec.sample(rng, 1)[0]
        theta = t * x + math.sqrt(t) * rng.standard_normal(dim)
        state = tilt_moments(spec, t, theta, stream=(seed, i, "cond-analytic-tilt"))
        covs[i] = state.cov
    lhs = covs.mean(axis=0)
    se_lhs = jackknife_se(covs, axis=0)

    cond = np.empty((n_outer, dim, dim))
    s = 1.0 / t
    for i in range(n_outer):
        rng = streams.generator(seed, i, "cond-empirical")
        x = spec.sample(rng, 1)[0]
        y = x + math.sqrt(s) * rng.standard_normal(dim)
        draws, _, _ = tilt_sample_batch(spec, t, t * y, rng, n_inner)
        mu = draws.mean(axis=0)
        cond[i] = (draws - mu).T @ (draws - mu) / (n_inner - 1)
    rhs = cond.mean(axis=0)
    se_rhs = jackknife_se(cond, axis=0)

    gap = np.abs(lhs - rhs)
    tol = sigma * np.sqrt(se_lhs**2 + se_rhs**2) + atol
    worst = tuple(int(i) for i in np.unravel_index(np.argmax(gap - tol), gap.shape))
    return gate(
        "conditional-covariance",
        float(gap[worst]),
        float(tol[worst]),
        stderr=float(np.sqrt(se_lhs**2 + se_rhs**2)[worst]),
        notes=f"t={t:g}, worst entry {worst}, n_outer={n_outer}, n_inner={n_inner}",
    )
