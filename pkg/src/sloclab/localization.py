"""Stochastic localization driver and its verification checks.

The localization process theta_t solves d theta_t = dW_t + a(t, theta_t) dt,
theta_0 = 0, where a(t, theta) is the barycenter of the tilted measure
p_{t,theta}.  It is equal in law to the explicit process t X + W_t with
X ~ rho independent of W; both representations are implemented:

* ``direct``  -- theta_t = t X + W_t, exact at every grid time;
* ``sde``     -- Euler-Maruyama on the drift form.

Both drivers derive Brownian increments from the stream key
``(seed, path_index, "w")``, so a common path index means common randomness
and sharp paired comparisons.

Along each path the tilt moments (a, A, log Z) are recorded at every grid
time; the checks below verify, with Monte Carlo error bars, the identities

    E A_t + E a_t (x) a_t = Id                    (conservation of variance)
    d/dt E A_t = -E A_t^2                          (covariance decay)
    A_t <= Id / t almost surely                    (spectral bound)
    E (a_t - theta_t/(1+t)) (x) theta_t = 0        (orthogonality)
    E p_{t,theta_t}(x) = rho(x)                    (density martingale)

plus the diagnostic ratio sup_t E tr[A_t^2] / n.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from . import streams
from .errors import GridMismatch, InputValidationError
from .measures import GaussianSpec, MeasureSpec
from .numerics import central_difference, fd_error_budget, jackknife_se
from .reports import LemmaReport, gate, info
from .tilt import product_tilt_table, tilt_moments_rejection

MAX_STEP_RATIO = 1.5


# ---------------------------------------------------------------------------
# Time grids


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing grid 0 = t_0 < t_1 < ... < t_{K-1}."""

    points: np.ndarray
    kind: str = "geometric"

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim != 1 or len(pts) < 2:
            raise InputValidationError("grid needs at least two points")
        if pts[0] != 0.0:
            raise InputValidationError("grid must start at t = 0")
        if not np.isfinite(pts).all() or (np.diff(pts) <= 0).any():
            raise InputValidationError("grid points must be finite and strictly increasing")
        if self.kind == "geometric" and len(pts) > 3:
            ratios = pts[2:] / pts[1:-1]
            if ratios.max() > MAX_STEP_RATIO + 1e-9:
                raise InputValidationError(
                    f"geometric step ratio {ratios.max():.3f} exceeds {MAX_STEP_RATIO}")
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def r_points(self) -> np.ndarray:
        """Image of the grid under r = t / (1 + t)."""
        return self.points / (1.0 + self.points)


def make_geometric(t_min: float = 0.01, t_max: float = 100.0, n_points: int = 40,
                   include=()) -> TimeGrid:
    """Geometric grid on [t_min, t_max] with t = 0 prepended.

    ``include`` merges extra anchor times (each in [t_min, t_max]) into the
    grid, e.g. to place checks at exact r values.
    """
    if t_min <= 0:
        raise InputValidationError("t_min must be positive; t = 0 is prepended automatically")
    if t_max <= t_min or n_points < 2:
        raise InputValidationError("need t_max > t_min and n_points >= 2")
    pts = np.geomspace(t_min, t_max, n_points)
    extra = np.asarray(list(include), float)
    if extra.size:
        if extra.min() < t_min or extra.max() > t_max:
            raise InputValidationError("include anchors must lie in [t_min, t_max]")
        pts = np.unique(np.concatenate([pts, extra]))
        keep = np.concatenate([[True], np.diff(pts) / pts[:-1] > 1e-9])
        pts = pts[keep]
    return TimeGrid(np.concatenate([[0.0], pts]), "geometric")


def make_uniform(t_max: float, n_steps: int) -> TimeGrid:
    if t_max <= 0 or n_steps < 1:
        raise InputValidationError("need t_max > 0 and n_steps >= 1")
    return TimeGrid(np.linspace(0.0, t_max, n_steps + 1), "uniform")


# ---------------------------------------------------------------------------
# Paths and ensembles


@dataclass(frozen=True)
class LocalizationPath:
    """One realized localization path with its tilt moments."""

    grid: TimeGrid
    theta: np.ndarray           # (K, n)
    mean: np.ndarray            # a(t_k, theta_k), (K, n)
    cov: np.ndarray             # A(t_k, theta_k), (K, n, n)
    log_z: np.ndarray           # (K,)
    driver: str
    x: np.ndarray | None = None  # the conditioning sample (direct driver)
    se_cov: np.ndarray | None = None


@dataclass(frozen=True)
class PathEnsemble:
    """Path-indexed arrays for a whole ensemble (axis 0 = path)."""

    spec: MeasureSpec
    grid: TimeGrid
    driver: str
    theta: np.ndarray           # (m, K, n)
    mean: np.ndarray            # (m, K, n)
    cov: np.ndarray             # (m, K, n, n)
    log_z: np.ndarray           # (m, K)
    x: np.ndarray | None = None
    se_cov: np.ndarray | None = None
    _stats_cache: list = field(default_factory=list, repr=False, compare=False)

    @property
    def n_paths(self) -> int:
        return self.theta.shape[0]

    def path(self, i: int) -> LocalizationPath:
        return LocalizationPath(
            self.grid, self.theta[i], self.mean[i], self.cov[i], self.log_z[i],
            self.driver, None if self.x is None else self.x[i],
            None if self.se_cov is None else self.se_cov[i])

    def stats(self) -> "EnsembleStats":
        if not self._stats_cache:
            self._stats_cache.append(ensemble_stats(self))
        return self._stats_cache[0]


def _as_key(stream):
    return stream if isinstance(stream, tuple) else (stream,)


def _brownian(key, dt: np.ndarray, dim: int) -> np.ndarray:
    incr = streams.generator(*key, "w").standard_normal((len(dt), dim))
    return incr * np.sqrt(dt)[:, None]


def _drift_batch(spec, t, thetas, keys, step_index, tilt_samples):
    if t == 0.0:
        # theta = 0 at t = 0; the drift is the barycenter, zero by centering
        return np.tile(spec.mean(), (len(thetas), 1))
    if isinstance(spec, GaussianSpec):
        return thetas / (1.0 + t)
    if spec.factors is not None:
        _, mean, _ = product_tilt_table(spec, t, thetas)
        return mean
    out = np.empty_like(thetas)
    for i, key in enumerate(keys):
        rng = streams.generator(*key, "drift", step_index)
        out[i] = tilt_moments_rejection(spec, t, thetas[i], rng, tilt_samples).mean
    return out


def _tilt_tables(spec, grid, theta, keys, tilt_samples, workers):
    """Tilt moments at every (path, grid time).  theta is (m, K, n)."""
    m, k_pts, n = theta.shape
    t = grid.points
    mean = np.empty((m, k_pts, n))
    cov = np.empty((m, k_pts, n, n))
    log_z = np.empty((m, k_pts))
    se_cov = None

    # t = 0: theta = 0 and the tilted measure is the base measure
    mean[:, 0] = spec.mean()
    cov[:, 0] = spec.cov()
    log_z[:, 0] = 0.0

    if isinstance(spec, GaussianSpec):
        tau = 1.0 + t[1:]
        mean[:, 1:] = theta[:, 1:] / tau[None, :, None]
        cov[:, 1:] = np.eye(n) / tau[:, None, None]
        log_z[:, 1:] = (-0.5 * n * np.log(tau)
                        + 0.5 * (theta[:, 1:] ** 2).sum(axis=-1) / tau)
        return mean, cov, log_z, se_cov

    if spec.factors is not None:
        cov[:, 1:] = 0.0
        idx = np.arange(n)
        for k in range(1, k_pts):
            lz, mu, var = product_tilt_table(spec, t[k], theta[:, k])
            log_z[:, k] = lz
            mean[:, k] = mu
            cov[:, k, idx, idx] = var
        return mean, cov, log_z, se_cov

    se_cov = np.zeros((m, k_pts, n, n))

    def fill(i):
        for k in range(1, k_pts):
            rng = streams.generator(*keys[i], "tilt", k)
            st = tilt_moments_rejection(spec, t[k], theta[i, k], rng, tilt_samples)
            mean[i, k] = st.mean
            cov[i, k] = st.cov
            log_z[i, k] = st.log_z
            se_cov[i, k] = st.se_cov

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(m)))
    else:
        for i in range(m):
            fill(i)
    return mean, cov, log_z, se_cov


def _simulate(spec, grid, keys, driver, tilt_samples, workers):
    t = grid.points
    k_pts = len(t)
    dt = np.diff(t)
    n = spec.dim
    m = len(keys)

    incr = np.empty((m, k_pts - 1, n))
    for i, key in enumerate(keys):
        incr[i] = _brownian(key, dt, n)

    if driver == "direct":
        x = np.empty((m, n))
        for i, key in enumerate(keys):
            x[i] = spec.sample(streams.generator(*key, "x"), 1)[0]
        w = np.concatenate([np.zeros((m, 1, n)), np.cumsum(incr, axis=1)], axis=1)
        theta = t[None, :, None] * x[:, None, :] + w
    elif driver == "sde":
        x = None
        theta = np.empty((m, k_pts, n))
        theta[:, 0] = 0.0
        for k in range(k_pts - 1):
            a_k = _drift_batch(spec, t[k], theta[:, k], keys, k, tilt_samples)
            theta[:, k + 1] = theta[:, k] + a_k * dt[k] + incr[:, k]
    else:
        raise InputValidationError(f"unknown driver {driver!r}")

    mean, cov, log_z, se_cov = _tilt_tables(spec, grid, theta, keys, tilt_samples, workers)
    return PathEnsemble(spec, grid, driver, theta, mean, cov, log_z, x, se_cov)


def drive_direct(spec: MeasureSpec, grid: TimeGrid, stream) -> LocalizationPath:
    """Exact realization theta_t = t X + W_t with tilt moments at grid times."""
    ens = _simulate(spec, grid, [_as_key(stream)], "direct", 1024, 1)
    return ens.path(0)


def drive_sde(spec: MeasureSpec, grid: TimeGrid, stream,
              tilt_samples: int = 1024) -> LocalizationPath:
    """Euler-Maruyama realization of d theta = dW + a(t, theta) dt."""
    ens = _simulate(spec, grid, [_as_key(stream)], "sde", tilt_samples, 1)
    return ens.path(0)


def simulate_ensemble(spec: MeasureSpec, grid: TimeGrid, n_paths: int, seed: int,
                      driver: str = "direct", *, tilt_samples: int = 1024,
                      workers: int = 1, salt: str = "") -> PathEnsemble:
    """Simulate ``n_paths`` independent paths.

    Path i uses the stream key ``(seed, i)`` (or ``(seed, salt, i)``), so its
    arrays agree bitwise with ``drive_direct(spec, grid, (seed, i))`` and the
    two drivers share Brownian increments for equal keys.
    """
    if n_paths < 1:
        raise InputValidationError("n_paths must be >= 1")
    keys = [(seed, salt, i) if salt else (seed, i) for i in range(n_paths)]
    return _simulate(spec, grid, keys, driver, tilt_samples, max(1, workers))


def stack_paths(paths) -> PathEnsemble:
    """Assemble individually driven paths into an ensemble."""
    paths = list(paths)
    if not paths:
        raise InputValidationError("no paths given")
    grid = paths[0].grid
    for p in paths[1:]:
        if len(p.grid.points) != len(grid.points) or (p.grid.points != grid.points).any():
            raise GridMismatch("paths were simulated on different grids")
        if p.driver != paths[0].driver:
            raise GridMismatch("paths mix drivers")
    x = None
    if all(p.x is not None for p in paths):
        x = np.stack([p.x for p in paths])
    se = None
    if all(p.se_cov is not None for p in paths):
        se = np.stack([p.se_cov for p in paths])
    return PathEnsemble(
        spec=None, grid=grid, driver=paths[0].driver,
        theta=np.stack([p.theta for p in paths]),
        mean=np.stack([p.mean for p in paths]),
        cov=np.stack([p.cov for p in paths]),
        log_z=np.stack([p.log_z for p in paths]),
        x=x, se_cov=se)


# ---------------------------------------------------------------------------
# Ensemble statistics


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time ensemble means with jackknife standard errors."""

    t: np.ndarray
    r: np.ndarray
    n_paths: int
    dim: int
    mean_a: np.ndarray            # (K, n)
    mean_cov: np.ndarray          # (K, n, n)  E A_t
    se_cov: np.ndarray
    mean_outer: np.ndarray        # (K, n, n)  E a (x) a
    se_outer: np.ndarray
    mean_decomp: np.ndarray       # (K, n, n)  E[A + a (x) a]
    se_decomp: np.ndarray
    mean_tr_cov: np.ndarray       # (K,)
    se_tr_cov: np.ndarray
    mean_tr_cov_sq: np.ndarray    # (K,)  E tr[A^2]
    se_tr_cov_sq: np.ndarray
    eig_min: np.ndarray           # (K,) of E A_t
    eig_max: np.ndarray
    deriv_gap_mean: np.ndarray | None    # (K-2, n, n): d/dt E A + E A^2
    deriv_gap_se: np.ndarray | None
    deriv_budget: np.ndarray | None
    deriv_tr_gap_mean: np.ndarray | None
    deriv_tr_gap_se: np.ndarray | None
    deriv_tr_budget: np.ndarray | None


def ensemble_stats(ensemble) -> EnsembleStats:
    """Reduce an ensemble (or list of paths) to per-time statistics."""
    if isinstance(ensemble, (list, tuple)):
        ensemble = stack_paths(ensemble)
    a = ensemble.mean
    cov = ensemble.cov
    t = ensemble.grid.points
    m, k_pts, n = a.shape

    outer = np.einsum("mki,mkj->mkij", a, a)
    decomp = cov + outer
    tr_cov = np.trace(cov, axis1=-2, axis2=-1)
    cov_sq = cov @ cov
    tr_cov_sq = np.trace(cov_sq, axis1=-2, axis2=-1)

    mean_cov = cov.mean(axis=0)
    eig = np.linalg.eigvalsh(0.5 * (mean_cov + np.swapaxes(mean_cov, -1, -2)))

    deriv = (None,) * 6
    if k_pts >= 5:
        gap = central_difference(cov, t, axis=1) + cov_sq[:, 1:-1]
        tr_gap = central_difference(tr_cov, t, axis=1) + tr_cov_sq[:, 1:-1]
        deriv = (
            gap.mean(axis=0), jackknife_se(gap, axis=0),
            fd_error_budget(mean_cov, t, axis=0),
            tr_gap.mean(axis=0), jackknife_se(tr_gap, axis=0),
            fd_error_budget(tr_cov.mean(axis=0), t, axis=0),
        )

    return EnsembleStats(
        t=t, r=ensemble.grid.r_points, n_paths=m, dim=n,
        mean_a=a.mean(axis=0),
        mean_cov=mean_cov, se_cov=jackknife_se(cov, axis=0),
        mean_outer=outer.mean(axis=0), se_outer=jackknife_se(outer, axis=0),
        mean_decomp=decomp.mean(axis=0), se_decomp=jackknife_se(decomp, axis=0),
        mean_tr_cov=tr_cov.mean(axis=0), se_tr_cov=jackknife_se(tr_cov, axis=0),
        mean_tr_cov_sq=tr_cov_sq.mean(axis=0), se_tr_cov_sq=jackknife_se(tr_cov_sq, axis=0),
        eig_min=eig[..., 0], eig_max=eig[..., -1],
        deriv_gap_mean=deriv[0], deriv_gap_se=deriv[1], deriv_budget=deriv[2],
        deriv_tr_gap_mean=deriv[3], deriv_tr_gap_se=deriv[4], deriv_tr_budget=deriv[5],
    )


def _coerce_stats(obj) -> EnsembleStats:
    if isinstance(obj, EnsembleStats):
        return obj
    if isinstance(obj, PathEnsemble):
        return obj.stats()
    return ensemble_stats(obj)


def _entrywise_gate(check_id, gap, tol, se=None, notes="") -> LemmaReport:
    gap = np.asarray(gap, float)
    tol = np.broadcast_to(np.asarray(tol, float), gap.shape)
    worst = np.unravel_index(np.argmax(gap - tol), gap.shape)
    stderr = 0.0 if se is None else float(np.broadcast_to(se, gap.shape)[worst])
    where = f" worst at index {tuple(int(v) for v in worst)}"
    return gate(check_id, float(gap[worst]), float(tol[worst]), stderr=stderr,
                notes=notes + where)


# ---------------------------------------------------------------------------
# Checks


def check_variance_decomposition(stats, sigma: float = 4.0, atol: float = 1e-8) -> LemmaReport:
    """E A_t + E a_t (x) a_t = Id at every grid time, entrywise."""
    stats = _coerce_stats(stats)
    target = np.eye(stats.dim)
    gap = np.abs(stats.mean_decomp - target)
    tol = sigma * stats.se_decomp + atol
    return _entrywise_gate("variance-decomposition", gap, tol, stats.se_decomp,
                           notes=f"n_paths={stats.n_paths},")


def check_derivative_identity(stats, sigma: float = 4.0, atol: float = 1e-8) -> LemmaReport:
    """d/dt E A_t = -E A_t^2 by non-uniform central differences.

    Tolerance is sigma * (stderr + discretization budget); the budget comes
    from step-doubling Richardson on the ensemble mean curve, so it is
    conservative where the mean curve is noisy.
    """
    stats = _coerce_stats(stats)
    if stats.deriv_gap_mean is None:
        raise InputValidationError("need at least 5 grid times for the derivative check")
    tol = sigma * (stats.deriv_gap_se + stats.deriv_budget) + atol
    mat = _entrywise_gate("derivative-identity", np.abs(stats.deriv_gap_mean), tol,
                          stats.deriv_gap_se)
    tol_tr = sigma * (stats.deriv_tr_gap_se + stats.deriv_tr_budget) + atol
    tr = _entrywise_gate("derivative-identity-trace", np.abs(stats.deriv_tr_gap_mean),
                         tol_tr, stats.deriv_tr_gap_se)
    verdict = "PASS" if not (mat.failed or tr.failed) else "FAIL"
    return LemmaReport("derivative-identity", verdict, mat.statistic, mat.stderr,
                       mat.tolerance, notes=f"interior times {len(stats.t) - 2}",
                       sub=(mat, tr))


def check_spectral_bound(ensemble: PathEnsemble, sigma: float = 3.0,
                         slack_exact: float = 1e-6) -> LemmaReport:
    """Pathwise bound t * lambda_max(A_t) <= 1 at every t > 0.

    Exact tilt routes get the flat slack ``slack_exact``; rejection-based
    states get sigma times their covariance standard error on top.
    """
    t = ensemble.grid.points
    lam = np.linalg.eigvalsh(
        0.5 * (ensemble.cov + np.swapaxes(ensemble.cov, -1, -2)))[..., -1]
    margin = lam[:, 1:] * t[None, 1:] - 1.0
    slack = np.full_like(margin, slack_exact)
    if ensemble.se_cov is not None:
        se_scale = ensemble.se_cov.max(axis=(-2, -1)) * ensemble.cov.shape[-1]
        slack = slack + sigma * se_scale[:, 1:] * t[None, 1:]
    bad = margin > slack
    worst = np.unravel_index(np.argmax(margin - slack), margin.shape)
    notes = f"paths={ensemble.n_paths}, violations={int(bad.sum())}"
    if bad.any():
        ids = sorted(set(np.where(bad)[0].tolist()))[:8]
        notes += f", offending paths {ids}"
    return gate("spectral-bound", float(margin[worst]), float(slack[worst]), notes=notes)


def trace_square_ratio(stats) -> LemmaReport:
    """Diagnostic: sup over the grid of E tr[A_t^2] / n (INFO, never gates)."""
    stats = _coerce_stats(stats)
    ratio = stats.mean_tr_cov_sq / stats.dim
    k = int(np.argmax(ratio))
    return info("trace-ratio", float(ratio[k]), float(stats.se_tr_cov_sq[k] / stats.dim),
                notes=f"max at t={stats.t[k]:g}; dimension-free bound expected O(1)")


def check_orthogonality(ensemble: PathEnsemble, sigma: float = 4.0,
                        atol: float = 1e-9) -> LemmaReport:
    """E (a_t - theta_t/(1+t)) (x) theta_t = 0 entrywise at every grid time."""
    t = ensemble.grid.points
    resid = ensemble.mean - ensemble.theta / (1.0 + t)[None, :, None]
    stat = np.einsum("mki,mkj->mkij", resid, ensemble.theta)
    mean = stat.mean(axis=0)
    se = jackknife_se(stat, axis=0)
    return _entrywise_gate("orthogonality", np.abs(mean), sigma * se + atol, se,
                           notes=f"n_paths={ensemble.n_paths},")


def check_monotone_trace(ensemble: PathEnsemble, sigma: float = 4.0,
                         atol: float = 1e-9) -> LemmaReport:
    """t -> E tr A_t is non-increasing (paired consecutive differences)."""
    tr = np.trace(ensemble.cov, axis1=-2, axis2=-1)
    d = tr[:, 1:] - tr[:, :-1]
    mean = d.mean(axis=0)
    se = jackknife_se(d, axis=0)
    return _entrywise_gate("monotone-trace", mean, sigma * se + atol, se,
                           notes="consecutive grid increments,")


def check_density_martingale(spec: MeasureSpec, grid: TimeGrid, n_paths: int,
                             seed: int, x_grid=None, sigma: float = 4.0,
                             atol: float = 1e-9) -> LemmaReport:
    """E p_{t, theta_t}(x) = rho(x) pointwise on a fixed 1D x-grid."""
    if spec.dim != 1:
        raise InputValidationError("density martingale check is 1D")
    if x_grid is None:
        f = spec.factors[0] if spec.factors else None
        lo = max(f.lo, -4.0) if f is not None else -4.0
        hi = min(f.hi, 4.0) if f is not None else 4.0
        pad = 0.05 * (hi - lo)
        x_grid = np.linspace(lo + pad, hi - pad, 21)
    x_grid = np.asarray(x_grid, float)

    ens = simulate_ensemble(spec, grid, n_paths, seed)
    log_rho = spec.log_density(x_grid[:, None])
    t = grid.points
    expo = (ens.theta[:, :, 0, None] * x_grid[None, None, :]
            - 0.5 * t[None, :, None] * x_grid[None, None, :] ** 2
            + log_rho[None, None, :] - ens.log_z[:, :, None])
    p = np.exp(expo)
    mean = p.mean(axis=0)
    se = jackknife_se(p, axis=0)
    gap = np.abs(mean - np.exp(log_rho)[None, :])
    return _entrywise_gate("martingale", gap, sigma * se + atol, se,
                           notes=f"{len(x_grid)} x-points, n_paths={n_paths},")


def check_driver_equivalence(spec: MeasureSpec, seed: int, t_max: float = 1.0,
                             n_steps: int = 64, n_paths: int = 10_000,
                             sigma: float = 4.0, ks_level: float = 0.01,
                             atol: float = 1e-9) -> LemmaReport:
    """SDE and direct drivers agree in law at t_max.

    Paired first/second moments via common random numbers, plus per-coordinate
    two-sample KS against an independent direct ensemble (independence keeps
    the KS null distribution valid).
    """
    grid = make_uniform(t_max, n_steps)
    sde = simulate_ensemble(spec, grid, n_paths, seed, driver="sde")
    direct = simulate_ensemble(spec, grid, n_paths, seed, driver="direct")
    fresh = simulate_ensemble(spec, grid, n_paths, seed, driver="direct", salt="ks")

    a, b = sde.theta[:, -1], direct.theta[:, -1]
    d1 = a - b
    d2 = a * a - b * b
    m1, s1 = d1.mean(axis=0), jackknife_se(d1, axis=0)
    m2, s2 = d2.mean(axis=0), jackknife_se(d2, axis=0)
    r_mean = _entrywise_gate("driver-equivalence-mean", np.abs(m1),
                             sigma * s1 + atol, s1, notes="paired theta(t_max),")
    r_var = _entrywise_gate("driver-equivalence-second-moment", np.abs(m2),
                            sigma * s2 + atol, s2, notes="paired theta(t_max)^2,")

    pvals = np.array([ks_2samp(a[:, j], fresh.theta[:, -1, j]).pvalue
                      for j in range(spec.dim)])
    worst = int(np.argmin(pvals))
    r_ks = gate("driver-equivalence-ks", float(-pvals[worst]), float(-ks_level),
                notes=f"min p-value {pvals[worst]:.4f} (coordinate {worst}), level {ks_level}")

    failed = r_mean.failed or r_var.failed or r_ks.failed
    return LemmaReport(
        "driver-equivalence", "FAIL" if failed else "PASS",
        r_mean.statistic, r_mean.stderr, r_mean.tolerance,
        notes=f"dt={t_max / n_steps:g}, n_paths={n_paths}",
        sub=(r_mean, r_var, r_ks))
