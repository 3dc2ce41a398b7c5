"""Invariant checks for one configured distribution, as JSON-ready records."""

import math

import numpy as np
from scipy.special import gammainc

from . import core, measures, stats
from .univariate import gd_log_cf

FACTOR_TIMES = (0.1, 1.0, 10.0)


def _record(name, passed, **info):
    rec = {"check": name, "passed": bool(passed)}
    for k, v in info.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        rec[k] = v
    return rec


def check_fixed_point(dist, n, seed, eps, n_max):
    """X against U^Q (X' + W) with X' from an independent batch."""
    m = min(n, 5000)
    x = dist.sample(m, seed=[seed, 100], eps=eps, n_max=n_max).data
    x2 = dist.sample(m, seed=[seed, 101], eps=eps, n_max=n_max).data
    y = core.fixed_point_image(dist, x2, np.random.default_rng([seed, 102]))
    rep = stats.energy_test(x, y, seed=seed)
    return _record("fixed_point", rep.passed, statistic=rep.statistic, p_value=rep.p_value, n=m)


def check_cf(dist, batch, grid, tol=core.DEFAULT_TOL):
    n = len(batch)
    band = max(0.02, 6.6 / math.sqrt(n))
    dist_cf = stats.cf_distance(stats.empirical_cf(batch, grid), core.cf_grid(dist, grid, tol))
    return _record("cf_agreement", dist_cf <= band, distance=dist_cf, band=band, n=n)


def check_moments(dist, batch):
    out = []
    try:
        m = core.mean(dist)
        C = core.covariance(dist)
    except core.MomentsUnavailable as exc:
        return [_record("moments", True, skipped=str(exc))]
    xm, se = stats.mean_with_se(batch.data)
    z_mean = np.abs(xm - m) / se
    out.append(_record("mean", np.all(z_mean <= 4), max_z=float(z_mean.max()),
                       estimate=xm, exact=m))
    cov, cse = stats.covariance_with_se(batch.data)
    z_cov = np.abs(cov - C) / np.maximum(cse, 1e-300)
    out.append(_record("covariance", np.all(z_cov <= 4), max_z=float(z_cov.max()),
                       estimate=cov, exact=C))
    return out


def check_factorization(dist, grid, tol=core.DEFAULT_TOL, times=FACTOR_TIMES):
    """log psi(z) = log psi(e^{-tQ^T} z) + log psi_t(z)."""
    full = core.log_cf(dist, grid, tol)
    worst = 0.0
    for t in times:
        shifted = grid @ dist.Q.exp_neg(t, transpose=True).T
        resid = full - core.log_cf(dist, shifted, tol) - core.selfdecomp_factor_logcf(dist, t, grid, tol)
        worst = max(worst, float(np.abs(resid).max()))
    return _record("selfdecomposability", worst < 2 * tol, residual=worst, times=list(times))


def check_reduction(dist, grid, tol=core.DEFAULT_TOL):
    try:
        red = core.reduce_to_scalar(dist)
    except core.NotEigenspaceSupported as exc:
        return _record("eigenspace_reduction", True, skipped=str(exc))
    diff = float(np.abs(core.log_cf(dist, grid, tol) - core.log_cf(red, grid, tol)).max())
    return _record("eigenspace_reduction", diff < 2 * tol, difference=diff,
                   theta=float(red.Q.scalar))


def check_decomposition(dist, batch, seed, eps, n_max):
    if dist.Q.scalar is None or not isinstance(dist.nu, measures.Atoms):
        return _record("finite_atom_decomposition", True, skipped="needs scalar Q and atomic nu")
    m = min(len(batch), 5000)
    y = core.sample_by_decomposition(dist, m, seed=[seed, 103], eps=eps, n_max=n_max)
    rep = stats.energy_test(batch.data[:m], y, seed=seed)
    return _record("finite_atom_decomposition", rep.passed, statistic=rep.statistic,
                   p_value=rep.p_value)


def gamma_cdf(theta, rate=1.0):
    return lambda x: gammainc(theta, rate * np.maximum(x, 0.0))


def check_gamma(dist, batch):
    nu = dist.nu
    if not isinstance(nu, measures.ExponentialRadial) or dist.Q.scalar is None:
        return _record("gamma_identification", True, skipped="needs exp-radial nu and scalar Q")
    theta = 1.0 / dist.Q.scalar
    m = min(len(batch), 10_000)
    rep = stats.ks_test_1d(batch.data[:m, 0], gamma_cdf(theta, nu.rate))
    return _record("gamma_identification", rep.passed, statistic=rep.statistic,
                   p_value=rep.p_value, theta=theta)


def check_univariate_cf(dist, grid, tol=core.DEFAULT_TOL):
    nu = dist.nu
    if (dist.dim != 1 or dist.Q.scalar is None or not isinstance(nu, measures.Atoms)
            or len(nu.probs) != 1 or nu.points[0, 0] != 1.0):
        return _record("univariate_cf", True, skipped="needs d = 1, scalar Q, nu = delta_1")
    theta = 1.0 / dist.Q.scalar
    diff = float(np.abs(gd_log_cf(theta, grid[:, 0]) - core.log_cf(dist, grid, tol)).max())
    return _record("univariate_cf", diff < 1e-9, difference=diff)


def run_suite(dist, n=100_000, seed=0, eps=core.DEFAULT_EPS, n_max=core.DEFAULT_NMAX):
    grid = core.standard_grid(dist.dim)
    batch = dist.sample(n, seed=seed, eps=eps, n_max=n_max)
    records = [
        check_fixed_point(dist, n, seed, eps, n_max),
        check_cf(dist, batch, grid),
        *check_moments(dist, batch),
        check_factorization(dist, grid),
        check_reduction(dist, grid),
        check_decomposition(dist, batch, seed, eps, n_max),
        check_gamma(dist, batch),
        check_univariate_cf(dist, grid),
    ]
    records.append(_record("truncation", batch.cap_hits == 0, cap_hits=batch.cap_hits,
                           mean_terms=float(batch.term_counts.mean()) if n else 0.0))
    return records
