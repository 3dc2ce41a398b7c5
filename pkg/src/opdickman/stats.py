"""Empirical characteristic functions and two-sample / goodness-of-fit tests."""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import chi2, kstwobign

from .core import CFGrid, SampleBatch

ENERGY_CAP = 4000
DEFAULT_PERMUTATIONS = 499


@dataclass
class TestReport:
    __test__ = False

    statistic: float
    p_value: float
    n_permutations: int
    seed: int | None
    alpha: float = 0.01
    name: str = ""
    # standard deviation of the permutation null (energy test only)
    null_sd: float | None = None

    @property
    def passed(self):
        """True when the null hypothesis is not rejected at level alpha."""
        return self.p_value > self.alpha

    def to_record(self):
        rec = asdict(self)
        rec["passed"] = self.passed
        return rec


def _as_array(x):
    if isinstance(x, SampleBatch):
        x = x.data
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def empirical_cf(batch, grid):
    """(1/n) sum_j exp(i z.x_j) for every z in the grid."""
    X = _as_array(batch)
    if X.shape[0] == 0:
        raise ValueError("empirical CF of an empty batch")
    Z = np.atleast_2d(np.asarray(grid, dtype=float))
    if Z.shape[1] != X.shape[1]:
        raise ValueError(f"grid dimension {Z.shape[1]} != sample dimension {X.shape[1]}")
    vals = np.empty(Z.shape[0], dtype=complex)
    # chunk to keep the n x m phase matrix small
    step = max(1, 2_000_000 // max(Z.shape[0], 1))
    acc = np.zeros(Z.shape[0], dtype=complex)
    for start in range(0, X.shape[0], step):
        acc += np.exp(1j * (X[start:start + step] @ Z.T)).sum(axis=0)
    vals[:] = acc / X.shape[0]
    vals[np.all(Z == 0, axis=1)] = 1.0
    return CFGrid(Z, vals, "empirical")


def cf_distance(a, b):
    """max_z |a(z) - b(z)| over a shared grid."""
    if a.points.shape != b.points.shape or not np.allclose(a.points, b.points, rtol=0, atol=1e-14):
        raise ValueError("CF grids do not match")
    return float(np.max(np.abs(a.values - b.values), initial=0.0))


def _pairwise(A, B):
    return cdist(A, B)


def _subsample(X, cap, rng):
    if X.shape[0] <= cap:
        return X
    return X[np.sort(rng.choice(X.shape[0], cap, replace=False))]


def energy_statistic(X, Y):
    """U-statistic estimate of 2E|X-Y| - E|X-X'| - E|Y-Y'|."""
    X, Y = _as_array(X), _as_array(Y)
    n, m = len(X), len(Y)
    if n < 2 or m < 2:
        raise ValueError("energy statistic needs at least two points per sample")
    dxy = _pairwise(X, Y).mean()
    dxx = _pairwise(X, X).sum() / (n * (n - 1))
    dyy = _pairwise(Y, Y).sum() / (m * (m - 1))
    return float(2 * dxy - dxx - dyy)


def energy_test(X, Y, n_perm=DEFAULT_PERMUTATIONS, seed=0, alpha=0.01, cap=ENERGY_CAP):
    """Two-sample energy-distance permutation test.

    Each sample is subsampled (deterministically from ``seed``) to at most
    ``cap // 2`` points so the pooled distance matrix is at most cap x cap.
    """
    X, Y = _as_array(X), _as_array(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    rng = np.random.default_rng(seed)
    X = _subsample(X, cap // 2, rng)
    Y = _subsample(Y, cap // 2, rng)
    n, m = len(X), len(Y)
    if n < 2 or m < 2:
        raise ValueError("energy test needs at least two points per sample")
    Z = np.vstack([X, Y])
    D = _pairwise(Z, Z)
    total = D.sum()
    N = n + m

    def stat(labels):
        # labels: (k, N) indicator of the first sample
        a = labels.astype(float)
        Da = a @ D                                  # (k, N)
        sxx = np.einsum("kn,kn->k", Da, a)
        sxy = Da.sum(1) - sxx                       # sum over x in X, y in Y
        syy = total - 2 * Da.sum(1) + sxx
        return 2 * sxy / (n * m) - sxx / (n * (n - 1)) - syy / (m * (m - 1))

    base = np.zeros((1, N))
    base[0, :n] = 1
    observed = float(stat(base)[0])
    null = []
    done = 0
    while done < n_perm:
        k = min(64, n_perm - done)
        labels = np.zeros((k, N))
        for r in range(k):
            labels[r, rng.permutation(N)[:n]] = 1
        null.append(stat(labels))
        done += k
    null = np.concatenate(null) if null else np.zeros(0)
    exceed = int(np.sum(null >= observed - 1e-12 * abs(observed)))
    p = (1 + exceed) / (n_perm + 1)
    sd = float(null.std()) if null.size > 1 else None
    return TestReport(observed, p, n_perm, seed, alpha, "energy", sd)


def ks_test_1d(samples, cdf, alpha=0.01):
    """Kolmogorov-Smirnov statistic with the asymptotic Kolmogorov p-value.

    ``cdf`` is any vectorised callable returning P(X <= x).
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("KS test of an empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = max(float(np.max(i / n - F)), float(np.max(F - (i - 1) / n)))
    # finite-n correction of Stephens
    arg = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * D
    p = float(kstwobign.sf(arg))
    return TestReport(D, min(max(p, 0.0), 1.0), 0, None, alpha, "ks")


def mean_with_se(X):
    X = _as_array(X)
    n = len(X)
    return X.mean(0), X.std(0, ddof=1) / math.sqrt(n)


def covariance_with_se(X):
    """Sample covariance and the standard error of each entry.

    The SE of entry (i, j) is sd((x_i - m_i)(x_j - m_j)) / sqrt(n).
    """
    X = _as_array(X)
    n = len(X)
    C = X - X.mean(0)
    prods = C[:, :, None] * C[:, None, :]
    return prods.sum(0) / (n - 1), prods.std(0, ddof=1) / math.sqrt(n)


def chi_square_gof(counts, probs):
    """Pearson chi-square with the (k - 1) degrees of freedom p-value.

    Cells with expected count below 5 are pooled into their neighbour.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    exp = probs / probs.sum() * n
    obs_p, exp_p = [], []
    co = ce = 0.0
    for o, e in zip(counts, exp):
        co += o
        ce += e
        if ce >= 5:
            obs_p.append(co)
            exp_p.append(ce)
            co = ce = 0.0
    if ce > 0 and exp_p:
        obs_p[-1] += co
        exp_p[-1] += ce
    obs_p, exp_p = np.array(obs_p), np.array(exp_p)
    stat = float(np.sum((obs_p - exp_p) ** 2 / exp_p))
    dof = max(len(obs_p) - 1, 1)
    return TestReport(stat, float(chi2.sf(stat, dof)), 0, None, 0.01, "chi2")
