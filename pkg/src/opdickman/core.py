"""Operator Dickman distributions D(Q, nu).

D(Q, nu) is the law of the fixed point X = U^Q (X' + W), U uniform on
[0, 1], W ~ nu. Equivalently X = sum_k (U_1 ... U_k)^Q W_k and

    log psi(z) = int_0^1 (nu_hat(s^{Q^T} z) - 1) ds / s.

The log-CF is computed after the substitution s = e^{-t}, which turns the
ds/s singularity into a half-line integral with an exponentially small
tail that is cut off using |s^Q x| <= c1 s^K |x|.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import measures
from .linalg import OperatorMatrix, lyapunov_solve, validate_mplus
from .quadrature import integrate

DEFAULT_EPS = 1e-10
DEFAULT_NMAX = 10_000
DEFAULT_TOL = 1e-9


class TruncationWarning(UserWarning):
    """Some perpetuity samples stopped at the term cap instead of eps."""


class MomentsUnavailable(ValueError):
    pass


class ClosureNotApplicable(ValueError):
    pass


class NotEigenspaceSupported(ValueError):
    pass


@dataclass
class SampleBatch:
    data: np.ndarray
    seed: int | None
    eps: float
    n_max: int
    term_counts: np.ndarray
    cap_hits: int = 0

    def __len__(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class LevyWedge:
    """A_{t,D} = {r^Q x : r > t, x in D}.

    ``directions`` is either an (m, d) array of atoms, or ``None`` together
    with a cap ``{x in S^{d-1}: x.axis >= cos(half_angle)}``.
    """

    t: float
    directions: np.ndarray | None = None
    axis: np.ndarray | None = None
    half_angle: float | None = None

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("wedge radius t must be positive")
        if self.directions is None:
            if self.axis is None or self.half_angle is None:
                raise ValueError("give either atoms or a cap (axis, half_angle)")
            if not 0 < self.half_angle <= math.pi:
                raise ValueError("cap half-angle must lie in (0, pi]")


@dataclass
class CFGrid:
    points: np.ndarray
    values: np.ndarray
    method: str = field(default="analytic")


@dataclass(frozen=True, eq=False)
class DickmanDistribution:
    Q: OperatorMatrix
    nu: measures.AmplitudeMeasure

    def __post_init__(self):
        if not isinstance(self.Q, OperatorMatrix):
            object.__setattr__(self, "Q", validate_mplus(self.Q))
        if self.Q.dim != self.nu.dim:
            raise ValueError(f"operator is {self.Q.dim}-dimensional but nu is {self.nu.dim}-dimensional")

    @property
    def dim(self):
        return self.Q.dim

    # sampling -----------------------------------------------------------

    def sample(self, n, seed=None, eps=DEFAULT_EPS, n_max=DEFAULT_NMAX, rng=None):
        return sample(self, n, seed=seed, eps=eps, n_max=n_max, rng=rng)

    # characteristic function -------------------------------------------

    def log_cf(self, z, tol=DEFAULT_TOL):
        return log_cf(self, z, tol=tol)

    def cf(self, z, tol=DEFAULT_TOL):
        return np.exp(log_cf(self, z, tol=tol))

    def mean(self):
        return mean(self)

    def covariance(self):
        return covariance(self)


def sample(dist, n, seed=None, eps=DEFAULT_EPS, n_max=DEFAULT_NMAX, rng=None):
    """Truncated perpetuity sampler.

    For every sample: M <- u^Q M, x <- x + M W, until ||M||_inf < eps (max
    absolute entry) or n_max terms. All samples advance together; the ones
    that have stopped are masked out.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    d = dist.dim
    x = np.zeros((n, d))
    M = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    terms = np.zeros(n, dtype=np.int64)
    live = np.arange(n)
    k = 0
    while live.size and k < n_max:
        u = rng.random(live.size)
        # u == 0 has probability zero but the generator can return it
        u[u == 0.0] = np.finfo(float).tiny
        P = dist.Q.power(u)
        Mk = P @ M[live]
        W = dist.nu.sample(rng, live.size)
        x[live] += np.einsum("nij,nj->ni", Mk, W)
        M[live] = Mk
        terms[live] += 1
        k += 1
        done = np.abs(Mk).reshape(live.size, -1).max(axis=1) < eps
        live = live[~done]
    cap_hits = int(live.size)
    if cap_hits:
        warnings.warn(f"{cap_hits} of {n} samples hit the term cap n_max={n_max}",
                      TruncationWarning, stacklevel=2)
    return SampleBatch(x, seed, eps, n_max, terms, cap_hits)


def _tail_cutoff(dist, znorm, tol):
    """T with int_T^inf |nu_hat(e^{-tQ^T} z) - 1| dt < tol/4."""
    Q = dist.Q
    m = dist.nu.abs_moment
    if m is None:
        m = 1.0 + dist.nu.log_moment_bound
    K = Q.growth_bound_K
    scale = Q.scale_c1 * znorm * max(m, 1e-300) / K
    if scale <= tol / 4:
        return 0.0
    T = math.log(4 * scale / tol) / K
    if not Q.decomposition.diagonalizable:
        # the c1 s^K witness is only checked down to s = 2^-20
        T *= 1.25
    return T


def _integrate_log_cf(dist, Z, upper, tol):
    """int_0^upper (nu_hat(e^{-tQ^T} z) - 1) dt for each row of Z."""
    Q = dist.Q

    def integrand(t):
        E = Q.exp_neg(t, transpose=True)            # (m, d, d)
        Y = np.einsum("mij,zj->mzi", E, Z)          # (m, nz, d)
        return dist.nu.cf_minus_one(Y)

    panels = max(4, int(math.ceil(upper)))
    val, err = integrate(integrand, 0.0, upper, tol=tol, initial_panels=panels)
    return val


def log_cf(dist, z, tol=DEFAULT_TOL):
    """log psi(z) for one frequency (d,) or a stack (m, d)."""
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if dist.dim == 1 and Z.shape[-1] != 1 and single:
        Z = Z.reshape(-1, 1)
        single = False
    if Z.shape[-1] != dist.dim:
        raise ValueError(f"frequency dimension {Z.shape[-1]} != {dist.dim}")
    out = np.zeros(Z.shape[0], dtype=complex)
    norms = np.linalg.norm(Z, axis=1)
    nz = norms > 0
    if np.any(nz):
        upper = _tail_cutoff(dist, norms[nz].max(), tol)
        if upper > 0:
            out[nz] = _integrate_log_cf(dist, Z[nz], upper, tol / 2)
    return out[0] if single else out


def selfdecomp_factor_logcf(dist, t, z, tol=DEFAULT_TOL):
    """log psi_t(z) = int_{e^{-t}}^1 (nu_hat(s^{Q^T} z) - 1) ds/s.

    It satisfies log psi(z) = log psi(e^{-tQ^T} z) + log psi_t(z).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    out = np.zeros(Z.shape[0], dtype=complex)
    norms = np.linalg.norm(Z, axis=1)
    nz = norms > 0
    if np.any(nz):
        upper = min(float(t), _tail_cutoff(dist, norms[nz].max(), tol))
        if upper > 0:
            out[nz] = _integrate_log_cf(dist, Z[nz], upper, tol / 2)
    return out[0] if single else out


def cf_grid(dist, points, tol=DEFAULT_TOL):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return CFGrid(pts, np.exp(log_cf(dist, pts, tol=tol)), "analytic")


def standard_grid(d, size=25, seed=20250101):
    """Fixed frequency grid: radii 0.25, 0.5, ..., 6.25 along seeded directions."""
    radii = 0.25 * np.arange(1, size + 1)
    if d == 1:
        signs = np.where(np.arange(size) % 2 == 0, 1.0, -1.0)
        return (radii * signs)[:, None]
    rng = np.random.default_rng(seed + d)
    dirs = rng.standard_normal((size, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return radii[:, None] * dirs


# moments ---------------------------------------------------------------

def _mc_moments(nu, n=1_000_000, seed=0):
    w = nu.sample(np.random.default_rng(seed), n)
    return w.mean(axis=0), (w.T @ w) / n


def mean(dist, mc_fallback=False):
    """m = Q^{-1} E W."""
    m = dist.nu.mean
    if m is None:
        if not mc_fallback:
            raise MomentsUnavailable(f"{dist.nu.kind} has no exact first moment")
        m, _ = _mc_moments(dist.nu)
    return np.linalg.solve(dist.Q.entries, np.asarray(m, dtype=float))


def covariance(dist, mc_fallback=False):
    """C solving Q C + C Q^T = E W W^T."""
    B = dist.nu.second_moment
    if B is None:
        if not mc_fallback:
            raise MomentsUnavailable(f"{dist.nu.kind} has no exact second moment")
        _, B = _mc_moments(dist.nu)
    return lyapunov_solve(dist.Q, np.asarray(B, dtype=float))


# Levy characteristics ----------------------------------------------------

def drift(dist, n_mc=200_000, seed=0, tol=1e-12):
    """a = int int s^Q x 1{|s^Q x| <= 1} nu(dx) ds/s (diagnostic only).

    Exact quadrature for atomic nu; Monte Carlo over nu otherwise.
    """
    nu = dist.nu
    if isinstance(nu, measures.Atoms):
        pts, probs = nu.points, nu.probs
    else:
        pts = nu.sample(np.random.default_rng(seed), n_mc)
        probs = np.full(n_mc, 1.0 / n_mc)
    Q = dist.Q
    total = np.zeros(dist.dim)
    cache = {}
    for w, p in zip(pts, probs):
        key = w.tobytes()
        if key not in cache:
            cache[key] = _drift_one(Q, w, tol)
        total += p * cache[key]
    return total


def _drift_one(Q, w, tol):
    r = np.linalg.norm(w)
    T = math.log(4 * Q.scale_c1 * r / (Q.growth_bound_K * tol)) / Q.growth_bound_K
    T = max(T, 1.0)
    grid = np.linspace(0.0, T, 2001)
    g = np.linalg.norm(Q.exp_neg(grid) @ w, axis=-1) - 1.0
    roots = []
    for i in np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]:
        if g[i] == 0.0:
            roots.append(grid[i])
            continue
        f = lambda t: float(np.linalg.norm(Q.exp_neg(t) @ w) - 1.0)
        roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-14))

    def integrand(t):
        v = Q.exp_neg(t) @ w
        inside = np.linalg.norm(v, axis=-1) <= 1.0
        return v * inside[:, None]

    val, _ = integrate(integrand, 0.0, T, tol=tol, breakpoints=roots)
    return val


def _direction_mass(dist, wedge):
    nu = dist.nu
    d = dist.dim
    if wedge.directions is not None:
        D = np.atleast_2d(np.asarray(wedge.directions, dtype=float))
        if isinstance(nu, measures.Atoms):
            hit = [any(np.allclose(w, x, atol=1e-12) for x in D) for w in nu.points]
            return float(nu.probs[np.array(hit)].sum())
        # continuous laws put no mass on finitely many points
        return 0.0
    c = np.asarray(wedge.axis, dtype=float)
    c = c / np.linalg.norm(c)
    cosphi = math.cos(wedge.half_angle)
    if isinstance(nu, measures.Atoms):
        return float(nu.probs[nu.points @ c >= cosphi - 1e-15].sum())
    if isinstance(nu, measures.UniformSphere):
        return nu.cap_mass(wedge.half_angle)
    if isinstance(nu, measures.VonMises):
        return nu.cap_mass(math.atan2(c[1], c[0]), wedge.half_angle)
    raise ValueError(f"no cap mass available for {nu.kind}")


def check_on_SQ(Q, points, r_grid=None, tol=1e-12):
    """Numerical (finite-grid) check that |r^Q x| > 1 for r > 1 and |x| = 1."""
    points = np.atleast_2d(points)
    if np.any(np.abs(np.linalg.norm(points, axis=1) - 1) > 1e-10):
        return False
    if r_grid is None:
        r_grid = np.concatenate([1 + np.logspace(-6, 0, 40), np.linspace(2.1, 50, 40)])
    P = matrix_power_any(Q, r_grid)
    norms = np.linalg.norm(P @ points.T, axis=1)
    return bool(np.all(norms > 1 - tol))


def matrix_power_any(Q, r):
    """r^Q for r > 0 (possibly > 1)."""
    from .linalg import matrix_exp
    r = np.asarray(r, dtype=float)
    return matrix_exp(np.log(r)[:, None, None] * Q.entries)


def levy_wedge_mass(dist, wedge, n_check=200, seed=0):
    """M(A_{t,D}) = nu(D) * max(0, -log(min(t, 1)))."""
    nu = dist.nu
    if isinstance(nu, measures.Atoms):
        pts = nu.points
    else:
        pts = nu.sample(np.random.default_rng(seed), n_check)
    if not check_on_SQ(dist.Q, pts):
        raise ValueError("nu is not supported on S_Q; the wedge parametrisation is invalid")
    mass = _direction_mass(dist, wedge)
    return mass * max(0.0, -math.log(min(wedge.t, 1.0)))


# closure operations -------------------------------------------------------

def convolve(d1, d2):
    """D(Q/c1, nu1) * D(Q/c2, nu2) = D(Q/(c1+c2), (c1 nu1 + c2 nu2)/(c1+c2))."""
    A1, A2 = d1.Q.entries, d2.Q.entries
    n1 = np.abs(A1).max()
    n2 = np.abs(A2).max()
    if A1.shape != A2.shape or not np.allclose(A1 / n1, A2 / n2, rtol=0, atol=1e-10):
        raise ClosureNotApplicable("operators are not proportional to a common Q")
    # take Q = A1 / n1, so c1 = 1 / n1 and c2 = 1 / n2
    c1, c2 = 1.0 / n1, 1.0 / n2
    Q = A1 / n1
    nu = measures.mixture([d1.nu, d2.nu], [c1, c2])
    return DickmanDistribution(validate_mplus(Q / (c1 + c2)), nu)


def _eigenspace_index(spaces, w, tol=1e-10):
    wn = np.linalg.norm(w)
    for k, (a, basis) in enumerate(spaces):
        resid = w - basis @ (basis.T @ w)
        if np.linalg.norm(resid) <= tol * wn:
            return k
    return None


def reduce_to_scalar(dist, tol=1e-10):
    """Rewrite D(Q, nu) as D(theta I, nu~) when nu sits on real eigenspaces.

    theta^{-1} = sum_k p_k / a_k and nu~ = theta sum_k nu_k / a_k, with
    nu_k the restriction of nu to the eigenspace of a_k.
    """
    nu = dist.nu
    if not isinstance(nu, measures.Atoms):
        raise NotEigenspaceSupported("eigenspace reduction needs an atomic nu")
    Q = dist.Q
    spaces = Q.decomposition.real_eigenspaces
    A = Q.entries
    rates = np.empty(len(nu.probs))
    for i, w in enumerate(nu.points):
        k = _eigenspace_index(spaces, w)
        if k is None:
            raise NotEigenspaceSupported(f"atom {w} is not in a real eigenspace of Q")
        a = spaces[k][0]
        if np.linalg.norm(A @ w - a * w) > tol * np.linalg.norm(w):
            raise NotEigenspaceSupported(f"atom {w} is not in a real eigenspace of Q")
        rates[i] = a
    theta = 1.0 / float(np.sum(nu.probs / rates))
    new_probs = theta * nu.probs / rates
    new_probs = new_probs / new_probs.sum()
    new_nu = measures.Atoms(nu.points, new_probs) if len(new_probs) > 1 else measures.delta(nu.points[0])
    return DickmanDistribution(validate_mplus(theta * np.eye(dist.dim)), new_nu)


def finite_atom_decomposition(dist):
    """[(w_i, theta p_i)] with X = sum_i w_i X_i, X_i ~ GD_{theta p_i} independent."""
    c = dist.Q.scalar
    if c is None:
        raise ValueError("finite-atom decomposition needs Q = (1/theta) I")
    if not isinstance(dist.nu, measures.Atoms):
        raise ValueError("finite-atom decomposition needs an atomic nu")
    theta = 1.0 / c
    return [(w.copy(), theta * p) for w, p in zip(dist.nu.points, dist.nu.probs)]


def sample_by_decomposition(dist, n, seed=None, rng=None, eps=DEFAULT_EPS, n_max=DEFAULT_NMAX):
    from .univariate import gd_sample
    if rng is None:
        rng = np.random.default_rng(seed)
    out = np.zeros((n, dist.dim))
    for w, th in finite_atom_decomposition(dist):
        out += gd_sample(th, n, rng=rng, eps=eps, n_max=n_max)[:, None] * w[None, :]
    return out


def fixed_point_image(dist, x, rng):
    """U^Q (x + W) with fresh U and W for each row of x."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    u = rng.random(n)
    u[u == 0.0] = np.finfo(float).tiny
    W = dist.nu.sample(rng, n)
    return np.einsum("nij,nj->ni", dist.Q.power(u), x + W)
