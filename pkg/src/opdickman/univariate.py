"""The one-dimensional Dickman law GD_theta.

Two independent routes to the density are provided: the integral
recurrence

    f(x) = C x^{theta-1} - theta x^{theta-1} int_0^{x-1} f(z) (1+z)^{-theta} dz,

with C = exp(-gamma theta) / Gamma(theta), tabulated by a cumulative
Simpson-type rule, and the delay equation
x rho' + (1-theta) rho + theta rho(x-1) = 0 solved by the method of steps
with RK4.
"""

import math
import threading

import numpy as np
from scipy.optimize import brentq

from .measures import spherical_bessel_Y, spherical_bessel_Y_minus_one
from .quadrature import integrate, wynn_epsilon

EULER_GAMMA = 0.57721566490153286060651209008240243
DEFAULT_STEP = 1e-3
DEFAULT_XMAX = 10.0
MAX_XMAX = 50.0


def euler_gamma_series(n_terms=200_000):
    """gamma = lim (H_n - log n), with the usual asymptotic corrections."""
    n = n_terms
    k = np.arange(n, 0, -1, dtype=float)
    harmonic = np.sum(1.0 / k)
    return harmonic - math.log(n) - 1.0 / (2 * n) + 1.0 / (12 * n * n) - 1.0 / (120 * n ** 4)


def dickman_constant(theta):
    return math.exp(-EULER_GAMMA * theta) / math.gamma(theta)


def _check_theta(theta):
    if not theta > 0:
        raise ValueError("theta must be positive")


def _head_integral(theta, y):
    """int_0^y z^{theta-1} (1+z)^{-theta} dz for 0 <= y <= 1.

    With b = y/(1+y) this is int_0^b w^{theta-1} / (1-w) dw
    = sum_k b^{theta+k} / (theta+k), and b <= 1/2.
    """
    y = np.asarray(y, dtype=float)
    b = y / (1.0 + y)
    total = np.zeros_like(b)
    with np.errstate(divide="ignore"):
        lb = np.log(b)
    for k in range(60):
        total += np.exp((theta + k) * lb) / (theta + k)
    return total


class DickmanDensityTable:
    """f_theta on the grid x_j = j h, extended lazily one unit at a time."""

    def __init__(self, theta, h=DEFAULT_STEP):
        _check_theta(theta)
        per_unit = round(1.0 / h)
        if per_unit < 4 or abs(per_unit * h - 1.0) > 1e-9:
            raise ValueError("step h must divide 1 (h = 1/N, N >= 4)")
        self.theta = float(theta)
        self.per_unit = per_unit
        self.h = 1.0 / per_unit
        self.C = dickman_constant(theta)
        self._lock = threading.Lock()
        x = np.arange(per_unit + 1) * self.h
        with np.errstate(divide="ignore"):
            f = self.C * x ** (theta - 1.0)
        if theta > 1:
            f[0] = 0.0
        self._f = f
        # G(x) = int_0^x f(z) (1+z)^{-theta} dz, exact on [0, 1]
        self._G = self.C * _head_integral(theta, x)

    @property
    def max_x(self):
        return (len(self._f) - 1) * self.h

    @property
    def grid(self):
        return np.arange(len(self._f)) * self.h

    @property
    def values(self):
        return self._f.copy()

    def extend_to(self, x_max):
        if x_max > MAX_XMAX:
            raise ValueError(f"density tables are limited to x <= {MAX_XMAX}")
        with self._lock:
            while self.max_x < x_max - 1e-12:
                self._add_unit()

    def _weighted(self, f):
        return f * (1.0 + np.arange(len(f)) * self.h) ** (-self.theta)

    def _add_unit(self):
        N, h, th = self.per_unit, self.h, self.theta
        k = len(self._f) - 1                      # index of the current right end
        x_new = (k + np.arange(1, N + 1)) * h
        G_shift = self._G[k + 1 - N: k + 1]       # G(x - 1) at the new nodes
        f_new = x_new ** (th - 1.0) * (self.C - th * G_shift)
        f = np.concatenate([self._f, f_new])
        g = self._weighted(f)
        # per-interval pieces from the local quadratic through three nodes
        i = k + np.arange(N)
        last = len(g) - 1
        fwd = h * (5 * g[i] + 8 * g[i + 1] - g[np.minimum(i + 2, last)]) / 12.0
        bwd = h * (-g[i - 1] + 8 * g[i] + 5 * g[i + 1]) / 12.0
        pieces = np.where(i + 2 <= last, fwd, bwd)
        self._f = f
        self._G = np.concatenate([self._G, self._G[k] + np.cumsum(pieces)])

    def G(self, y):
        """The cumulative weighted integral at arbitrary 0 <= y <= max_x."""
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        head = y <= 1.0
        out[head] = self.C * _head_integral(self.theta, y[head])
        if np.any(~head):
            yy = y[~head]
            h = self.h
            j = np.minimum(np.floor(yy / h).astype(int), len(self._f) - 3)
            tau = yy / h - j
            g = self._weighted(self._f)
            g0, g1, g2 = g[j], g[j + 1], g[j + 2]
            # integral over [0, tau] of the quadratic through (0,g0), (1,g1), (2,g2)
            w0 = tau - 0.75 * tau ** 2 + tau ** 3 / 6.0
            w1 = tau ** 2 - tau ** 3 / 3.0
            w2 = -0.25 * tau ** 2 + tau ** 3 / 6.0
            out[~head] = self._G[j] + h * (w0 * g0 + w1 * g1 + w2 * g2)
        return out

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("x must be non-negative")
        top = float(np.max(x, initial=0.0))
        if top > self.max_x:
            self.extend_to(math.ceil(top))
        out = np.zeros_like(x)
        th = self.theta
        pos = x > 0
        out[pos] = self.C * x[pos] ** (th - 1.0)
        if th == 1.0:
            out[x == 0] = self.C
        elif th < 1.0:
            out[x == 0] = np.inf
        tail = x > 1.0
        if np.any(tail):
            xt = x[tail]
            out[tail] = xt ** (th - 1.0) * (self.C - th * self.G(xt - 1.0))
        return out

    def cdf(self, x):
        """P(X <= x): closed form on [0, 1], adaptive quadrature beyond."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        head = np.clip(x, 0.0, 1.0)
        out = self.C * head ** self.theta / self.theta
        for i, xi in enumerate(x):
            if xi > 1.0:
                val, _ = integrate(self.density, 1.0, float(xi), tol=1e-11,
                                   breakpoints=np.arange(2, math.ceil(xi)))
                out[i] += val
        return out

    def mass(self, x_max=None):
        return float(self.cdf(self.max_x if x_max is None else x_max)[0])


_TABLES = {}
_TABLES_LOCK = threading.Lock()


def density_table(theta, h=DEFAULT_STEP, x_max=DEFAULT_XMAX):
    key = (float(theta), float(h))
    with _TABLES_LOCK:
        table = _TABLES.get(key)
        if table is None:
            table = _TABLES[key] = DickmanDensityTable(theta, h)
    table.extend_to(x_max)
    return table


def dickman_density(theta, x, h=DEFAULT_STEP):
    """f_theta(x) from the recurrence table (vectorised in x)."""
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    top = max(DEFAULT_XMAX, math.ceil(float(np.max(x, initial=0.0))))
    return density_table(theta, h, top).density(x)


def dickman_cdf(theta, x, h=DEFAULT_STEP):
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    top = max(DEFAULT_XMAX, math.ceil(float(np.max(x, initial=0.0))))
    return density_table(theta, h, top).cdf(x)


def rho_ode_solve(theta, x_max=DEFAULT_XMAX, h=DEFAULT_STEP):
    """rho_theta on [0, x_max] by the method of steps.

    Each interval [k, k+1] is integrated with classical RK4 in the graded
    variable y = (x - k)^{min(theta, 1)}, which keeps the right-hand side
    bounded next to x = 1 when theta < 1 (there rho(x - 1) = (x-1)^{theta-1}
    blows up). The delayed term is read from the previous interval at the
    same y, with linear interpolation at the RK4 half steps.

    Returns ``(x, rho)``; the nodes are not equally spaced when theta < 1.
    """
    _check_theta(theta)
    if x_max > MAX_XMAX:
        raise ValueError(f"x_max is limited to {MAX_XMAX}")
    if h > 1e-3:
        raise ValueError("step h must be at most 1e-3")
    N = int(round(1.0 / h))
    hy = 1.0 / N
    p = 1.0 / min(theta, 1.0)
    y = np.arange(N + 1) * hy
    ymid = y[:-1] + hy / 2
    # dx/dy on the grid and at half steps
    jac = p * y ** (p - 1.0)
    jac_mid = p * ymid ** (p - 1.0)

    with np.errstate(divide="ignore"):
        rho = (y ** p) ** (theta - 1.0)
    if theta > 1:
        rho[0] = 0.0
    xs = [y ** p]
    rhos = [rho]

    for k in range(1, int(math.ceil(x_max))):
        prev = rhos[-1]
        if k == 1:
            # jac * (x-1)^{theta-1} simplifies to p y^{p theta - 1}
            dw = p * y ** (p * theta - 1.0)
            dw_mid = p * ymid ** (p * theta - 1.0)
        else:
            dw = jac * prev
            dw_mid = jac_mid * 0.5 * (prev[:-1] + prev[1:])
        x = k + y ** p
        x_mid = k + ymid ** p
        a, a_mid = (1.0 - theta) * jac / x, (1.0 - theta) * jac_mid / x_mid
        b, b_mid = theta * dw / x, theta * dw_mid / x_mid

        r = np.empty(N + 1)
        r[0] = prev[-1]
        for j in range(N):
            rj = r[j]
            k1 = -(a[j] * rj + b[j])
            k2 = -(a_mid[j] * (rj + 0.5 * hy * k1) + b_mid[j])
            k3 = -(a_mid[j] * (rj + 0.5 * hy * k2) + b_mid[j])
            k4 = -(a[j + 1] * (rj + hy * k3) + b[j + 1])
            r[j + 1] = rj + hy * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        xs.append(x[1:])
        rhos.append(r)
    x_all = np.concatenate(xs)
    rho_all = np.concatenate([rhos[0]] + [r[1:] for r in rhos[1:]])
    keep = x_all <= x_max + 1e-12
    return x_all[keep], rho_all[keep]


def gd_log_cf(theta, z, tol=1e-10):
    """theta int_0^1 (e^{izu} - 1) du / u, vectorised in z."""
    _check_theta(theta)
    z = np.atleast_1d(np.asarray(z, dtype=float))

    def integrand(u):
        return np.expm1(1j * u[:, None] * z[None, :]) / u[:, None]

    val, _ = integrate(integrand, 0.0, 1.0, tol=tol / theta,
                       initial_panels=max(4, int(np.abs(z).max(initial=0.0))))
    return theta * val


def gd_sample(theta, n, seed=None, rng=None, eps=1e-10, n_max=10_000):
    """Truncated perpetuity U_1^{1/theta} + (U_1 U_2)^{1/theta} + ..."""
    _check_theta(theta)
    if rng is None:
        rng = np.random.default_rng(seed)
    x = np.zeros(n)
    logprod = np.zeros(n)
    live = np.arange(n)
    log_eps = math.log(eps)
    k = 0
    while live.size and k < n_max:
        u = rng.random(live.size)
        u[u == 0.0] = np.finfo(float).tiny
        logprod[live] += np.log(u) / theta
        x[live] += np.exp(logprod[live])
        k += 1
        live = live[logprod[live] >= log_eps]
    return x


def _y_zeros(d, s_from, s_to, step=0.05):
    s = np.arange(s_from, s_to + step, step)
    v = spherical_bessel_Y(d, s)
    f = lambda t: float(spherical_bessel_Y(d, np.array([t]))[0])
    return [brentq(f, s[i], s[i + 1], xtol=1e-15)
            for i in np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0]]


def alpha_d(d, tol=1e-12, n_zeros=60):
    """int_0^1 (Y_d(s) - 1) ds/s + int_1^inf Y_d(s) ds/s.

    The tail is integrated between consecutive zeros of Y_d and the
    alternating partial sums are extrapolated with Wynn's epsilon.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    head, _ = integrate(lambda s: spherical_bessel_Y_minus_one(d, s) / s, 0.0, 1.0, tol=tol)
    zeros = _y_zeros(d, 1.0, math.pi * (n_zeros + d))[:n_zeros]
    edges = [1.0] + zeros
    f = lambda s: spherical_bessel_Y(d, s) / s
    partial = []
    acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        piece, _ = integrate(f, a, b, tol=tol)
        acc += float(piece)
        partial.append(acc)
    return float(head) + wynn_epsilon(partial[-20:])


def density_convolution(theta, x, tol=1e-9):
    """g(x) = int f_{theta/2}(y) f_{theta/2}(y + x) dy.

    This is the density of X1 - X2 with X1, X2 ~ GD_{theta/2} independent,
    i.e. of D(1/theta, atoms +-1 with mass 1/2 each). Symmetric in x.
    """
    _check_theta(theta)
    if _excluded_theta(theta):
        raise ValueError(f"theta = {theta} is of the excluded form 1 + 2n")
    a = theta / 2.0
    x = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    if np.any(x == 0) and a <= 0.5:
        raise ValueError("g(0) diverges for theta <= 1")
    x_top = 20.0
    table = density_table(a, DEFAULT_STEP, x_top + 1)
    C = table.C
    upper = x_top - float(x.max())

    # on (0, 1]: f(u) = C u^{a-1}; u = v^{1/a} turns u^{a-1} du into dv / a
    def head(v):
        u = v ** (1.0 / a)
        return (C / a) * table.density(u[:, None] + x[None, :])

    def body(u):
        return table.density(u)[:, None] * table.density(u[:, None] + x[None, :])

    h_val, _ = integrate(head, 0.0, 1.0, tol=tol / 2)
    b_val, _ = integrate(body, 1.0, upper, tol=tol / 2,
                         breakpoints=np.arange(2.0, upper))
    return h_val + b_val


def _excluded_theta(theta):
    k = (theta - 1.0) / 2.0
    return k >= 0 and abs(k - round(k)) < 1e-12


density_convolution_check = density_convolution
