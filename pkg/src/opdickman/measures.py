"""Jump-amplitude laws nu with a finite logarithmic moment.

Every measure can draw samples, evaluate its characteristic function
nu_hat(z) = E exp(i z.W) on a stack of frequencies, and report the moment
information used by the moment formulas and by quadrature truncation.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .quadrature import integrate

# series for Y_d is used for s below this
_SERIES_CUTOFF = 1.0


def spherical_bessel_Y(d, s):
    """CF of the uniform law on S^{d-1}: Gamma(d/2) (s/2)^{1-d/2} J_{d/2-1}(s)."""
    return spherical_bessel_Y_minus_one(d, s) + 1.0


def spherical_bessel_Y_minus_one(d, s):
    """Y_d(s) - 1 without cancellation for small s."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be non-negative")
    out = np.empty_like(s)
    small = s <= _SERIES_CUTOFF
    if np.any(small):
        out[small] = _y_series_minus_one(d, s[small])
    big = ~small
    if np.any(big):
        sb = s[big]
        if d == 1:
            out[big] = np.cos(sb) - 1.0
        elif d == 3:
            out[big] = np.sin(sb) / sb - 1.0
        else:
            nu = d / 2.0 - 1.0
            out[big] = (math.gamma(d / 2.0) * (sb / 2.0) ** (-nu)
                        * special.jv(nu, sb) - 1.0)
    return out


def _y_series_minus_one(d, s):
    # Y_d(s) = sum_k (-1)^k (s/2)^{2k} Gamma(d/2) / (k! Gamma(k + d/2))
    q = -(s / 2.0) ** 2
    term = np.ones_like(s)
    total = np.zeros_like(s)
    half = d / 2.0
    for k in range(1, 30):
        term = term * q / (k * (k - 1 + half))
        total += term
    return total


def bessel_i0(x):
    """Modified Bessel I_0 by its power series sum (x^2/4)^k / (k!)^2."""
    x = float(x)
    q = x * x / 4.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if term < 1e-17 * total:
            return total


def von_mises_density(kappa, mu, x):
    if kappa <= 0:
        raise ValueError("von Mises concentration kappa must be positive")
    x = np.asarray(x, dtype=float)
    return np.exp(kappa * np.cos(x - mu)) / (2.0 * math.pi * bessel_i0(kappa))


def sample_von_mises_angles(kappa, mu, n, rng):
    """Best-Fisher rejection sampler for angles in [0, 2 pi)."""
    if kappa < 1e-5:
        r = 1.0 / kappa + kappa
    else:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        m = todo.size
        u1, u2, u3 = rng.random((3, m))
        z = np.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        idx = todo[accept]
        out[idx] = mu + np.sign(u3[accept] - 0.5) * np.arccos(np.clip(f[accept], -1, 1))
        todo = todo[~accept]
    return np.mod(out, 2.0 * math.pi)


class AmplitudeMeasure:
    """Base class. Subclasses set ``dim`` and ``kind``."""

    dim: int
    kind: str

    mean = None
    second_moment = None
    # E|W|, used to bound |nu_hat(y) - 1| <= |y| E|W|
    abs_moment = None
    log_moment_bound = 0.0

    def sample(self, rng, n):
        raise NotImplementedError

    def cf(self, z):
        return self.cf_minus_one(z) + 1.0

    def cf_minus_one(self, z):
        raise NotImplementedError

    def spec(self):
        raise NotImplementedError

    def _as_points(self, z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z.reshape(1)
        if z.shape[-1] != self.dim:
            raise ValueError(f"frequency has dimension {z.shape[-1]}, measure has {self.dim}")
        return z


@dataclass(frozen=True, eq=False)
class Atoms(AmplitudeMeasure):
    """nu = sum_i p_i delta_{w_i} for arbitrary non-zero points w_i."""

    points: np.ndarray
    probs: np.ndarray
    kind: str = field(default="atoms")

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if pts.shape[0] != p.shape[0]:
            raise ValueError("need one probability per atom")
        if np.any(p <= 0):
            raise ValueError("atom probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {p.sum()!r}, not 1")
        if np.any(np.linalg.norm(pts, axis=1) == 0):
            raise ValueError("the zero atom is excluded (nu({0}) must be 0)")
        pts.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def mean(self):
        return self.probs @ self.points

    @property
    def second_moment(self):
        return (self.points * self.probs[:, None]).T @ self.points

    @property
    def abs_moment(self):
        return float(self.probs @ np.linalg.norm(self.points, axis=1))

    @property
    def log_moment_bound(self):
        r = np.linalg.norm(self.points, axis=1)
        return float(self.probs @ np.log(np.maximum(r, 1.0)))

    def sample(self, rng, n):
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.points[idx]

    def cf_minus_one(self, z):
        z = self._as_points(z)
        phase = z @ self.points.T
        return np.expm1(1j * phase) @ self.probs

    def spec(self):
        if self.kind == "delta":
            return "delta:w=" + ",".join(_fmt(v) for v in self.points[0])
        parts = ["(" + ",".join(_fmt(v) for v in w) + ")@" + _fmt(p)
                 for w, p in zip(self.points, self.probs)]
        return "atoms:" + ";".join(parts)

    def on_unit_sphere(self, tol=1e-12):
        return bool(np.all(np.abs(np.linalg.norm(self.points, axis=1) - 1.0) <= tol))


def delta(w):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    return Atoms(w[None, :], np.ones(1), kind="delta")


@dataclass(frozen=True, eq=False)
class UniformSphere(AmplitudeMeasure):
    """Uniform law on the unit sphere S^{d-1}."""

    dim: int
    kind: str = field(default="usphere")

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def mean(self):
        return np.zeros(self.dim)

    @property
    def second_moment(self):
        return np.eye(self.dim) / self.dim

    abs_moment = 1.0
    log_moment_bound = 0.0

    def sample(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def cf_minus_one(self, z):
        z = self._as_points(z)
        return spherical_bessel_Y_minus_one(self.dim, np.linalg.norm(z, axis=-1)) + 0j

    def cap_mass(self, half_angle):
        """nu({x : x.c >= cos(phi)}) for any axis c."""
        phi = float(half_angle)
        if self.dim == 1:
            return 1.0 if phi >= math.pi else 0.5
        if phi >= math.pi:
            return 1.0
        a = (self.dim - 1) / 2.0
        piece = 0.5 * special.betainc(a, 0.5, math.sin(min(phi, math.pi / 2)) ** 2)
        return float(piece if phi <= math.pi / 2 else 1.0 - 0.5 * special.betainc(
            a, 0.5, math.sin(math.pi - phi) ** 2))

    def spec(self):
        return "usphere"


@dataclass(frozen=True, eq=False)
class VonMises(AmplitudeMeasure):
    """(cos T, sin T) on S^1 with T von Mises(mu, kappa)."""

    mu: float
    kappa: float
    kind: str = field(default="vonmises")
    dim: int = field(default=2)

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("von Mises concentration kappa must be positive")

    @property
    def _resultant(self):
        # E cos(T - mu) = I1(kappa) / I0(kappa)
        return special.i1(self.kappa) / special.i0(self.kappa)

    @property
    def mean(self):
        return self._resultant * np.array([math.cos(self.mu), math.sin(self.mu)])

    @property
    def second_moment(self):
        # E cos(2(T - mu)) = I2 / I0
        c2 = special.iv(2, self.kappa) / special.i0(self.kappa)
        m2 = 2 * self.mu
        return 0.5 * (np.eye(2) + c2 * np.array([[math.cos(m2), math.sin(m2)],
                                                  [math.sin(m2), -math.cos(m2)]]))

    abs_moment = 1.0
    log_moment_bound = 0.0

    def sample(self, rng, n):
        t = sample_von_mises_angles(self.kappa, self.mu, n, rng)
        return np.column_stack([np.cos(t), np.sin(t)])

    def cf_minus_one(self, z, tol=1e-11):
        z = self._as_points(z)
        flat = z.reshape(-1, 2)
        dens = lambda t: von_mises_density(self.kappa, self.mu, t)

        def integrand(t):
            phase = np.cos(t)[:, None] * flat[None, :, 0] + np.sin(t)[:, None] * flat[None, :, 1]
            return np.expm1(1j * phase) * dens(t)[:, None]

        val, _ = integrate(integrand, 0.0, 2 * math.pi, tol=tol, initial_panels=8)
        return val.reshape(z.shape[:-1])

    def cap_mass(self, axis_angle, half_angle, tol=1e-12):
        if half_angle >= math.pi:
            return 1.0
        val, _ = integrate(lambda t: von_mises_density(self.kappa, self.mu, t),
                           axis_angle - half_angle, axis_angle + half_angle, tol=tol)
        return float(val)

    def spec(self):
        return f"vonmises:mu={_fmt(self.mu)},kappa={_fmt(self.kappa)}"


@dataclass(frozen=True, eq=False)
class ExponentialRadial(AmplitudeMeasure):
    """Exp(rate) on the positive half-line (d = 1)."""

    rate: float = 1.0
    kind: str = field(default="exp")
    dim: int = field(default=1)

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    @property
    def mean(self):
        return np.array([1.0 / self.rate])

    @property
    def second_moment(self):
        return np.array([[2.0 / self.rate ** 2]])

    @property
    def abs_moment(self):
        return 1.0 / self.rate

    @property
    def log_moment_bound(self):
        # E log+ W = int_1^inf log(x) rate e^{-rate x} dx = E1(rate) after integrating by parts
        return float(special.exp1(self.rate))

    def sample(self, rng, n):
        return rng.exponential(1.0 / self.rate, size=(n, 1))

    def cf_minus_one(self, z):
        z = self._as_points(z)[..., 0]
        return 1j * z / (self.rate - 1j * z)

    def spec(self):
        return f"exp:rate={_fmt(self.rate)}"


@dataclass(frozen=True, eq=False)
class Mixture(AmplitudeMeasure):
    """sum_k c_k nu_k for probability weights c_k."""

    components: tuple
    weights: np.ndarray
    kind: str = field(default="mixture")

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("mixture components must share a dimension")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.components[0].dim

    def _combine(self, attr):
        vals = [getattr(c, attr) for c in self.components]
        if any(v is None for v in vals):
            return None
        return sum(w * v for w, v in zip(self.weights, vals))

    @property
    def mean(self):
        return self._combine("mean")

    @property
    def second_moment(self):
        return self._combine("second_moment")

    @property
    def abs_moment(self):
        return self._combine("abs_moment")

    @property
    def log_moment_bound(self):
        return self._combine("log_moment_bound")

    def sample(self, rng, n):
        which = rng.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            sel = which == k
            if sel.any():
                out[sel] = comp.sample(rng, int(sel.sum()))
        return out

    def cf_minus_one(self, z):
        return sum(w * c.cf_minus_one(z) for w, c in zip(self.weights, self.components))

    def spec(self):
        return "mix:" + "|".join(f"{_fmt(w)}*{c.spec()}" for w, c in zip(self.weights, self.components))


def mixture(measures, weights):
    """Mix measures, merging into a single atom list when all are atomic."""
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    if all(isinstance(m, Atoms) for m in measures):
        pts = []
        probs = []
        for m, w in zip(measures, weights):
            for x, p in zip(m.points, m.probs):
                for j, y in enumerate(pts):
                    if np.array_equal(x, y):
                        probs[j] += w * p
                        break
                else:
                    pts.append(x)
                    probs.append(w * p)
        probs = np.array(probs)
        if len(pts) == 1:
            return delta(pts[0])
        return Atoms(np.array(pts), probs / probs.sum())
    return Mixture(tuple(measures), weights)


def sample_amplitude(nu, rng):
    """One draw from nu."""
    return nu.sample(rng, 1)[0]


def cf_amplitude(nu, z):
    return nu.cf(z)


def _fmt(v):
    return repr(float(v))


_ATOM_RE = re.compile(r"\(([^)]*)\)@([^;]+)")


def parse_measure(text, dim=None):
    """Parse a measure spec string.

    Accepted forms: ``delta:w=1,0``, ``atoms:(1,0)@0.5;(0,1)@0.5``,
    ``usphere`` (needs ``dim``), ``vonmises:mu=0.5,kappa=2``, ``exp:rate=1``.
    """
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "delta":
            key, _, val = rest.partition("=")
            if key.strip() != "w":
                raise ValueError("delta needs w=...")
            nu = delta([float(v) for v in val.split(",")])
        elif kind == "atoms":
            found = _ATOM_RE.findall(rest)
            if not found:
                raise ValueError("no atoms found")
            pts = [[float(v) for v in a.split(",")] for a, _ in found]
            probs = [float(p) for _, p in found]
            nu = Atoms(np.array(pts), np.array(probs))
        elif kind == "usphere":
            if dim is None:
                raise ValueError("usphere needs a dimension")
            nu = UniformSphere(int(dim))
        elif kind == "vonmises":
            kw = _keywords(rest)
            nu = VonMises(mu=kw.get("mu", 0.0), kappa=kw["kappa"])
        elif kind == "exp":
            kw = _keywords(rest)
            nu = ExponentialRadial(rate=kw.get("rate", 1.0))
        else:
            raise ValueError(f"unknown measure kind {kind!r}")
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad measure spec {text!r}: {exc}") from None
    if dim is not None and nu.dim != int(dim):
        raise ValueError(f"measure {text!r} has dimension {nu.dim}, expected {dim}")
    return nu


def _keywords(rest):
    out = {}
    for item in rest.split(","):
        if not item.strip():
            continue
        k, _, v = item.partition("=")
        out[k.strip()] = float(v)
    return out
