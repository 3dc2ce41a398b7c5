"""Small dense real matrix algebra: M+ membership, matrix exponentials,
the powers u^Q = exp(Q log u), and the Lyapunov operator C -> QC + CQ^T."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MAX_DIM = 64
_TAYLOR_TERMS = 13
_SCALE_TARGET = 0.5
_MPLUS_TOL = 1e-12
# below this, u^Q is returned as the zero matrix (log u * Q may be stiff)
_TINY_U = 1e-300


class NotInMPlusError(ValueError):
    """The matrix has an eigenvalue with non-positive real part."""


def parse_matrix(text):
    """Parse ``"1,0;0,2"`` (rows split by ``;``, entries by ``,``)."""
    rows = [r for r in text.strip().split(";")]
    try:
        data = [[float(v) for v in r.split(",")] for r in rows]
    except ValueError as exc:
        raise ValueError(f"bad matrix text {text!r}: {exc}") from None
    if any(len(r) != len(data[0]) for r in data):
        raise ValueError(f"ragged matrix text {text!r}")
    return np.array(data, dtype=float)


def format_matrix(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return ";".join(",".join(repr(float(v)) for v in row) for row in m)


def matrix_exp(A):
    """exp(A) by scaling and squaring with a 13-term Taylor core.

    Accepts a single ``(d, d)`` matrix or a stack ``(..., d, d)``; each
    matrix is scaled by its own power of two so that ``||A/2^k||_inf <= 0.5``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError("matrix_exp needs square matrices")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exp needs finite entries")
    d = A.shape[-1]
    batch = A.shape[:-2]
    A = A.reshape((-1, d, d))
    norms = np.abs(A).sum(axis=-1).max(axis=-1)
    with np.errstate(divide="ignore"):
        k = np.ceil(np.log2(np.maximum(norms, 1e-300) / _SCALE_TARGET))
    k = np.maximum(k, 0).astype(int)
    S = A / np.ldexp(1.0, k)[:, None, None]

    eye = np.eye(d)
    E = np.broadcast_to(eye / _factorial(_TAYLOR_TERMS), S.shape).copy()
    for j in range(_TAYLOR_TERMS - 1, -1, -1):
        E = S @ E
        E += eye / _factorial(j)
    for step in range(int(k.max(initial=0))):
        sel = k > step
        if sel.all():
            E = E @ E
        else:
            E[sel] = E[sel] @ E[sel]
    return E.reshape(batch + (d, d))


def _factorial(n):
    out = 1.0
    for i in range(2, n + 1):
        out *= i
    return out


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    diagonalizable: bool
    change_of_basis: np.ndarray | None
    # (real eigenvalue, orthonormal basis as columns)
    real_eigenspaces: list = field(default_factory=list)

    @property
    def inverse_change_of_basis(self):
        return None if self.change_of_basis is None else np.linalg.inv(self.change_of_basis)


def spectral_decomposition(M, tol=1e-9):
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    scale = max(np.abs(M).max(), 1.0)
    vals, vecs = np.linalg.eig(M)

    # group numerically equal eigenvalues
    groups = []
    for lam in vals:
        for g in groups:
            if abs(g[0] - lam) <= 1e-8 * scale:
                g[1] += 1
                break
        else:
            groups.append([lam, 1])

    spaces = []
    geometric = 0
    for lam, mult in groups:
        if abs(lam.imag) > 1e-12 * scale:
            geometric += _kernel_dim(M - lam * np.eye(d), tol * scale)
            continue
        a = float(lam.real)
        _, s, vt = np.linalg.svd(M - a * np.eye(d))
        nullity = int(np.sum(s <= tol * scale))
        geometric += nullity
        if nullity:
            spaces.append((a, vt[d - nullity:].T.copy()))
    spaces.sort(key=lambda sp: sp[0])

    diagonalizable = geometric == d
    S = None
    if diagonalizable:
        cond = np.linalg.cond(vecs)
        if np.isfinite(cond) and cond < 1e10:
            S = vecs
        else:
            diagonalizable = False
    return SpectralDecomposition(vals, diagonalizable, S, spaces)


def _kernel_dim(A, tol):
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s <= tol))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A d x d real matrix whose eigenvalues all have positive real part.

    ``growth_bound_K`` is the smallest real part of the spectrum and
    ``scale_c1`` a numerically estimated constant with
    ``|s^Q x| <= c1 * s^K * |x|`` for ``s`` in (0, 1].
    """

    entries: np.ndarray
    spectrum: np.ndarray
    growth_bound_K: float
    scale_c1: float

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def T(self):
        return self.entries.T

    @cached_property
    def decomposition(self):
        return spectral_decomposition(self.entries)

    @cached_property
    def scalar(self):
        """c if Q == c I, else None."""
        c = self.entries[0, 0]
        if np.array_equal(self.entries, c * np.eye(self.dim)):
            return float(c)
        return None

    @cached_property
    def _eigen_route(self):
        dec = self.decomposition
        if not dec.diagonalizable or np.linalg.cond(dec.change_of_basis) > 1e6:
            return None
        return dec.eigenvalues, dec.change_of_basis, np.linalg.inv(dec.change_of_basis)

    def power(self, u):
        """u^Q for a scalar or an array of u values (stacked on the left)."""
        return _power(self, np.asarray(u, dtype=float), transpose=False)

    def power_T(self, u):
        """(u^Q)^T = u^{Q^T}."""
        return _power(self, np.asarray(u, dtype=float), transpose=True)

    def exp_neg(self, t, transpose=False):
        """exp(-t Q) (or exp(-t Q^T)), i.e. s^Q at s = e^{-t}."""
        t = np.asarray(t, dtype=float)
        return _power(self, np.exp(-t), transpose=transpose, log_u=-t)

    def norm_bound(self, s):
        """c1 * s^K, the bound on ||s^Q|| used for truncation."""
        return self.scale_c1 * np.asarray(s, dtype=float) ** self.growth_bound_K


def _power(Q, u, transpose, log_u=None):
    if np.any(u <= 0) and log_u is None:
        raise ValueError("u must be positive for u^Q")
    d = Q.dim
    shape = u.shape
    u = u.ravel()
    lu = np.log(u) if log_u is None else np.asarray(log_u, dtype=float).ravel()
    out = np.zeros((u.size, d, d))
    live = lu > np.log(_TINY_U)
    c = Q.scalar
    if c is not None:
        out[live] = np.exp(c * lu[live])[:, None, None] * np.eye(d)
    elif Q._eigen_route is not None:
        lam, S, Sinv = Q._eigen_route
        diag = np.exp(lu[live][:, None] * lam[None, :])
        P = (S[None, :, :] * diag[:, None, :]) @ Sinv
        if np.iscomplexobj(P):
            P = P.real
        out[live] = P
    else:
        out[live] = matrix_exp(lu[live][:, None, None] * Q.entries)
    one = lu == 0.0
    out[one] = np.eye(d)
    if transpose:
        out = np.swapaxes(out, -1, -2)
    return out.reshape(shape + (d, d))


def matrix_power(Q, u):
    """u^Q = exp(Q log u) for a validated operator and u in (0, 1]."""
    if np.isscalar(u) or np.ndim(u) == 0:
        if u <= 0:
            raise ValueError("u must be positive for u^Q")
    return Q.power(u)


def validate_mplus(M, seed=0):
    """Check M is in M+ and build an :class:`OperatorMatrix`.

    ``scale_c1`` is the maximum of ``|s^Q x| / (s^K |x|)`` over
    s in {2^-20, ..., 1}, the 2d signed axis directions and 100 seeded
    random unit vectors, times a 1.1 safety factor (and at least 1).
    """
    M = np.array(M, dtype=float, copy=True)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"operator must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("operator has non-finite entries")
    d = M.shape[0]
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    spectrum = np.linalg.eigvals(M)
    K = float(spectrum.real.min())
    if K <= _MPLUS_TOL:
        raise NotInMPlusError(
            f"not in M+: eigenvalue with real part {K:.3g} <= {_MPLUS_TOL}")
    M.setflags(write=False)

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((100, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([np.eye(d), -np.eye(d), dirs])
    s = 2.0 ** -np.arange(21)
    P = matrix_exp(np.log(s)[:, None, None] * M)
    scale = s[:, None] ** K
    norms = np.linalg.norm(P @ dirs.T, axis=1)
    # for very stiff Q both sides underflow; those grid points carry no information
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(scale > 0, norms / scale, 0.0)
    c1 = max(1.0, 1.1 * float(ratio.max()))
    return OperatorMatrix(M, spectrum, K, c1)


def lyapunov_solve(Q, B, order="C"):
    """Solve Q C + C Q^T = B for symmetric B.

    The d^2 x d^2 system is assembled for either vectorization order
    (``"C"`` row-major, ``"F"`` column-major) and solved densely.
    """
    if not isinstance(Q, OperatorMatrix):
        Q = validate_mplus(Q)
    B = np.asarray(B, dtype=float)
    d = Q.dim
    if B.shape != (d, d):
        raise ValueError(f"B has shape {B.shape}, expected {(d, d)}")
    if not np.allclose(B, B.T, rtol=1e-12, atol=1e-14 * max(np.abs(B).max(), 1.0)):
        raise ValueError("B must be symmetric")
    I = np.eye(d)
    A = Q.entries
    if order == "C":
        op = np.kron(A, I) + np.kron(I, A)
    elif order == "F":
        op = np.kron(I, A) + np.kron(A, I)
    else:
        raise ValueError("order must be 'C' or 'F'")
    C = np.linalg.solve(op, B.ravel(order=order)).reshape((d, d), order=order)
    return 0.5 * (C + C.T)
