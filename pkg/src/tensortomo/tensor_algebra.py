"""Symmetric tensors over a Euclidean space R^n.

A :class:`SymTensor` stores one coefficient per sorted multi-index ``K``
together with the multiplicity ``mult(K)`` (how many index tuples share that
sorted form).  The Euclidean inner product of two symmetric tensors is then
``sum_K mult(K) f_K conj(h_K)``.

Linear maps are exported as matrices in *orthonormal* coordinates
``fhat_K = sqrt(mult(K)) f_K``; in those coordinates orthogonal projections are
symmetric matrices and adjoints are conjugate transposes.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from math import factorial

import numpy as np

from . import polynomials as poly


class ShapeError(ValueError):
    """Rank or dimension mismatch."""


class PreconditionError(ValueError):
    """An operation was called outside its domain (e.g. a zero covector)."""


def dimension(n, m):
    """Dimension of the space of symmetric m-tensors on R^n."""
    return poly.count(n, m) if m >= 0 else 0


def multiplicities(n, m):
    return poly.multinomials(n, m)


@dataclass(frozen=True, eq=False)
class SymTensor:
    n: int
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs)
        if coeffs.dtype.kind not in "fc":
            coeffs = coeffs.astype(float)
        if coeffs.shape != (dimension(self.n, self.m),):
            raise ShapeError(
                f"expected {dimension(self.n, self.m)} coefficients for n={self.n}, m={self.m}, got {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("SymTensor entries must be finite")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    # construction -----------------------------------------------------------

    @classmethod
    def zeros(cls, n, m, dtype=float):
        return cls(n, m, np.zeros(dimension(n, m), dtype=dtype))

    @classmethod
    def scalar(cls, n, value):
        return cls(n, 0, np.array([value]))

    @classmethod
    def metric(cls, n):
        """The Euclidean metric g_E as a symmetric 2-tensor."""
        return cls.from_full(np.eye(n))

    @classmethod
    def from_full(cls, full, check=True, n=None):
        """Build from a fully symmetric array of shape ``(n,)*m``."""
        full = np.asarray(full)
        m = full.ndim
        if m:
            n = full.shape[0]
        elif n is None:
            raise ShapeError("pass n explicitly for a rank-0 array")
        if check and m >= 2 and not np.allclose(full, symmetrize_full(full), atol=1e-12 * max(1.0, np.abs(full).max())):
            raise ShapeError("array is not symmetric; use symmetrize()")
        if m == 0:
            return cls(n, 0, np.array([full[()]]))
        return cls(n, m, np.array([full[K] for K in poly.multi_indices(n, m)]))

    @classmethod
    def from_orthonormal(cls, n, m, vec):
        return cls(n, m, np.asarray(vec) / np.sqrt(multiplicities(n, m)))

    @classmethod
    def random(cls, n, m, rng, complex_=False):
        c = rng.standard_normal(dimension(n, m))
        if complex_:
            c = c + 1j * rng.standard_normal(dimension(n, m))
        return cls(n, m, c)

    # views --------------------------------------------------------------------

    def full(self):
        """Dense ``(n,)*m`` array."""
        out = np.zeros((self.n,) * self.m, dtype=self.coeffs.dtype)
        if self.m == 0:
            return np.array(self.coeffs[0])
        for value, K in zip(self.coeffs, poly.multi_indices(self.n, self.m)):
            for perm in set(permutations(K)):
                out[perm] = value
        return out

    def orthonormal(self):
        """Coordinates ``sqrt(mult(K)) f_K``."""
        return self.coeffs * np.sqrt(multiplicities(self.n, self.m))

    def evaluate(self, v):
        """``f(v, ..., v)`` for a vector or an array of row vectors."""
        v = np.asarray(v)
        pts = np.atleast_2d(v)
        vals = poly_eval(self.as_polynomial(), pts, self.n)
        return vals if v.ndim > 1 else vals[0]

    def as_polynomial(self):
        """Coefficients of ``v -> f(v, ..., v)`` in the monomial basis."""
        return multiplicities(self.n, self.m) * self.coeffs

    def inner(self, other):
        _check_same(self, other)
        return np.sum(multiplicities(self.n, self.m) * self.coeffs * np.conj(other.coeffs))

    def norm(self):
        return float(np.sqrt(abs(self.inner(self))))

    def __add__(self, other):
        _check_same(self, other)
        return SymTensor(self.n, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return SymTensor(self.n, self.m, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SymTensor(self.n, self.m, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SymTensor(self.n, self.m, -self.coeffs)

    def allclose(self, other, atol=1e-12):
        return self.n == other.n and self.m == other.m and np.allclose(self.coeffs, other.coeffs, atol=atol)


def _check_same(a, b):
    if a.n != b.n or a.m != b.m:
        raise ShapeError(f"rank/dimension mismatch: ({a.n},{a.m}) vs ({b.n},{b.m})")


def poly_eval(coeffs, points, n):
    from ._kernels import monomial_values

    d = poly.degree_of(n, len(coeffs))
    return monomial_values(np.asarray(points, dtype=float), poly.exponents(n, d)) @ coeffs


# ---------------------------------------------------------------------------
# Full-array helpers
# ---------------------------------------------------------------------------


def symmetrize_full(t):
    t = np.asarray(t)
    m = t.ndim
    if m <= 1:
        return t.copy()
    acc = np.zeros_like(t)
    for perm in permutations(range(m)):
        acc = acc + np.transpose(t, perm)
    return acc / factorial(m)


def symmetrize(t, n=None, m=None):
    """Orthogonal projection of a raw tensor (full index table) onto symmetric tensors."""
    t = np.asarray(t)
    if n is not None and t.ndim and any(s != n for s in t.shape):
        raise ShapeError(f"expected all axes of length {n}, got {t.shape}")
    if m is not None and t.ndim != m:
        raise ShapeError(f"expected rank {m}, got {t.ndim}")
    if t.ndim and len(set(t.shape)) != 1:
        raise ShapeError(f"raw tensor must be square, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("entries must be finite")
    return SymTensor.from_full(symmetrize_full(t), check=False, n=n)


def trace(f):
    """``(T f)(...) = sum_i f(e_i, e_i, ...)``; zero for ranks 0 and 1."""
    if f.m < 2:
        return SymTensor.zeros(f.n, 0, dtype=f.coeffs.dtype)
    full = f.full()
    if f.m == 2:
        return SymTensor.scalar(f.n, np.trace(full))
    return SymTensor.from_full(np.trace(full, axis1=0, axis2=1), check=False)


def jay(f):
    """``J f = S(g_E (x) f)``, the adjoint of the trace."""
    full = f.full()
    raw = np.multiply.outer(np.eye(f.n), full)
    return SymTensor.from_full(symmetrize_full(raw), check=False)


def symmetric_product(a, b):
    """``S(a (x) b)`` for symmetric tensors a and b."""
    if a.n != b.n:
        raise ShapeError("dimension mismatch")
    raw = np.multiply.outer(a.full(), b.full())
    return SymTensor.from_full(symmetrize_full(raw), check=False)


def contract(f, w):
    """``iota_w f = f(w, ...)``."""
    if f.m == 0:
        return SymTensor.zeros(f.n, 0, dtype=f.coeffs.dtype)
    full = np.tensordot(np.asarray(w), f.full(), axes=(0, 0))
    if f.m == 1:
        return SymTensor.scalar(f.n, full)
    return SymTensor.from_full(full, check=False)


# ---------------------------------------------------------------------------
# Matrices in orthonormal coordinates
# ---------------------------------------------------------------------------


def _basis_tensors(n, m):
    for j in range(dimension(n, m)):
        e = np.zeros(dimension(n, m))
        e[j] = 1.0
        yield SymTensor.from_orthonormal(n, m, e)


def _matrix_of(op, n, m_in, m_out):
    cols = [op(e).orthonormal() for e in _basis_tensors(n, m_in)]
    if not cols:
        return np.zeros((dimension(n, m_out), 0))
    return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def trace_matrix(n, m):
    if m < 2:
        raise ShapeError("trace matrix needs rank >= 2")
    return _matrix_of(trace, n, m, m - 2)


@lru_cache(maxsize=None)
def jay_matrix(n, m):
    return _matrix_of(jay, n, m, m + 2)


@lru_cache(maxsize=None)
def symmetrizer_matrix(n, m):
    """Matrix of S on the full tensor space, mapping n^m raw entries to orthonormal coords."""
    cols = []
    for flat in range(n**m):
        raw = np.zeros(n**m)
        raw[flat] = 1.0
        cols.append(symmetrize(raw.reshape((n,) * m), n=n).orthonormal())
    return np.stack(cols, axis=1)


def j_xi_matrix(xi, m):
    """Matrix of ``j_xi = S(xi (x) .)`` from rank m-1 to rank m."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    if m < 1:
        return np.zeros((dimension(n, m), 0))
    xi_t = SymTensor(n, 1, xi)
    return _matrix_of(lambda e: symmetric_product(xi_t, e), n, m - 1, m)


def iota_matrix(w, m):
    """Matrix of the contraction ``iota_w`` from rank m to rank m-1."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if m < 1:
        return np.zeros((0, dimension(n, m)))
    return _matrix_of(lambda e: contract(e, w), n, m, m - 1)


def slot_projection_matrix(P, m):
    """Matrix of ``f -> f(P., ..., P.)`` for an n x n matrix P (orthonormal coords)."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if m == 0:
        return np.ones((1, 1))
    # f(Pv,...,Pv) as a polynomial: substitute x = P^T v ... computed via full arrays
    cols = []
    for e in _basis_tensors(n, m):
        full = e.full()
        for axis in range(m):
            full = np.moveaxis(np.tensordot(P, full, axes=(0, axis)), 0, axis)
        cols.append(SymTensor.from_full(full, check=False).orthonormal())
    return np.stack(cols, axis=1)


def _check_covector(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or not np.all(np.isfinite(xi)):
        raise ShapeError("covector must be a finite 1-D array")
    norm = np.linalg.norm(xi)
    if norm == 0.0:
        raise PreconditionError("covector must be non-zero")
    return xi, norm


def ker_iota_projector(xi, m):
    """Orthogonal projector onto ``ker iota_{xi#}`` in orthonormal coordinates.

    Realized as ``f -> f(Q., ..., Q.)`` with ``Q = I - n n^T``, the m-fold tensor
    power of the projector onto ``ker xi``.
    """
    xi, norm = _check_covector(xi)
    nvec = xi / norm
    Q = np.eye(xi.shape[0]) - np.outer(nvec, nvec)
    return slot_projection_matrix(Q, m)


def project_ker_iota(xi, f):
    """Orthogonal projection of f onto ``{h : h(xi#, ...) = 0}``."""
    xi, _ = _check_covector(xi)
    if xi.shape[0] != f.n:
        raise ShapeError("covector dimension does not match tensor")
    P = ker_iota_projector(xi, f.m)
    return SymTensor.from_orthonormal(f.n, f.m, P @ f.orthonormal())


def tracefree_decompose(f):
    """Trace-free tensors ``f_k`` (rank m-2k) with ``f = sum_k J^k f_k``.

    Each step splits off the component in ``ran J`` using
    ``J (T J)^{-1} T``, the orthogonal projector onto ``ran J``.
    """
    parts = []
    current = f
    while True:
        if current.m < 2:
            parts.append(current)
            break
        T = trace_matrix(current.n, current.m)
        J = jay_matrix(current.n, current.m - 2)
        x = current.orthonormal()
        g = np.linalg.solve(T @ J, T @ x)
        parts.append(SymTensor.from_orthonormal(current.n, current.m, x - J @ g))
        current = SymTensor.from_orthonormal(current.n, current.m - 2, g)
    return parts


def reconstruct(parts):
    """Inverse of :func:`tracefree_decompose`."""
    total = None
    for k, part in enumerate(parts):
        term = part
        for _ in range(k):
            term = jay(term)
        total = term if total is None else total + term
    return total
