"""Homogeneous polynomial bookkeeping on R^n.

A homogeneous polynomial of degree d in n variables is a coefficient vector
indexed by the sorted multi-indices of length d (the same ordering the
symmetric-tensor code uses), so ``x**alpha`` with exponent vector ``alpha``
corresponds to the multi-index ``(0,)*alpha[0] + (1,)*alpha[1] + ...``.
Trailing axes of a coefficient array are treated as channels.
"""

from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import betaln, gammaln


@lru_cache(maxsize=None)
def multi_indices(n, d):
    """Sorted index tuples of length ``d`` over ``range(n)``."""
    return tuple(combinations_with_replacement(range(n), d))


@lru_cache(maxsize=None)
def exponents(n, d):
    """Exponent vectors (shape ``(count, n)``) in multi-index order."""
    idx = multi_indices(n, d)
    out = np.zeros((len(idx), n), dtype=np.int64)
    for row, K in enumerate(idx):
        for k in K:
            out[row, k] += 1
    out.setflags(write=False)
    return out


def count(n, d):
    if d < 0:
        return 0
    return len(multi_indices(n, d))


def degree_of(n, length):
    """Degree d with ``count(n, d) == length``."""
    d = 0
    while count(n, d) < length:
        d += 1
    if count(n, d) != length:
        raise ValueError(f"{length} coefficients match no degree for n={n}")
    return d


def _codes(exps, base):
    weights = base ** np.arange(exps.shape[-1], dtype=np.int64)
    return exps @ weights


@lru_cache(maxsize=None)
def _lookup(n, d):
    """Sorted codes and permutation for locating exponent vectors of degree d."""
    exps = exponents(n, d)
    codes = _codes(exps, d + 1)
    order = np.argsort(codes)
    return codes[order], order


def locate(n, exps):
    """Row indices of exponent vectors (all of the same degree) in ``exponents``."""
    exps = np.asarray(exps, dtype=np.int64)
    if exps.size == 0:
        return np.zeros(exps.shape[:-1], dtype=np.int64)
    d = int(exps.reshape(-1, n)[0].sum())
    codes, order = _lookup(n, d)
    pos = np.searchsorted(codes, _codes(exps, d + 1))
    return order[pos]


@lru_cache(maxsize=None)
def factorial_weights(n, d):
    """``alpha!`` for each exponent vector of degree d."""
    exps = exponents(n, d)
    return np.exp(gammaln(exps + 1.0).sum(axis=1))


@lru_cache(maxsize=None)
def multinomials(n, d):
    """Number of index tuples represented by each sorted multi-index."""
    exps = exponents(n, d)
    return np.exp(gammaln(d + 1.0) - gammaln(exps + 1.0).sum(axis=1))


def sphere_moments(exps):
    """Exact integrals of ``x**alpha`` over the unit sphere S^{n-1}.

    ``exps`` has shape ``(..., n)``.  Odd exponents integrate to zero; the
    rest follow ``2 prod Gamma((a_i+1)/2) / Gamma((|a|+n)/2)``.
    """
    exps = np.asarray(exps, dtype=np.int64)
    n = exps.shape[-1]
    odd = np.any(exps % 2 == 1, axis=-1)
    logv = gammaln((exps + 1.0) / 2.0).sum(axis=-1) - gammaln((exps.sum(axis=-1) + n) / 2.0)
    out = 2.0 * np.exp(logv)
    return np.where(odd, 0.0, out)


@lru_cache(maxsize=None)
def moment_matrix(n, a, b):
    """``G[i, j] = integral over S^{n-1} of x**(alpha_i + beta_j)``, degrees a and b."""
    ea = exponents(n, a)
    eb = exponents(n, b)
    G = sphere_moments(ea[:, None, :] + eb[None, :, :])
    G.setflags(write=False)
    return G


@lru_cache(maxsize=None)
def product_table(n, a, b):
    """Index of ``x**(alpha+beta)`` in degree a+b, shape ``(count(a), count(b))``."""
    ea = exponents(n, a)
    eb = exponents(n, b)
    table = locate(n, ea[:, None, :] + eb[None, :, :])
    table.setflags(write=False)
    return table


def multiply(p, q, n, a, b):
    """Product of homogeneous polynomials with channel outer product.

    ``p`` has shape ``(count(a), *cp)``, ``q`` has shape ``(count(b), *cq)``;
    the result has shape ``(count(a+b), *cp, *cq)``.
    """
    table = product_table(n, a, b)
    p = np.asarray(p)
    q = np.asarray(q)
    cp, cq = p.shape[1:], q.shape[1:]
    pf = p.reshape(p.shape[0], -1)
    qf = q.reshape(q.shape[0], -1)
    outer = np.einsum("ix,jy->ijxy", pf, qf)
    out = np.zeros((count(n, a + b), pf.shape[1], qf.shape[1]), dtype=np.result_type(p, q))
    np.add.at(out, table, outer)
    return out.reshape((count(n, a + b),) + cp + cq)


@lru_cache(maxsize=None)
def _derivative_table(n, d, j):
    exps = exponents(n, d)
    rows = np.nonzero(exps[:, j] > 0)[0]
    lowered = exps[rows].copy()
    lowered[:, j] -= 1
    target = locate(n, lowered) if rows.size else rows
    return rows, target, exps[rows, j].astype(float)


def derivative(p, n, d, j):
    """Partial derivative along axis j of a degree-d homogeneous polynomial."""
    p = np.asarray(p)
    out = np.zeros((count(n, d - 1),) + p.shape[1:], dtype=p.dtype if p.dtype.kind == "c" else float)
    if d == 0:
        return out
    rows, target, factor = _derivative_table(n, d, j)
    np.add.at(out, target, p[rows] * factor.reshape((-1,) + (1,) * (p.ndim - 1)))
    return out


def directional_derivative(p, n, d, direction):
    out = 0.0
    for j in range(n):
        if direction[j] != 0.0:
            out = out + direction[j] * derivative(p, n, d, j)
    if np.isscalar(out):
        return np.zeros((count(n, d - 1),) + np.asarray(p).shape[1:])
    return out


def laplacian(p, n, d):
    out = np.zeros((count(n, d - 2),) + np.asarray(p).shape[1:], dtype=np.result_type(p, float))
    if d < 2:
        return out
    for j in range(n):
        out = out + derivative(derivative(p, n, d, j), n, d - 1, j)
    return out


@lru_cache(maxsize=None)
def radial_multiplier(n, d):
    """Matrix of multiplication by ``|x|^2`` from degree d-2 to degree d."""
    out = np.zeros((count(n, d), count(n, d - 2)))
    if d < 2:
        return out
    lower = exponents(n, d - 2)
    for i in range(n):
        raised = lower.copy()
        raised[:, i] += 2
        out[locate(n, raised), np.arange(lower.shape[0])] += 1.0
    return out


def substitution_matrices(M, degree):
    """Matrices ``T_d`` with ``p(M y) = sum_beta (T_d^T p)_beta y**beta``.

    ``M`` is an ``(n, n)`` matrix and ``p`` a degree-d coefficient vector in
    the x variables; returns the list ``[T_0, ..., T_degree]``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    mats = [np.ones((1, 1))]
    for d in range(1, degree + 1):
        exps = exponents(n, d)
        first = np.argmax(exps > 0, axis=1)
        parent_exps = exps.copy()
        parent_exps[np.arange(exps.shape[0]), first] -= 1
        parent = locate(n, parent_exps)
        prev = mats[-1][parent]
        lower = exponents(n, d - 1)
        T = np.zeros((exps.shape[0], exps.shape[0]))
        for j in range(n):
            raised = lower.copy()
            raised[:, j] += 1
            cols = locate(n, raised)
            coef = M[first, j]
            T[:, cols] += coef[:, None] * prev
        mats.append(T)
    return mats


def sine_cosine_integral(p, a):
    """``integral_0^pi sin(phi)**p cos(phi)**a dphi`` for integer p, a >= 0."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a)
    val = np.exp(betaln((p + 1.0) / 2.0, (a + 1.0) / 2.0))
    return np.where(a % 2 == 1, 0.0, val)
