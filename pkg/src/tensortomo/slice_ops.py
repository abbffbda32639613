"""Slicing S^{n-1} along the equator of a covector.

A point of the sphere is written ``v = cos(phi) n(xi) + sin(phi) u`` with
``u`` on the equatorial sphere ``S^{n-2}_xi = {u : <xi, u> = 0}``.  Inner
functions live in coordinates ``w`` with ``u = B w`` where the columns of
``B`` are an orthonormal basis of ``ker xi``.

Extensions are computed from exact moments: after rotating to the frame
``M = [n(xi) | B]`` every outer harmonic becomes a polynomial in
``(cos phi, sin phi * w)``, so the band coefficients of ``E^k f`` reduce to
Beta integrals in phi times sphere moments of f.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gammaln

from . import polynomials as poly
from .spherical_harmonics import (
    CutoffError,
    SphereFunction,
    build_basis,
    degree,
    sphere_quadrature,
)
from .tensor_algebra import PreconditionError, ShapeError


def c_constant(m):
    """``C_m = int_0^pi sin^{m-1}`` = sqrt(pi) Gamma(m/2) / Gamma((m+1)/2)."""
    if int(m) != m or m < 1:
        raise ValueError(f"C_m needs an integer m >= 1, got {m}")
    return math.exp(0.5 * math.log(math.pi) + gammaln(m / 2.0) - gammaln((m + 1) / 2.0))


def _kernel_frame(nvec):
    """Greedy Gram-Schmidt over the canonical axes, largest residual first."""
    n = nvec.shape[0]
    span = [nvec]
    chosen = []
    remaining = list(range(n))
    while len(span) < n:
        Q = np.array(span)
        best, best_norm, best_vec = None, -1.0, None
        for i in remaining:
            r = -Q.T @ Q[:, i]
            r[i] += 1.0
            nr = np.linalg.norm(r)
            if nr > best_norm + 1e-12:
                best, best_norm, best_vec = i, nr, r
        # one re-orthogonalization pass for stability
        best_vec = best_vec - Q.T @ (Q @ best_vec)
        best_vec /= np.linalg.norm(best_vec)
        span.append(best_vec)
        chosen.append(best)
        remaining.remove(best)
    return np.array(span[1:]).T


@dataclass(frozen=True, eq=False)
class SliceFrame:
    xi: np.ndarray
    normal: np.ndarray
    B: np.ndarray

    @property
    def n(self):
        return self.xi.shape[0]

    @property
    def norm(self):
        return float(np.linalg.norm(self.xi))

    @property
    def M(self):
        return np.column_stack([self.normal, self.B])

    def inner_basis(self, N):
        return build_basis(self.n - 1, N)

    def to_outer(self, w):
        """Equator points ``u = B w`` from inner coordinates."""
        return np.atleast_2d(w) @ self.B.T

    @cached_property
    def _substitutions(self):
        return {}

    def substitution(self, d):
        """``T_d`` for ``x = M y`` (cached per frame)."""
        cache = self._substitutions
        if d not in cache:
            top = max(d, max(cache) if cache else 0)
            mats = poly.substitution_matrices(self.M, top)
            for k, T in enumerate(mats):
                cache.setdefault(k, T)
        return cache[d]


def frame(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.shape[0] < 2:
        raise ShapeError("covector must be 1-D with n >= 2")
    if not np.all(np.isfinite(xi)):
        raise ValueError("covector entries must be finite")
    nrm = np.linalg.norm(xi)
    if nrm == 0.0:
        raise PreconditionError("covector must be non-zero")
    nvec = xi / nrm
    B = _kernel_frame(nvec)
    return SliceFrame(xi.copy(), nvec, B)


@lru_cache(maxsize=None)
def _equator_rows(n, d, power):
    """Rows of degree-d y-monomials with ``y_0`` exponent ``power`` and their inner indices."""
    exps = poly.exponents(n, d)
    rows = np.nonzero(exps[:, 0] == power)[0]
    inner = exps[rows, 1:]
    if n == 1:
        return rows, np.zeros(rows.shape, dtype=np.int64)
    return rows, poly.locate(n - 1, inner) if rows.size else rows


def _inner_cutoff(u, fr, inner_N):
    if inner_N is None:
        inner_N = max(u.cutoff, 0)
    top = degree(u, tol=0.0)
    if top != -math.inf and top > inner_N:
        raise CutoffError(f"inner cutoff {inner_N} below input degree {top}")
    return fr.inner_basis(inner_N)


def restrict(u, fr, inner_N=None):
    """Expansion of ``u`` restricted to the equator, in inner harmonics."""
    if u.n != fr.n:
        raise ShapeError("frame and function dimensions differ")
    inner = _inner_cutoff(u, fr, inner_N)
    out = SphereFunction.zeros(inner, channels=u.channels, dtype=_dtype(u))
    for d, b in enumerate(u.bands):
        if not np.any(b):
            continue
        q = np.tensordot(fr.substitution(d).T, u.polynomial(d), axes=(1, 0))
        rows, idx = _equator_rows(fr.n, d, 0)
        r = np.zeros((poly.count(fr.n - 1, d),) + u.channels, dtype=q.dtype)
        r[idx] = q[rows]
        out = out + SphereFunction.from_polynomial(inner, r, d)
    return out


def differentiated_restrict(u, fr, inner_N=None):
    """``<xi_V, grad_V u>`` on the equator, i.e. ``dU(xi#)`` for the harmonic extension U."""
    if u.n != fr.n:
        raise ShapeError("frame and function dimensions differ")
    inner = _inner_cutoff(u, fr, inner_N)
    out = SphereFunction.zeros(inner, channels=u.channels, dtype=_dtype(u))
    for d, b in enumerate(u.bands):
        if d == 0 or not np.any(b):
            continue
        q = np.tensordot(fr.substitution(d).T, u.polynomial(d), axes=(1, 0))
        rows, idx = _equator_rows(fr.n, d, 1)
        r = np.zeros((poly.count(fr.n - 1, d - 1),) + u.channels, dtype=q.dtype)
        r[idx] = q[rows]
        out = out + SphereFunction.from_polynomial(inner, fr.norm * r, d - 1)
    return out


def _dtype(u):
    return complex if any(np.iscomplexobj(b) for b in u.bands) else float


def extension_energy(f, k):
    """Exact ``||E^k f||^2 = C_{2k+n-1} ||f||^2`` (n the outer dimension)."""
    return c_constant(2 * k + f.n) * f.norm_sq()


def _inner_moments(f, s):
    """``mu[beta'] = int_{S^{n-2}} f w^{beta'}`` for all inner monomials of degree s."""
    n_in = f.n
    acc = np.zeros((poly.count(n_in, s),) + f.channels, dtype=_dtype(f))
    for a, b in enumerate(f.bands):
        if (a + s) % 2 or not np.any(b):
            continue
        G = poly.moment_matrix(n_in, s, a)
        acc = acc + np.tensordot(G, f.polynomial(a), axes=(1, 0))
    return acc


def extend_k(f, k, fr, outer_N=None, cutoff=None):
    """``E^k_xi f``, projected exactly onto outer bands ``0..cutoff``.

    ``E^k f(cos(phi) n + sin(phi) u) = sin(phi)^k f(u)``.  The result records
    the exact norm in ``total_energy`` so degree queries and the captured
    energy fraction account for the tail beyond the cutoff.
    """
    if k < 0:
        raise ValueError("extension order must be >= 0")
    if f.n != fr.n - 1:
        raise ShapeError("inner function dimension must be n - 1")
    n = fr.n
    deg_f = degree(f, tol=0.0)
    if outer_N is None:
        outer_N = max(k + (0 if deg_f == -math.inf else deg_f) + 2, f.cutoff)
    basis = build_basis(n, outer_N)
    cutoff = basis.N if cutoff is None else cutoff
    if cutoff > basis.N:
        raise CutoffError(f"cutoff {cutoff} exceeds outer basis {basis.N}")
    if deg_f != -math.inf and cutoff < k + deg_f + 2:
        raise CutoffError(f"outer cutoff {cutoff} below k + deg f + 2 = {k + deg_f + 2}")
    bands = extension_bands(f, k, fr, basis, cutoff)
    return SphereFunction(basis, tuple(bands), total_energy=extension_energy(f, k))


def extension_values(f, k, fr, points):
    """Point values of ``E^k f`` straight from the definition."""
    points = np.atleast_2d(points)
    y = points @ fr.B
    s = np.linalg.norm(y, axis=1)
    safe = np.where(s > 0.0, s, 1.0)
    vals = f.evaluate(y / safe[:, None])
    scale = np.where(s > 0.0, s, 0.0) ** k
    return vals * scale.reshape((-1,) + (1,) * (vals.ndim - 1))


def outer_norm_sq(f, k, fr, quad_degree=None):
    """``||E^k f||^2`` by the frame-rotated outer product rule.

    In rotated coordinates the rule slices along ``t = cos(phi)``, so
    ``|E^k f|^2 = (1 - t^2)^k |f(u)|^2`` is a polynomial on every slice and the
    rule is exact once its degree covers ``2k`` and ``2 deg f``.
    """
    D = quad_degree if quad_degree is not None else 2 * max(k, f.cutoff) + 2
    rule = sphere_quadrature(fr.n, D).rotated(fr.M)
    vals = extension_values(f, k, fr, rule.nodes)
    sq = np.abs(vals) ** 2
    return float(np.sum(rule.integrate(sq)))


def extension_bands(f, k, fr, basis, cutoff):
    """Exact outer band coefficients ``0..cutoff`` of ``E^k f`` (no tail guard)."""
    n = fr.n
    if cutoff > basis.N:
        raise CutoffError(f"cutoff {cutoff} exceeds outer basis {basis.N}")
    mus = {}
    bands = []
    for ell in range(cutoff + 1):
        exps = poly.exponents(n, ell)
        b0 = exps[:, 0]
        v = np.zeros((exps.shape[0],) + f.channels, dtype=_dtype(f))
        for s in range(ell + 1):
            if s not in mus:
                mus[s] = _inner_moments(f, s)
            if not np.any(mus[s]):
                continue
            rows = np.nonzero(b0 == ell - s)[0]
            inner_idx = poly.locate(n - 1, exps[rows, 1:])
            # int_0^pi sin^(k + s + n - 2) cos^(ell - s)
            v[rows] = poly.sine_cosine_integral(k + s + n - 2, ell - s) * mus[s][inner_idx]
        bands.append(np.tensordot(basis.blocks[ell] @ fr.substitution(ell), v, axes=(1, 0)))
    return bands


def pairing_lhs(f, fprime_tensor, fr, m, quad_degree=None):
    """``C_{m+m'+n-1} * int_{S^{n-2}} <f, pi_{m'}^* f'>`` by equatorial quadrature.

    ``f`` is an inner sphere function (channels allowed, matched against the
    trailing channel axes of ``fprime_tensor`` given as a list of SymTensors
    per channel or a single SymTensor for scalar f).
    """
    mp = fprime_tensor.m
    n = fr.n
    D = quad_degree if quad_degree is not None else 2 * max(f.cutoff, mp) + 2
    rule = sphere_quadrature(n - 1, D)
    pts = fr.to_outer(rule.nodes)
    vals = f.evaluate(rule.nodes)
    tv = fprime_tensor.evaluate(pts)
    integral = rule.integrate(vals * np.conj(tv))
    return c_constant(m + mp + n - 1) * integral


def sphere_scaling_jacobian(A0, A1, x):
    """Jacobian of the radial scaling ``R`` from the A0-sphere to the A1-sphere.

    ``R^* dvol_{A1}(x) = sqrt(det A1 / det A0) <A1 x, x>^{-n/2} dvol_{A0}(x)``.
    """
    A0 = _check_spd(A0, "A0")
    A1 = _check_spd(A1, "A1")
    x = np.asarray(x, dtype=float)
    n = A0.shape[0]
    if A1.shape != A0.shape or x.shape[-1] != n:
        raise ShapeError("matrix and point dimensions differ")
    q0 = np.einsum("...i,ij,...j->...", x, A0, x)
    if np.any(np.abs(q0 - 1.0) > 1e-8):
        raise PreconditionError("x must satisfy <A0 x, x> = 1")
    q1 = np.einsum("...i,ij,...j->...", x, A1, x)
    ld0 = np.linalg.slogdet(A0)[1]
    ld1 = np.linalg.slogdet(A1)[1]
    return np.exp(0.5 * (ld1 - ld0)) * q1 ** (-n / 2.0)


def _check_spd(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return A
