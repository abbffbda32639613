"""Spherical harmonics on S^{n-1} in any dimension.

Bands are stored as harmonic homogeneous polynomials.  ``HarmonicBasis.blocks[k]``
has shape ``(dim Omega_k, count(n, k))``: row j holds the monomial
coefficients of the j-th orthonormal harmonic of degree k.  Everything that
touches a single homogeneous polynomial (projection, products, pullback of
tensors) is done with exact sphere moments, so no quadrature enters the
algebra.  :class:`QuadratureRule` exists for cross-checks and for callers
that only have point values.

``n = 1`` is allowed and describes the two-point sphere S^0 with counting
measure, which is what the equator of S^1 looks like.
"""

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import comb, roots_jacobi

from . import polynomials as poly
from ._kernels import monomial_values
from .tensor_algebra import ShapeError, SymTensor, dimension

ZERO_DEGREE = -math.inf
BASIS_FORMAT = "tensortomo-harmonic-basis"
BASIS_VERSION = 1


class CutoffError(ValueError):
    """An operation needs bands beyond the basis cutoff."""


def harmonic_dimension(n, k):
    """``dim Omega_k`` on S^{n-1}."""
    if k < 0:
        return 0
    return int(comb(n + k - 1, k, exact=True) - (comb(n + k - 3, k - 2, exact=True) if k >= 2 else 0))


def monomial_sphere_integral(alpha):
    """Exact integral of ``x**alpha`` over the unit sphere in R^len(alpha)."""
    return float(poly.sphere_moments(np.asarray(alpha)[None, :])[0])


def sphere_volume(n):
    """Surface measure of S^{n-1} (2 for the two-point sphere S^0)."""
    return monomial_sphere_integral(np.zeros(n, dtype=int))


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    n: int
    N: int
    blocks: tuple

    @property
    def dims(self):
        return tuple(b.shape[0] for b in self.blocks)

    def offsets(self, cutoff=None):
        cutoff = self.N if cutoff is None else cutoff
        return np.concatenate([[0], np.cumsum(self.dims[: cutoff + 1])]).astype(int)

    def size(self, cutoff=None):
        return int(self.offsets(cutoff)[-1])

    def evaluate(self, k, points):
        """Values of the band-k basis at points, shape ``(P, dim Omega_k)``."""
        return monomial_values(np.atleast_2d(points), poly.exponents(self.n, k)) @ self.blocks[k].T

    def project_polynomial(self, p, d):
        """Band coefficients of a degree-d homogeneous polynomial restricted to the sphere.

        ``p`` may carry trailing channel axes.  Returns a list over bands
        ``0..d`` (bands of the wrong parity are zero).
        """
        if d > self.N:
            raise CutoffError(f"degree {d} exceeds cutoff {self.N}")
        p = np.asarray(p)
        chan = p.shape[1:]
        out = []
        for ell in range(d + 1):
            if (d - ell) % 2 or self.dims[ell] == 0:
                out.append(np.zeros((self.dims[ell],) + chan, dtype=p.dtype if p.dtype.kind == "c" else float))
                continue
            G = poly.moment_matrix(self.n, ell, d)
            out.append(np.tensordot(self.blocks[ell] @ G, p, axes=(1, 0)))
        return out

    # serialization --------------------------------------------------------

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# {BASIS_FORMAT} v{BASIS_VERSION}\n")
            fh.write(f"# n {self.n} N {self.N}\n")
            fh.write("# dims " + " ".join(str(d) for d in self.dims) + "\n")
            for k, block in enumerate(self.blocks):
                fh.write(f"# band {k} {block.shape[0]} {block.shape[1]}\n")
                if block.size:
                    np.savetxt(fh, block, fmt="%.17g")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()
        head = lines[0].split()
        if head[1] != BASIS_FORMAT or head[2] != f"v{BASIS_VERSION}":
            raise ValueError(f"unsupported basis file header: {lines[0]!r}")
        _, _, n, _, N = lines[1].split()
        n, N = int(n), int(N)
        blocks = []
        i = 3
        for k in range(N + 1):
            _, _, kk, rows, cols = lines[i].split()
            rows, cols = int(rows), int(cols)
            body = lines[i + 1 : i + 1 + rows]
            block = np.array([[float(x) for x in line.split()] for line in body]).reshape(rows, cols)
            blocks.append(block)
            i += 1 + rows
        basis = cls(n, N, tuple(blocks))
        if basis.dims != tuple(harmonic_dimension(n, k) for k in range(N + 1)):
            raise ValueError("basis file has inconsistent band dimensions")
        return basis


def _harmonic_block(n, k):
    """Orthonormal harmonics of degree k as monomial coefficient rows."""
    dim = harmonic_dimension(n, k)
    cnt = poly.count(n, k)
    if dim == 0:
        return np.zeros((0, cnt))
    if k < 2:
        C = np.eye(cnt)
    else:
        # Harmonics are the Fischer-orthogonal complement of |x|^2 P_{k-2};
        # in coordinates z = sqrt(alpha!) c that complement is a plain null space.
        s_hi = np.sqrt(poly.factorial_weights(n, k))
        s_lo = np.sqrt(poly.factorial_weights(n, k - 2))
        R = s_hi[:, None] * poly.radial_multiplier(n, k) / s_lo[None, :]
        U, _, _ = np.linalg.svd(R, full_matrices=True)
        Z = U[:, cnt - dim :]
        C = Z / s_hi[:, None]
    G = C.T @ poly.moment_matrix(n, k, k) @ C
    evals, evecs = np.linalg.eigh(G)
    inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.T
    return (C @ inv_sqrt).T


@lru_cache(maxsize=None)
def build_basis(n, N):
    """Orthonormal harmonic bases for bands ``0..N`` on S^{n-1}."""
    if n < 1 or N < 0:
        raise ValueError("need n >= 1 and N >= 0")
    blocks = []
    for k in range(N + 1):
        block = _harmonic_block(n, k)
        block.setflags(write=False)
        blocks.append(block)
    return HarmonicBasis(n, N, tuple(blocks))


def cached_basis(n, N, cache_dir=None, quad_order=None):
    """``build_basis`` backed by an on-disk cache keyed by (n, N, quadrature order)."""
    cache_dir = cache_dir or os.environ.get("TENSORTOMO_CACHE_DIR")
    if not cache_dir:
        return build_basis(n, N)
    quad_order = default_quadrature_degree(N) if quad_order is None else quad_order
    path = os.path.join(cache_dir, f"basis_n{n}_N{N}_q{quad_order}.txt")
    if os.path.exists(path):
        return HarmonicBasis.load(path)
    basis = build_basis(n, N)
    os.makedirs(cache_dir, exist_ok=True)
    tmp = path + f".{os.getpid()}.tmp"
    basis.save(tmp)
    os.replace(tmp, path)
    return basis


# ---------------------------------------------------------------------------
# Sphere functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SphereFunction:
    """Harmonic expansion ``bands[k]`` of shape ``(dim Omega_k, *channels)``.

    ``total_energy`` optionally records the exact squared L2 norm of the
    function this expansion truncates (used for extensions, which need not
    be band-limited).
    """

    basis: HarmonicBasis
    bands: tuple
    total_energy: float = field(default=None)

    def __post_init__(self):
        bands = tuple(np.asarray(b) for b in self.bands)
        if len(bands) > self.basis.N + 1:
            raise CutoffError("more bands than the basis holds")
        chan = bands[0].shape[1:] if bands else ()
        for k, b in enumerate(bands):
            if b.shape != (self.basis.dims[k],) + chan:
                raise ShapeError(f"band {k} has shape {b.shape}, expected {(self.basis.dims[k],) + chan}")
        object.__setattr__(self, "bands", bands)

    # construction -----------------------------------------------------------

    @classmethod
    def zeros(cls, basis, cutoff=None, channels=(), dtype=float):
        cutoff = basis.N if cutoff is None else cutoff
        return cls(basis, tuple(np.zeros((basis.dims[k],) + tuple(channels), dtype=dtype) for k in range(cutoff + 1)))

    @classmethod
    def from_polynomial(cls, basis, p, d):
        """Restriction of a homogeneous degree-d polynomial (possibly with channels)."""
        return cls(basis, tuple(basis.project_polynomial(p, d)))

    @classmethod
    def from_polynomials(cls, basis, polys):
        """Sum of homogeneous pieces ``polys[d]`` (entries may be None)."""
        out = None
        for d, p in enumerate(polys):
            if p is None:
                continue
            term = cls.from_polynomial(basis, p, d)
            out = term if out is None else out + term
        if out is None:
            raise ValueError("no polynomial pieces given")
        return out

    @classmethod
    def from_flat(cls, basis, vec, cutoff, channels=()):
        off = basis.offsets(cutoff)
        vec = np.asarray(vec).reshape((off[-1],) + tuple(channels))
        return cls(basis, tuple(vec[off[k] : off[k + 1]] for k in range(cutoff + 1)))

    @classmethod
    def basis_function(cls, basis, k, j):
        f = cls.zeros(basis, cutoff=k)
        bands = [b.copy() for b in f.bands]
        bands[k][j] = 1.0
        return cls(basis, tuple(bands))

    @classmethod
    def random(cls, basis, rng, bands=None, channels=(), complex_=False):
        """Random coefficients on the selected bands (default all)."""
        bands = range(basis.N + 1) if bands is None else bands
        cutoff = max(bands)
        out = []
        for k in range(cutoff + 1):
            shape = (basis.dims[k],) + tuple(channels)
            if k in bands:
                c = rng.standard_normal(shape)
                if complex_:
                    c = c + 1j * rng.standard_normal(shape)
            else:
                c = np.zeros(shape, dtype=complex if complex_ else float)
            out.append(c)
        return cls(basis, tuple(out))

    @classmethod
    def from_samples(cls, basis, rule, values, cutoff=None):
        """Quadrature projection of point values onto bands ``0..cutoff``."""
        cutoff = basis.N if cutoff is None else cutoff
        values = np.asarray(values)
        wv = values * rule.weights.reshape((-1,) + (1,) * (values.ndim - 1))
        return cls(basis, tuple(np.tensordot(basis.evaluate(k, rule.nodes), wv, axes=(0, 0)) for k in range(cutoff + 1)))

    # views --------------------------------------------------------------------

    @property
    def n(self):
        return self.basis.n

    @property
    def cutoff(self):
        return len(self.bands) - 1

    @property
    def channels(self):
        return self.bands[0].shape[1:]

    def flat(self):
        return np.concatenate([b.reshape((b.shape[0],) + self.channels) for b in self.bands], axis=0)

    def band_energies(self):
        return np.array([float(np.sum(np.abs(b) ** 2)) for b in self.bands])

    def norm_sq(self):
        return float(self.band_energies().sum())

    @property
    def captured_energy(self):
        """Fraction of the exact norm held by the stored bands."""
        if self.total_energy is None:
            return 1.0
        if self.total_energy == 0.0:
            return 1.0
        return self.norm_sq() / self.total_energy

    def polynomial(self, k):
        """Band k as a homogeneous polynomial (coefficients x channels)."""
        return np.tensordot(self.basis.blocks[k].T, self.bands[k], axes=(1, 0))

    def evaluate(self, points):
        points = np.atleast_2d(points)
        acc = 0.0
        for k, b in enumerate(self.bands):
            if b.shape[0]:
                acc = acc + np.tensordot(self.basis.evaluate(k, points), b, axes=(1, 0))
        if np.isscalar(acc):
            return np.zeros((points.shape[0],) + self.channels)
        return acc

    def band(self, k):
        """Copy keeping only band k."""
        return SphereFunction(self.basis, tuple(b if i == k else np.zeros_like(b) for i, b in enumerate(self.bands)))

    def truncate(self, cutoff):
        bands = list(self.bands[: cutoff + 1])
        while len(bands) < cutoff + 1:
            bands.append(np.zeros((self.basis.dims[len(bands)],) + self.channels))
        return SphereFunction(self.basis, tuple(bands))

    def rebase(self, N):
        """Same expansion over a basis with cutoff ``N`` (bands above N must be empty)."""
        if N < self.cutoff and any(np.any(b) for b in self.bands[N + 1 :]):
            raise CutoffError("cannot rebase: function has bands above the new cutoff")
        basis = build_basis(self.n, N)
        bands = list(self.bands[: N + 1])
        return SphereFunction(basis, tuple(bands), self.total_energy)

    def channel(self, idx):
        return SphereFunction(self.basis, tuple(b[(slice(None),) + np.index_exp[idx]] for b in self.bands))

    def map_channels(self, fn):
        """Apply a linear channel map ``fn`` (acting on trailing axes) band by band."""
        return SphereFunction(self.basis, tuple(fn(b) for b in self.bands))

    # arithmetic ------------------------------------------------------------------

    def _aligned(self, other):
        if other.basis.n != self.basis.n:
            raise ShapeError("sphere dimension mismatch")
        basis = self.basis if self.basis.N >= other.basis.N else other.basis
        L = max(self.cutoff, other.cutoff)
        return basis, self.truncate_to(basis, L), other.truncate_to(basis, L)

    def truncate_to(self, basis, L):
        bands = list(self.bands[: L + 1])
        while len(bands) < L + 1:
            bands.append(np.zeros((basis.dims[len(bands)],) + self.channels))
        return bands

    def __add__(self, other):
        basis, a, b = self._aligned(other)
        return SphereFunction(basis, tuple(x + y for x, y in zip(a, b)))

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return SphereFunction(self.basis, tuple(b * scalar for b in self.bands), None if self.total_energy is None else self.total_energy * abs(scalar) ** 2)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def inner(self, other):
        _, a, b = self._aligned(other)
        return complex(sum(np.sum(x * np.conj(y)) for x, y in zip(a, b)))


def constant(basis, value=1.0):
    """The constant function as a sphere expansion."""
    return SphereFunction.from_polynomial(basis, np.array([value]), 0)


def coordinate(basis, i):
    """The coordinate function ``v -> v_i`` (an Omega_1 harmonic)."""
    p = np.zeros(basis.n)
    p[i] = 1.0
    return SphereFunction.from_polynomial(basis, p, 1)


def linear_form(basis, a):
    """``v -> <a, v>`` with optional channel axes on ``a`` after the first."""
    return SphereFunction.from_polynomial(basis, np.asarray(a), 1)


# ---------------------------------------------------------------------------
# Tensors <-> sphere functions
# ---------------------------------------------------------------------------


def _require(basis, f_n, m):
    if f_n != basis.n:
        raise ShapeError(f"tensor dimension {f_n} does not match sphere dimension {basis.n}")
    if m > basis.N:
        raise CutoffError(f"rank {m} exceeds basis cutoff {basis.N}")


def pullback_m(f, basis):
    """``pi_m^* f``: the function ``v -> f(v, ..., v)`` on the sphere."""
    _require(basis, f.n, f.m)
    return SphereFunction.from_polynomial(basis, f.as_polynomial(), f.m)


@lru_cache(maxsize=None)
def _pullback_matrix(n, N, m, cutoff):
    basis = build_basis(n, N)
    P = np.diag(np.sqrt(poly.multinomials(n, m)))
    bands = basis.project_polynomial(P, m)
    A = np.zeros((basis.size(cutoff), dimension(n, m)))
    off = basis.offsets(cutoff)
    for k in range(min(m, cutoff) + 1):
        A[off[k] : off[k + 1]] = bands[k]
    A.setflags(write=False)
    return A


def pullback_matrix(basis, m, cutoff=None):
    """Matrix of ``pi_m^*`` from orthonormal tensor coordinates to flat band coefficients ``0..cutoff``."""
    cutoff = m if cutoff is None else cutoff
    if m > basis.N or cutoff > basis.N:
        raise CutoffError("rank or cutoff exceeds basis")
    if basis is build_basis(basis.n, basis.N):
        return _pullback_matrix(basis.n, basis.N, m, cutoff)
    P = np.diag(np.sqrt(poly.multinomials(basis.n, m)))
    bands = basis.project_polynomial(P, m)
    A = np.zeros((basis.size(cutoff), dimension(basis.n, m)))
    off = basis.offsets(cutoff)
    for k in range(min(m, cutoff) + 1):
        A[off[k] : off[k + 1]] = bands[k]
    return A


def pushforward_m(u, m):
    """``pi_{m*} u``, the L2 adjoint of :func:`pullback_m` (scalar u)."""
    if u.channels:
        raise ShapeError("pushforward_m expects a scalar function; use pullback_matrix for channels")
    _require(u.basis, u.n, m)
    L = min(m, u.cutoff)
    A = pullback_matrix(u.basis, m, L)
    vec = A.T @ u.truncate(L).flat()
    return SymTensor.from_orthonormal(u.n, m, vec)


# ---------------------------------------------------------------------------
# Products and degree
# ---------------------------------------------------------------------------


def _channel_subscripts(cu, cw, op):
    if op is not None:
        return op
    letters = "abcdefgh"
    if not cu:
        s = letters[: len(cw)]
        return f",{s}->{s}"
    if not cw:
        s = letters[: len(cu)]
        return f"{s},->{s}"
    if cu == cw:
        s = letters[: len(cu)]
        return f"{s},{s}->{s}"
    raise ShapeError(f"cannot combine channel shapes {cu} and {cw} without an explicit op")


def multiply(u, w, op=None, cutoff=None):
    """Pointwise product re-expanded in the harmonic basis.

    ``op`` is an einsum channel rule such as ``"ab,b->a"`` (matrix times
    vector) or ``"ab,bc->ac"``; by default scalars broadcast and equal
    channel shapes multiply entrywise.  The product is formed exactly from
    the homogeneous polynomials of each band pair.
    """
    if u.n != w.n:
        raise ShapeError("sphere dimension mismatch")
    basis = u.basis if u.basis.N >= w.basis.N else w.basis
    need = degree(u) + degree(w)
    cutoff = basis.N if cutoff is None else cutoff
    if need > cutoff or (need > basis.N):
        raise CutoffError(f"product degree {need} exceeds cutoff {min(cutoff, basis.N)}")
    subs = _channel_subscripts(u.channels, w.channels, op)
    lhs, out_sub = subs.split("->")
    su, sw = lhs.split(",")
    n = u.n
    result = None
    for a, ba in enumerate(u.bands):
        if not np.any(ba):
            continue
        pa = u.polynomial(a)
        for b, bb in enumerate(w.bands):
            if not np.any(bb):
                continue
            pb = w.polynomial(b)
            table = poly.product_table(n, a, b)
            outer = np.einsum(f"x{su},y{sw}->xy{out_sub}", pa, pb)
            prod = np.zeros((poly.count(n, a + b),) + outer.shape[2:], dtype=outer.dtype)
            np.add.at(prod, table, outer)
            term = SphereFunction.from_polynomial(basis, prod, a + b)
            result = term if result is None else result + term
    if result is None:
        probe = np.einsum(f"{su},{sw}->{out_sub}", np.zeros(u.channels), np.zeros(w.channels))
        return SphereFunction.zeros(basis, cutoff=0, channels=probe.shape)
    return result.truncate(max(result.cutoff, 0))


def degree(u, tol=1e-9, total_energy=None):
    """Highest band whose energy exceeds ``tol`` times the total energy.

    The total defaults to ``u.total_energy`` when recorded and otherwise to
    the stored energy.  Returns ``ZERO_DEGREE`` (-inf) for the zero function.
    """
    e = u.band_energies()
    total = total_energy if total_energy is not None else u.total_energy
    if total is None:
        total = e.sum()
    if total <= 0.0:
        return ZERO_DEGREE
    hits = np.nonzero(e > tol * total)[0]
    return int(hits[-1]) if hits.size else ZERO_DEGREE


def _pure_band(u, name):
    e = u.band_energies()
    nz = np.nonzero(e > 1e-24 * max(e.sum(), 1e-300))[0]
    if nz.size != 1:
        raise ValueError(f"{name} must be a single harmonic band")
    return int(nz[0])


def f_minus(f, w):
    """Omega_{m-1} part of ``f * w`` for f in Omega_1 and w in Omega_m.

    Uses ``(grad F . grad W) / (n + 2(m-1))`` on the harmonic extensions; the
    gradient of F is the constant vector ``a`` with ``F(v) = <a, v>``.
    """
    if f.channels:
        raise ShapeError("f must be scalar")
    if _pure_band(f, "f") != 1:
        raise ValueError("f must lie in Omega_1")
    m = _pure_band(w, "w")
    if m < 1:
        raise ValueError("w must have degree >= 1")
    n = w.n
    a = f.polynomial(1)
    W = w.polynomial(m)
    grad = poly.directional_derivative(W, n, m, a)
    out = SphereFunction.from_polynomial(w.basis, grad / (n + 2 * (m - 1)), m - 1)
    return out.band(m - 1)


def f_plus(f, w):
    """Omega_{m+1} part of ``f * w`` for f in Omega_1 and w in Omega_m."""
    m = _pure_band(w, "w")
    return multiply(f, w).band(m + 1)


def band_operator_matrix(op, basis, k_in, k_out):
    """Matrix of a linear map Omega_{k_in} -> Omega_{k_out} in the orthonormal bases."""
    cols = []
    for j in range(basis.dims[k_in]):
        out = op(SphereFunction.basis_function(basis, k_in, j))
        bands = out.truncate(max(out.cutoff, k_out)).bands
        cols.append(bands[k_out])
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def default_quadrature_degree(N):
    return 2 * N + 4


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def rotated(self, M):
        """Same rule with nodes mapped by an orthogonal matrix, ``x = M y``."""
        return QuadratureRule(self.n, self.nodes @ np.asarray(M).T, self.weights, self.degree)


@lru_cache(maxsize=None)
def _sphere_rule(n, D):
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        M = max(D + 1, 1)
        theta = 2.0 * np.pi * np.arange(M) / M
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(M, 2.0 * np.pi / M)
    q = max(1, math.ceil((D + 1) / 2))
    # weight (1 - t^2)^((n-3)/2) from the polar slicing x = (t, sqrt(1-t^2) y)
    a = (n - 3) / 2.0
    t, wt = roots_jacobi(q, a, a)
    inner_nodes, inner_w = _sphere_rule(n - 1, D)
    s = np.sqrt(1.0 - t**2)
    nodes = np.concatenate(
        [np.column_stack([np.full(inner_nodes.shape[0], ti), si * inner_nodes]) for ti, si in zip(t, s)]
    )
    weights = np.concatenate([wi * inner_w for wi in wt])
    return nodes, weights


def sphere_quadrature(n, degree):
    """Product rule on S^{n-1} exact for polynomials of total degree <= ``degree``."""
    nodes, weights = _sphere_rule(n, int(degree))
    return QuadratureRule(n, nodes, weights, int(degree))
