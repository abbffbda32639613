"""X-ray transform of symmetric tensor fields on the Euclidean unit disk.

A rank-m field stores one bivariate polynomial (total degree <= d) per sorted
multi-index K over the axes {0, 1}.  Along a chord ``x0 + t v`` the integrand
is ``sum_K mult(K) f_K(x0 + t v) v^K``, a polynomial in t, so a
Gauss-Legendre rule with d + 2 nodes integrates it exactly.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import subspace_angles

from . import polynomials as poly
from ._kernels import chord_moments

KERNEL_RTOL = 1e-8
REQUIRED_GAP = 1e2
MIN_CHORD = 0.05


class ConditioningError(RuntimeError):
    """The sampled transform does not separate kernel from range."""


@lru_cache(maxsize=None)
def monomials(d):
    """Exponent pairs (a, b) with a + b <= d in a fixed order."""
    return tuple((a, t - a) for t in range(d + 1) for a in range(t, -1, -1))


def field_dimension(m, d):
    return (m + 1) * len(monomials(d))


@dataclass(frozen=True, eq=False)
class TensorField:
    """``coeffs[K, a, b]``: coefficient of ``x^a y^b`` in component K."""

    m: int
    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.m + 1, self.d + 1, self.d + 1):
            raise ValueError(f"expected shape {(self.m + 1, self.d + 1, self.d + 1)}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        a, b = np.indices((self.d + 1, self.d + 1))
        if np.any(c[:, a + b > self.d]):
            raise ValueError("coefficients above total degree d")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_vector(cls, m, d, vec):
        c = np.zeros((m + 1, d + 1, d + 1))
        vec = np.asarray(vec).reshape(m + 1, -1)
        for i, (a, b) in enumerate(monomials(d)):
            c[:, a, b] = vec[:, i]
        return cls(m, d, c)

    @classmethod
    def random(cls, m, d, rng):
        return cls.from_vector(m, d, rng.standard_normal(field_dimension(m, d)))

    def vector(self):
        return np.stack([self.coeffs[:, a, b] for a, b in monomials(self.d)], axis=1).reshape(-1)

    def component_values(self, pts):
        pts = np.atleast_2d(pts)
        a = np.arange(self.d + 1)
        X = pts[:, 0:1] ** a
        Y = pts[:, 1:2] ** a
        return np.einsum("pa,kab,pb->pk", X, self.coeffs, Y)

    def pullback(self, pts, v):
        """``f_x(v, ..., v)`` at points with directions v (row-aligned)."""
        vals = self.component_values(pts)
        return np.sum(vals * _direction_weights(self.m, np.atleast_2d(v)), axis=1)


def _direction_weights(m, v):
    """``mult(K) v^K`` for every sorted multi-index K over two axes."""
    exps = poly.exponents(2, m)
    mult = poly.multinomials(2, m)
    return mult * np.prod(v[:, None, :] ** exps[None, :, :], axis=2)


@dataclass(frozen=True)
class Chord:
    beta: float
    alpha: float

    @property
    def start(self):
        return np.array([math.cos(self.beta), math.sin(self.beta)])

    @property
    def direction(self):
        return np.array([math.cos(self.alpha), math.sin(self.alpha)])

    @property
    def length(self):
        return -2.0 * float(self.start @ self.direction)

    def validate(self):
        if self.length <= 1e-14:
            raise ValueError("chord is tangent or points outward")
        return self


def chord_from_angle(beta, theta):
    """Chord entering at angle beta, tilted by theta from the inward normal."""
    return Chord(beta, beta + math.pi + theta)


def _chord_arrays(chords):
    chords = [c.validate() for c in chords]
    starts = np.array([c.start for c in chords])
    dirs = np.array([c.direction for c in chords])
    lengths = np.array([c.length for c in chords])
    return starts, dirs, lengths


def transform_matrix(chords, m, d):
    """Rows: chords; columns: field coordinates ``(K, monomial)``."""
    starts, dirs, lengths = _chord_arrays(chords)
    nodes, weights = np.polynomial.legendre.leggauss(d + 2)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    mom = chord_moments(starts, dirs, lengths, d, nodes, weights)
    mono = monomials(d)
    a_idx = np.array([a for a, _ in mono])
    b_idx = np.array([b for _, b in mono])
    M = mom[:, a_idx, b_idx]  # (chords, monomials)
    W = _direction_weights(m, dirs)  # (chords, m + 1)
    return (W[:, :, None] * M[:, None, :]).reshape(len(chords), -1)


def chord_integral(f, c):
    return float((transform_matrix([c], f.m, f.d) @ f.vector())[0])


def sym_derivative(p):
    """``D p``: symmetrized gradient, rank m-1 -> m, degree d -> d-1 (>= 0)."""
    m = p.m + 1
    d_out = max(p.d - 1, 0)
    out = np.zeros((m + 1, d_out + 1, d_out + 1))
    low = {K: i for i, K in enumerate(poly.multi_indices(2, p.m))}
    for k, K in enumerate(poly.multi_indices(2, m)):
        for s in set(K):
            rest = list(K)
            rest.remove(s)
            i = low[tuple(rest)]
            c = p.coeffs[i]
            # every slot of K holding s contributes the same term
            w = K.count(s) / m
            if s == 0:
                dc = np.arange(1, p.d + 1)[:, None] * c[1:, :]
            else:
                dc = np.arange(1, p.d + 1)[None, :] * c[:, 1:]
            dc = dc[: d_out + 1, : d_out + 1]
            out[k, : dc.shape[0], : dc.shape[1]] += w * dc
    return TensorField(m, d_out, out)


def _bubble(q):
    """``(1 - x^2 - y^2) q`` componentwise; degree grows by two."""
    d = q.d + 2
    c = np.zeros((q.m + 1, d + 1, d + 1))
    c[:, : q.d + 1, : q.d + 1] += q.coeffs
    c[:, 2:, : q.d + 1] -= q.coeffs
    c[:, : q.d + 1, 2:] -= q.coeffs
    return TensorField(q.m, d, c)


def _pad(f, d):
    c = np.zeros((f.m + 1, d + 1, d + 1))
    c[:, : f.d + 1, : f.d + 1] = f.coeffs
    return TensorField(f.m, d, c)


def boundary_potential(q):
    """``D((1 - r^2) q)`` for a rank m-1 field q."""
    return sym_derivative(_bubble(q))


def potential_subspace(m, d, q_degree=None):
    """Orthonormal basis (columns) of ``{D((1 - r^2) q)}`` inside rank-m fields of degree <= d.

    ``q_degree`` defaults to d - 1, the largest degree keeping Dp within
    degree d, so the span is every boundary-vanishing potential of degree
    <= d.  Returns ``(basis, dimension)``.
    """
    if m < 1:
        return np.zeros((field_dimension(m, d), 0)), 0
    q_degree = d - 1 if q_degree is None else q_degree
    cols = []
    for j in range(field_dimension(m - 1, q_degree)):
        e = np.zeros(field_dimension(m - 1, q_degree))
        e[j] = 1.0
        Dp = boundary_potential(TensorField.from_vector(m - 1, q_degree, e))
        cols.append(_pad(Dp, d).vector())
    A = np.array(cols).T
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
    return U[:, :rank], rank


def sample_chords(count):
    """Tensor grid in (beta, theta) avoiding near-tangent chords (length >= MIN_CHORD)."""
    nb = max(4, int(math.ceil(math.sqrt(2 * count))))
    nt = max(2, int(math.ceil(count / nb)))
    theta_max = math.acos(MIN_CHORD / 2.0)
    # golden-ratio offsets decorrelate the two grids
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    out = []
    for i in range(nb):
        beta = 2.0 * math.pi * (i + phi) / nb
        shift = (i * phi) % 1.0 - 0.5
        for j in range(nt):
            theta = -theta_max + 2.0 * theta_max * (j + 0.5 + 0.5 * shift) / nt
            out.append(chord_from_angle(beta, theta))
    return out


@dataclass
class AuditReport:
    m: int
    d: int
    kernel_dim: int
    potential_dim: int
    max_principal_angle: float
    sv_gap: float
    chords: int

    @property
    def passed(self):
        return self.kernel_dim == self.potential_dim and self.max_principal_angle <= 1e-6


def sinjectivity_audit(m, d, chord_sample_size=None):
    """Numerical kernel of the sampled transform versus the potential subspace."""
    dim = field_dimension(m, d)
    chord_sample_size = 4 * dim if chord_sample_size is None else chord_sample_size
    if chord_sample_size < 3 * dim:
        raise ConditioningError(f"need at least {3 * dim} chords for {dim} unknowns")
    chords = sample_chords(chord_sample_size)
    A = transform_matrix(chords, m, d)
    _, s, Vt = np.linalg.svd(A)
    s_full = np.concatenate([s, np.zeros(dim - s.size)]) if s.size < dim else s
    small = s_full < KERNEL_RTOL * s_full[0]
    kdim = int(small.sum())
    if 0 < kdim < dim:
        gap = s_full[~small].min() / max(s_full[small].max(), 1e-300)
        if gap < REQUIRED_GAP:
            raise ConditioningError(f"singular-value gap {gap:.3g} below {REQUIRED_GAP}")
    else:
        gap = math.inf
    P, pdim = potential_subspace(m, d)
    if kdim and pdim:
        angle = float(np.max(subspace_angles(Vt[dim - kdim :].T, P)))
    else:
        angle = 0.0 if kdim == pdim else math.pi / 2
    return AuditReport(m, d, kdim, pdim, angle, float(gap), len(chords))


def audit_csv(reports):
    buf = io.StringIO()
    fields = ["m", "d", "kernel_dim", "potential_dim", "max_principal_angle", "sv_gap", "chords", "passed"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = asdict(r)
        row["passed"] = r.passed
        w.writerow(row)
    return buf.getvalue()
