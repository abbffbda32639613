"""Principal symbols at a single frequency xi.

Tensor factors use orthonormal symmetric-tensor coordinates; channel
factors are appended on the right, so the coordinate of ``(K, c)`` is
``K * r + c``.  Band-limited sphere functions are flattened band by band
(bands ``0..m``), again with channels last.

Notation used below: ``A`` is the matrix of ``pi_m^*`` onto bands ``<= m``,
``K`` the projector onto ``ker iota_{xi#}`` and ``C = C_{n-1+2m}``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import spherical_harmonics as sh
from .slice_ops import (
    c_constant,
    differentiated_restrict,
    extension_bands,
    frame,
    outer_norm_sq,
    restrict,
)
from .tensor_algebra import PreconditionError, ShapeError, SymTensor, dimension, ker_iota_projector
from . import polynomials as poly
from ._kernels import monomial_values

SYMBOL_FORMAT = "tensortomo-symbol"
SYMBOL_VERSION = 1
PINV_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class SymbolMatrix:
    matrix: np.ndarray
    xi: np.ndarray
    n: int
    m: int
    r: int = 1
    domain: str = ""
    codomain: str = ""
    meta: dict = field(default_factory=dict)

    def header(self):
        return {
            "format": SYMBOL_FORMAT,
            "version": SYMBOL_VERSION,
            "xi": [float(x) for x in self.xi],
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "domain": self.domain,
            "codomain": self.codomain,
            "shape": list(self.matrix.shape),
            "complex": bool(np.iscomplexobj(self.matrix)),
            "meta": self.meta,
        }

    def save(self, path):
        M = np.atleast_2d(self.matrix)
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            body = np.hstack([M.real, M.imag]) if np.iscomplexobj(M) else M
            np.savetxt(fh, body, fmt="%.17g")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            head = json.loads(fh.readline())
            if head.get("format") != SYMBOL_FORMAT or head.get("version") != SYMBOL_VERSION:
                raise ValueError("not a symbol matrix file")
            body = np.loadtxt(fh, ndmin=2)
        rows, cols = head["shape"]
        if head["complex"]:
            body = body[:, :cols] + 1j * body[:, cols:]
        return cls(
            body.reshape(rows, cols),
            np.array(head["xi"]),
            head["n"],
            head["m"],
            head["r"],
            head["domain"],
            head["codomain"],
            head.get("meta", {}),
        )


def _checked_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or not np.all(np.isfinite(xi)):
        raise ShapeError("xi must be a finite vector")
    nrm = np.linalg.norm(xi)
    if nrm == 0.0:
        raise PreconditionError("xi must be non-zero")
    return xi, nrm


def pullback_block(n, m):
    """``A``: ``pi_m^*`` into the flat bands ``0..m`` of S^{n-1}."""
    return sh.pullback_matrix(sh.build_basis(n, m), m, m)


def _gram(xi, m):
    n = xi.shape[0]
    A = pullback_block(n, m)
    K = ker_iota_projector(xi, m)
    return A, K, K @ A.T @ A @ K


def sigma_pi_m(xi, n, m, r=1):
    """``C^{-1}_{n-1+2m} (2 pi/|xi|) K A^T A K``, tensored with the identity on r channels."""
    xi, nrm = _checked_xi(xi)
    if xi.shape[0] != n:
        raise ShapeError("xi has the wrong dimension")
    _, _, G = _gram(xi, m)
    mat = (2.0 * np.pi / nrm) / c_constant(n - 1 + 2 * m) * G
    return SymbolMatrix(np.kron(mat, np.eye(r)), xi, n, m, r, f"S^{m} x C^{r}", f"S^{m} x C^{r}")


def sigma_pi_m_inv(xi, n, m, r=1):
    """``C_{n-1+2m} (|xi|/2 pi) (K A^T A K)^+ K`` with the identity on r channels."""
    xi, nrm = _checked_xi(xi)
    if xi.shape[0] != n:
        raise ShapeError("xi has the wrong dimension")
    _, K, G = _gram(xi, m)
    mat = c_constant(n - 1 + 2 * m) * (nrm / (2.0 * np.pi)) * np.linalg.pinv(G, rcond=PINV_RCOND, hermitian=True) @ K
    return SymbolMatrix(np.kron(mat, np.eye(r)), xi, n, m, r, f"S^{m} x C^{r}", f"S^{m} x C^{r}")


def p_m_matrix(xi, n, m, r=1):
    """``P_m = A K (K A^T A K)^+ K A^T`` on flat bands ``0..m`` (identity on channels)."""
    xi, _ = _checked_xi(xi)
    A, K, G = _gram(xi, m)
    P = A @ K @ np.linalg.pinv(G, rcond=PINV_RCOND, hermitian=True) @ K @ A.T
    return np.kron(P, np.eye(r)) if r > 1 else P


def p_m_projector(xi, n, m, r=1):
    """``P_m`` as an operator on SphereFunctions (bands above m are dropped)."""
    P = p_m_matrix(xi, n, m)

    def apply(u):
        flat = np.tensordot(P, u.truncate(m).flat(), axes=(1, 0))
        return sh.SphereFunction.from_flat(sh.build_basis(n, m), flat, m, u.channels)

    return apply


def projected_energy(W_low, xi, m):
    """``||P_m W||^2`` from the flat coefficients of bands ``0..m`` (channels last)."""
    A, K, G = _gram(np.asarray(xi, dtype=float), m)
    y = np.tensordot(K @ A.T, W_low, axes=(1, 0))
    z = np.tensordot(np.linalg.pinv(G, rcond=PINV_RCOND, hermitian=True), y, axes=(1, 0))
    return float(np.real(np.sum(np.conj(y) * z)))


# ---------------------------------------------------------------------------
# Equatorial products
# ---------------------------------------------------------------------------


def _inner_tensor_values(n, m, points):
    """Values at points of ``pi_m^*`` of each orthonormal basis tensor."""
    return monomial_values(points, poly.exponents(n, m)) * np.sqrt(poly.multinomials(n, m))


def _low_bands(g, fr, k, m):
    """Flat outer coefficients of bands ``0..m`` of ``E^k g``."""
    basis = sh.build_basis(fr.n, m)
    bands = extension_bands(g, k, fr, basis, m)
    return np.concatenate(bands, axis=0)


def _as_vector_channels(V):
    if V.channels == ():
        return V.map_channels(lambda b: b[:, None])
    if len(V.channels) != 1:
        raise ShapeError("connection mode expects vector channels")
    return V


def _lift(u, N):
    return u.rebase(max(N, u.cutoff))


def connection_products(V, fr, gamma):
    """``(pi_1^* Gamma . V)|_eq`` for Gamma of shape (n, r, r)."""
    Vv = _as_vector_channels(V)
    Veq = restrict(Vv, fr)
    gamma = np.asarray(gamma)
    inner = sh.build_basis(fr.n - 1, max(Veq.cutoff + 1, 1))
    lin = sh.linear_form(inner, np.tensordot(fr.B.T, gamma, axes=(1, 0)))
    return sh.multiply(lin, _lift(Veq, inner.N), op="ab,b->a")


def endomorphism_products(V, fr, gamma):
    """``[pi_1^* Gamma, V]|_eq`` for matrix-valued V."""
    if len(V.channels) != 2:
        raise ShapeError("endomorphism mode expects r x r channels")
    Veq = restrict(V, fr)
    gamma = np.asarray(gamma)
    inner = sh.build_basis(fr.n - 1, max(Veq.cutoff + 1, 1))
    lin = sh.linear_form(inner, np.tensordot(fr.B.T, gamma, axes=(1, 0)))
    Vl = _lift(Veq, inner.N)
    return sh.multiply(lin, Vl, op="ab,bc->ac") - sh.multiply(Vl, lin, op="ab,bc->ac")


def metric_products(V, fr, f):
    """``pi_2^* f|_eq . <xi_V, grad_V V>|_eq`` for a symmetric 2-tensor f."""
    dV = differentiated_restrict(V, fr)
    inner_t = SymTensor.from_full(fr.B.T @ f.full() @ fr.B, check=False)
    inner = sh.build_basis(fr.n - 1, max(dV.cutoff + 2, 2))
    return sh.multiply(sh.pullback_m(inner_t, inner), _lift(dV, inner.N))


# ---------------------------------------------------------------------------
# Connection case
# ---------------------------------------------------------------------------


def _connection_basis(n, r):
    """Standard basis ``e_i (x) E_ab`` indexed ``i*r*r + a*r + b``."""
    out = np.zeros((n * r * r, n, r, r))
    for i in range(n):
        for a in range(r):
            for b in range(r):
                out[i * r * r + a * r + b, i, a, b] = 1.0
    return out


def skew_hermitian_basis(r):
    """Real basis of skew-Hermitian r x r matrices: i*symmetric and antisymmetric."""
    out = []
    for a in range(r):
        for b in range(a, r):
            E = np.zeros((r, r), dtype=complex)
            E[a, b] = E[b, a] = 1j / (np.sqrt(2.0) if a != b else 1.0)
            out.append(E)
    for a in range(r):
        for b in range(a + 1, r):
            E = np.zeros((r, r), dtype=complex)
            E[a, b], E[b, a] = 1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)
            out.append(E)
    return out


def _connection_columns(V, fr, m):
    """Inner products g_j and low outer bands of E^m g_j for every domain basis element."""
    Vv = _as_vector_channels(V)
    r = Vv.channels[0]
    Veq = restrict(Vv, fr)
    inner = sh.build_basis(fr.n - 1, max(Veq.cutoff + 1, 1))
    lin = sh.linear_form(inner, fr.B.T)  # channels: i
    h = sh.multiply(lin, _lift(Veq, inner.N), op="i,b->ib")  # channels (i, b)
    h_low = _low_bands(h, fr, m, m)  # (bands, n, r)
    h_flat = h.flat()  # (inner bands, n, r)
    n = fr.n
    cols_low = np.zeros((h_low.shape[0], r, n * r * r), dtype=h_low.dtype)
    cols_in = np.zeros((h_flat.shape[0], r, n * r * r), dtype=h_flat.dtype)
    for i in range(n):
        for a in range(r):
            for b in range(r):
                j = i * r * r + a * r + b
                cols_low[:, a, j] = h_low[:, i, b]
                cols_in[:, a, j] = h_flat[:, i, b]
    return cols_in, cols_low, r


def sigma_q_connection(V, xi, m):
    """``C^{-1} (2 pi/|xi|) K A^T [E^m (pi_1^*(K B) . V)]_{<=m}`` column by column."""
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    _, cols_low, r = _connection_columns(V, fr, m)
    A = pullback_block(fr.n, m)
    K = ker_iota_projector(xi, m)
    mat = np.tensordot(K @ A.T, cols_low, axes=(1, 0))  # (tensor, r, domain)
    mat = mat.reshape(-1, cols_low.shape[-1]) * (2.0 * np.pi / nrm) / c_constant(fr.n - 1 + 2 * m)
    return SymbolMatrix(mat, xi, fr.n, m, r, "T* x End(C^r)", f"S^{m} x C^{r}")


def sigma_l_connection(V, xi, m):
    """``(2 pi/|xi|) G^H G`` with G the inner-sphere coefficients of ``pi_1^*B . V``.

    This is ``C^{-1} (2 pi/|xi|) (E^m G)^H (E^m G)`` after the norm identity
    ``||E^m g||^2 = C ||g||^2``.
    """
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    cols_in, _, r = _connection_columns(V, fr, m)
    G = cols_in.reshape(-1, cols_in.shape[-1])
    C = c_constant(fr.n - 1 + 2 * m)
    mat = (2.0 * np.pi / nrm) / C * (G.conj().T @ (C * G))
    return SymbolMatrix(mat, xi, fr.n, m, r, "T* x End(C^r)", "T* x End(C^r)")


def connection_quadratic_form(V, xi, gamma, quad_degree=None):
    """``(2 pi/|xi|) int_eq |pi_1^* Gamma . V|^2`` by direct equatorial quadrature."""
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    Vv = _as_vector_channels(V)
    D = quad_degree if quad_degree is not None else 2 * Vv.cutoff + 4
    rule = sh.sphere_quadrature(fr.n - 1, D)
    u = fr.to_outer(rule.nodes)
    Gu = np.einsum("pi,iab->pab", u, np.asarray(gamma))
    vals = np.einsum("pab,pb->pa", Gu, Vv.evaluate(u))
    return float((2.0 * np.pi / nrm) * rule.integrate(np.sum(np.abs(vals) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# Metric case
# ---------------------------------------------------------------------------


def _metric_columns(V, fr):
    dV = differentiated_restrict(V, fr)
    n = fr.n
    inner = sh.build_basis(n - 1, max(dV.cutoff + 2, 2))
    # pi_2^* of each orthonormal basis tensor of S^2(R^n), restricted to the equator
    Bt = fr.B
    cols = []
    for j in range(dimension(n, 2)):
        e = np.zeros(dimension(n, 2))
        e[j] = 1.0
        h = SymTensor.from_orthonormal(n, 2, e)
        cols.append(SymTensor.from_full(Bt.T @ h.full() @ Bt, check=False).as_polynomial())
    lin = sh.SphereFunction.from_polynomial(inner, np.stack(cols, axis=1), 2)
    if dV.channels:
        raise ShapeError("metric mode expects a scalar V")
    return sh.multiply(lin, _lift(dV, inner.N), op="j,->j")


def sigma_q_metric(V, xi, m):
    """``C^{-1} (i pi/|xi|) K A^T [E^m (pi_2^* h . <xi_V, grad_V V>)]_{<=m}``."""
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    g = _metric_columns(V, fr)
    low = _low_bands(g, fr, m, m)
    A = pullback_block(fr.n, m)
    K = ker_iota_projector(xi, m)
    mat = (1j * np.pi / nrm) / c_constant(fr.n - 1 + 2 * m) * (K @ A.T @ low)
    return SymbolMatrix(mat, xi, fr.n, m, 1, "S^2", f"S^{m}")


def sigma_a2_metric(V, xi, h, m, route="norm", quad_degree=None):
    """``(pi/|xi|) C^{-1} ||E^m (pi_2^* h . <xi_V, grad_V V>)||^2``.

    ``route="norm"`` uses the norm identity (the constant cancels);
    ``route="quadrature"`` integrates ``|E^m g|^2`` over the outer sphere.
    """
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    g = metric_products(V, fr, h)
    C = c_constant(fr.n - 1 + 2 * m)
    if route == "norm":
        return float(np.pi / nrm * g.norm_sq())
    if route == "quadrature":
        return float(np.pi / nrm / C * outer_norm_sq(g, m, fr, quad_degree))
    raise ValueError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# Sandwich symbol
# ---------------------------------------------------------------------------


def sandwich_symbol(sigma_R, sigma_L_adj, xi, m1, m2, m_ext=0, symbol_degree=2, quad_degree=None):
    """Symbol of ``pi_{m1*} P_L I P_R pi_{m2}^*`` assembled two independent ways.

    ``sigma_R`` and ``sigma_L_adj`` map equator points (rows of an (P, n)
    array) to scalar symbol values and are assumed polynomial of degree at
    most ``symbol_degree``.  Route A is the equatorial bilinear form, route B
    goes through the extension ``E^{m_ext}``.  Returns ``(route_a, route_b)``.
    """
    xi, nrm = _checked_xi(xi)
    fr = frame(xi)
    n = fr.n
    L = 2 * symbol_degree + m2
    D = quad_degree if quad_degree is not None else max(2 * L, 2 * symbol_degree + m1 + m2) + 2
    rule = sh.sphere_quadrature(n - 1, D)
    u = fr.to_outer(rule.nodes)
    sR = np.asarray(sigma_R(u))
    sLa = np.asarray(sigma_L_adj(u))

    Phi = _inner_tensor_values(n, m2, u)
    Psi = _inner_tensor_values(n, m1, u)
    route_a = (2.0 * np.pi / nrm) * (Psi.T @ ((rule.weights * sR * np.conj(sLa))[:, None] * Phi))

    K2 = ker_iota_projector(xi, m2)
    samples = (np.conj(sLa) * sR)[:, None] * (Phi @ K2)
    inner = sh.build_basis(n - 1, L)
    g = sh.SphereFunction.from_samples(inner, rule, samples)
    low = _low_bands(g, fr, m_ext, m1)
    A1 = pullback_block(n, m1)
    K1 = ker_iota_projector(xi, m1)
    route_b = (2.0 * np.pi / nrm) / c_constant(m1 + m_ext + n - 1) * (K1 @ A1.T @ low)

    desc = dict(xi=xi, n=n, m=m1, r=1, domain=f"S^{m2}", codomain=f"S^{m1}")
    return SymbolMatrix(route_a, meta={"route": "A"}, **desc), SymbolMatrix(route_b, meta={"route": "B", "m_ext": m_ext}, **desc)


# ---------------------------------------------------------------------------
# Variational gap
# ---------------------------------------------------------------------------

MODES = ("connection", "endomorphism", "metric")


def _infer_mode(perturbation):
    if isinstance(perturbation, SymTensor):
        return "metric"
    return "connection"


def equatorial_products(V_list, fr, perturbation, mode):
    if mode == "metric":
        if not isinstance(perturbation, SymTensor) or perturbation.m != 2:
            raise ValueError("metric mode needs a symmetric 2-tensor perturbation")
        return [metric_products(V, fr, perturbation) for V in V_list]
    if isinstance(perturbation, SymTensor):
        raise ValueError(f"{mode} mode needs a matrix-valued 1-form perturbation")
    if mode == "connection":
        return [connection_products(V, fr, perturbation) for V in V_list]
    if mode == "endomorphism":
        return [endomorphism_products(V, fr, perturbation) for V in V_list]
    raise ValueError(f"unknown mode {mode!r}")


def variational_terms(V_list, xi, perturbation, m, mode=None):
    """``(sum ||W_i||^2, sum ||P_m W_i||^2)`` with ``W_i = E^m_xi`` of the equatorial product."""
    xi, _ = _checked_xi(xi)
    mode = mode or _infer_mode(perturbation)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    fr = frame(xi)
    if isinstance(V_list, sh.SphereFunction):
        V_list = [V_list]
    total = 0.0
    kept = 0.0
    C = c_constant(2 * m + fr.n - 1)
    for g in equatorial_products(V_list, fr, perturbation, mode):
        total += C * g.norm_sq()
        kept += projected_energy(_low_bands(g, fr, m, m), xi, m)
    return total, kept


def variational_gap(V_list, xi, perturbation, m, mode=None):
    """``sum_i ||W_i||^2 - sum_i ||P_m W_i||^2``."""
    total, kept = variational_terms(V_list, xi, perturbation, m, mode)
    return total - kept
