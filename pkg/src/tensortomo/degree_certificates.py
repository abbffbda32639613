"""Constructive searches behind the degree lemmas and the genericity arguments.

Every search follows the same policy: a fixed set of 200 low-discrepancy
directions first, then seeded Gaussian directions until the budget is used.
The first success in that order wins, so results depend only on the inputs,
the seed and the budget.

Degrees of extensions are measured against the exact extension norm.  A
band coefficient is exact even when the extension has an infinite tail, so
a band of degree >= m+1 above tolerance is a valid lower-bound witness no
matter how much energy sits beyond the cutoff.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import spherical_harmonics as sh
from .slice_ops import differentiated_restrict, extend_k, frame, restrict
from .symbol_calculus import (
    connection_products,
    endomorphism_products,
    metric_products,
    variational_terms,
)
from .tensor_algebra import PreconditionError, SymTensor, symmetric_product

DEGREE_TOL = 1e-9
LOW_DISCREPANCY_SIZE = 200
DEFAULT_BUDGET = 2000
CERTIFICATE_VERSION = 1


class SearchExhausted(RuntimeError):
    """No witness within the search budget."""

    def __init__(self, stage, budget, detail=""):
        super().__init__(f"{stage}: no witness found in budget {budget}{': ' + detail if detail else ''}")
        self.stage = stage
        self.budget = budget


@dataclass
class SearchResult:
    status: str  # "bounded", "violated", "witness" or "exhausted"
    xi: np.ndarray = None
    degree: float = sh.ZERO_DEGREE
    trials: int = 0

    @property
    def found(self):
        return self.status == "witness"


@dataclass
class MultiplierResult:
    tensor: SymTensor
    function: sh.SphereFunction
    axes: tuple
    degree: int


@dataclass
class Certificate:
    mode: str
    m: int
    xi: np.ndarray
    multiplier: object  # SymTensor (metric) or (n, r, r) complex array
    achieved_degree: int
    captured_energy: float
    seed: int
    budget: int
    gap: float = None
    relative_gap: float = None
    branch: str = ""
    trials: int = 0
    extra: dict = field(default_factory=dict)

    def to_record(self):
        if isinstance(self.multiplier, SymTensor):
            mult = {"kind": "symmetric-tensor", "n": self.multiplier.n, "m": self.multiplier.m, "coeffs": _num(self.multiplier.coeffs)}
        else:
            arr = np.asarray(self.multiplier)
            mult = {"kind": "matrix-one-form", "shape": list(arr.shape), "real": _num(arr.real), "imag": _num(arr.imag)}
        return {
            "version": CERTIFICATE_VERSION,
            "mode": self.mode,
            "m": self.m,
            "xi": _num(self.xi),
            "multiplier": mult,
            "achieved_degree": self.achieved_degree,
            "captured_energy": self.captured_energy,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "seed": self.seed,
            "budget": self.budget,
            "branch": self.branch,
            "trials": self.trials,
        }

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec):
        if rec.get("version") != CERTIFICATE_VERSION:
            raise ValueError("unsupported certificate version")
        mult = rec["multiplier"]
        if mult["kind"] == "symmetric-tensor":
            multiplier = SymTensor(mult["n"], mult["m"], np.array(mult["coeffs"]))
        else:
            multiplier = (np.array(mult["real"]) + 1j * np.array(mult["imag"])).reshape(mult["shape"])
        return cls(
            rec["mode"], rec["m"], np.array(rec["xi"]), multiplier, rec["achieved_degree"], rec["captured_energy"],
            rec["seed"], rec["budget"], rec.get("gap"), rec.get("relative_gap"), rec.get("branch", ""), rec.get("trials", 0),
        )


def _num(a):
    return np.asarray(a, dtype=float).reshape(-1).tolist() if np.ndim(a) else float(a)


# ---------------------------------------------------------------------------
# Direction sampling
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def low_discrepancy_directions(n, size=LOW_DISCREPANCY_SIZE):
    """Scrambled Sobol points pushed through the normal quantile, then normalized."""
    pts = qmc.Sobol(d=n, scramble=True, seed=0).random(1 << math.ceil(math.log2(size)))[:size]
    g = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1)[:, None]
    g.setflags(write=False)
    return g


def candidate_directions(n, budget=DEFAULT_BUDGET, seed=0):
    """Yield up to ``budget`` unit covectors following the search policy."""
    fixed = low_discrepancy_directions(n)
    for i in range(min(budget, fixed.shape[0])):
        yield fixed[i]
    rng = np.random.default_rng(seed)
    for _ in range(budget - fixed.shape[0]):
        v = rng.standard_normal(n)
        yield v / np.linalg.norm(v)


def _first(predicate, n, budget, seed, workers=1, batch=16):
    """First direction (in policy order) whose predicate returns a non-None value."""
    gen = candidate_directions(n, budget, seed)
    trials = 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while True:
            chunk = [xi for _, xi in zip(range(batch), gen)]
            if not chunk:
                return None, None, trials
            results = list(pool.map(predicate, chunk)) if pool else [predicate(xi) for xi in chunk]
            for xi, res in zip(chunk, results):
                trials += 1
                if res is not None:
                    return xi, res, trials
    finally:
        if pool:
            pool.shutdown()


# ---------------------------------------------------------------------------
# Degree lemmas
# ---------------------------------------------------------------------------


def _deg(u):
    return sh.degree(u, tol=DEGREE_TOL)


def _require_dim(u, lo=3):
    if u.n < lo:
        raise PreconditionError(f"needs n >= {lo}; for n = 2 use n2_degeneracy_check")


def check_restriction_lemma(W, m, budget=DEFAULT_BUDGET, seed=0, workers=1):
    """Restriction degree test.

    ``deg W <= m``: every low-discrepancy restriction must have degree <= m
    (status ``"bounded"``).  ``deg W >= m+1``: search for xi whose restriction
    has degree >= m+1 (status ``"witness"`` or ``"exhausted"``).
    """
    _require_dim(W)
    d = _deg(W)
    if d <= m:
        worst = sh.ZERO_DEGREE
        dirs = low_discrepancy_directions(W.n)
        for xi in dirs[: min(budget, len(dirs))]:
            worst = max(worst, _deg(restrict(W, frame(xi))))
        status = "bounded" if worst <= m else "violated"
        return SearchResult(status, None, worst, min(budget, len(dirs)))

    def pred(xi):
        k = _deg(restrict(W, frame(xi)))
        return k if k >= m + 1 else None

    xi, k, trials = _first(pred, W.n, budget, seed, workers)
    if xi is None:
        return SearchResult("exhausted", None, sh.ZERO_DEGREE, trials)
    return SearchResult("witness", np.array(xi), k, trials)


def find_diff_restriction_witness(W, m, budget=DEFAULT_BUDGET, seed=0, workers=1):
    """xi with ``deg(<xi_V, grad_V W>|_eq) >= m`` (non-zero when m = 0)."""
    _require_dim(W)
    if _deg(W) <= m:
        raise PreconditionError(f"deg W = {_deg(W)} must be at least m + 1 = {m + 1}")

    def pred(xi):
        k = _deg(differentiated_restrict(W, frame(xi)))
        return k if k >= m else None

    xi, k, trials = _first(pred, W.n, budget, seed, workers)
    if xi is None:
        raise SearchExhausted("differentiated-restriction", budget)
    return SearchResult("witness", np.array(xi), k, trials)


def extension_degree(f, k, fr, extra=2):
    """Degree of ``E^k f`` with bands up to ``k + deg f + extra``; returns (degree, extension)."""
    ext = extend_k(f, k, fr)
    return sh.degree(ext, tol=DEGREE_TOL), ext


def check_extension_lemma(f, m, fr):
    """True when ``deg(E^m f) >= m + 1``; requires ``deg f >= m + 1``."""
    if _deg(f) < m + 1:
        raise PreconditionError(f"deg f = {_deg(f)} must be at least m + 1 = {m + 1}")
    d, _ = extension_degree(f, m, fr)
    return d >= m + 1


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def _coordinate_tensor(n, axes):
    """``S(e_{i1} (x) ... (x) e_{ik})``, whose pullback is ``v_{i1} ... v_{ik}``."""
    f = SymTensor.scalar(n, 1.0)
    for i in axes:
        e = np.zeros(n)
        e[i] = 1.0
        f = symmetric_product(f, SymTensor(n, 1, e))
    return f


def find_multiplier(W, k, m=None):
    """f in S_k(E) with ``deg(f W) >= deg(W) + k`` (hence >= m + k).

    Iterates the degree-one step: for the current top band, some coordinate
    v_i raises the degree because the upper part of multiplication by an
    Omega_1 element is injective.
    """
    d = _deg(W)
    if d == sh.ZERO_DEGREE:
        raise PreconditionError("W must be non-zero")
    if m is not None and d < m:
        raise PreconditionError(f"deg W = {d} below m = {m}")
    n = W.n
    current = W.rebase(max(W.cutoff, d + k))
    axes = []
    for step in range(k):
        top = _deg(current)
        for i in range(n):
            trial = sh.multiply(sh.coordinate(current.basis, i), current)
            if _deg(trial) >= top + 1:
                axes.append(i)
                current = trial
                break
        else:  # pragma: no cover - excluded by the injectivity of f_+
            raise SearchExhausted("multiplier", n, f"no coordinate raises degree {top}")
    tensor = _coordinate_tensor(n, axes)
    fn = sh.pullback_m(tensor, sh.build_basis(n, max(k, 1)))
    return MultiplierResult(tensor, fn, tuple(axes), _deg(current))


def find_bundle_multiplier(W, k, m=None):
    """Skew-Hermitian multiplier ``Gamma = i alpha E_jj`` for vector-valued W.

    Returns ``(alpha, j, gamma)`` where ``gamma`` is the (n, r, r) array of the
    degree-one case (k = 1) and None otherwise.
    """
    if W.channels == ():
        W = W.map_channels(lambda b: b[:, None])
    degs = [_deg(W.channel(j)) for j in range(W.channels[0])]
    j = int(np.argmax(degs))
    if degs[j] == sh.ZERO_DEGREE:
        raise PreconditionError("W must be non-zero")
    alpha = find_multiplier(W.channel(j), k, m)
    gamma = None
    if k == 1:
        r = W.channels[0]
        gamma = np.zeros((W.n, r, r), dtype=complex)
        gamma[:, j, j] = 1j * alpha.tensor.full()
    return alpha, j, gamma


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def _finish(mode, m, xi, mult, g, fr, V_list, seed, budget, trials, branch=""):
    d, ext = extension_degree(g, m, fr)
    total, kept = variational_terms(V_list, xi, mult, m, mode)
    gap = total - kept
    return Certificate(
        mode, m, np.array(xi), mult, int(d) if d != sh.ZERO_DEGREE else -1, float(ext.captured_energy),
        seed, budget, float(gap), float(gap / total) if total > 0 else 0.0, branch, trials,
    )


def connection_certificate(V, m, budget=DEFAULT_BUDGET, seed=0, workers=1):
    """(xi, Gamma) with ``deg E^m_xi(pi_1^* Gamma . V|_eq) >= m + 1``."""
    _require_dim(V)
    if _deg(V) < m + 1:
        raise PreconditionError(f"deg V = {_deg(V)} must be at least m + 1")
    _, _, gamma = find_bundle_multiplier(V, 1, m)
    U = _apply_connection(V, gamma)
    res = check_restriction_lemma(U, m, budget, seed, workers)
    if not res.found:
        raise SearchExhausted("restriction", budget)
    fr = frame(res.xi)
    g = connection_products(V, fr, gamma)
    cert = _finish("connection", m, res.xi, gamma, g, fr, [V], seed, budget, res.trials)
    if cert.achieved_degree < m + 1:
        raise SearchExhausted("extension", budget, f"degree {cert.achieved_degree}")
    return cert


def _apply_connection(V, gamma):
    """``pi_1^* Gamma . V`` on the full sphere."""
    Vv = V if V.channels else V.map_channels(lambda b: b[:, None])
    basis = sh.build_basis(V.n, Vv.cutoff + 1)
    lin = sh.linear_form(basis, gamma)
    return sh.multiply(lin, Vv.rebase(basis.N), op="ab,b->a")


def _commutator(V, gamma):
    basis = sh.build_basis(V.n, V.cutoff + 1)
    lin = sh.linear_form(basis, gamma)
    Vl = V.rebase(basis.N)
    return sh.multiply(lin, Vl, op="ab,bc->ac") - sh.multiply(Vl, lin, op="ab,bc->ac")


def endomorphism_certificate(V, m, budget=DEFAULT_BUDGET, seed=0, workers=1):
    """(xi, Gamma) with ``deg E^m_xi([pi_1^* Gamma, V]|_eq) >= m + 1`` for trace-free V.

    Off-diagonal branch: an entry (j0, l), j0 != l, of degree >= m+1 and
    ``Gamma = i alpha E_ll``.  Diagonal branch: a pair (a, b) with
    ``deg(V_bb - V_aa) >= m+1`` and ``Gamma = alpha (E_ab - E_ba)``, for which
    ``[Gamma, V]_ab = alpha (V_bb - V_aa)``.
    """
    _require_dim(V)
    if len(V.channels) != 2 or V.channels[0] != V.channels[1]:
        raise ValueError("V must be r x r matrix valued")
    r = V.channels[0]
    tr = V.map_channels(lambda b: np.trace(b, axis1=1, axis2=2))
    if tr.norm_sq() > 1e-20 * max(V.norm_sq(), 1e-300):
        raise PreconditionError("V must be pointwise trace-free")
    degs = {(a, b): _deg(V.channel((a, b))) for a in range(r) for b in range(r)}
    if max(degs.values()) < m + 1:
        raise PreconditionError("every entry of V has degree <= m")
    gamma = np.zeros((V.n, r, r), dtype=complex)
    off = [(a, b) for (a, b), d in degs.items() if a != b and d >= m + 1]
    if off:
        j0, l = off[0]
        alpha = find_multiplier(V.channel((j0, l)), 1, m)
        gamma[:, l, l] = 1j * alpha.tensor.full()
        branch = f"off-diagonal ({j0},{l})"
    else:
        pair = None
        for a in range(r):
            for b in range(r):
                if a != b and _deg(V.channel((b, b)) - V.channel((a, a))) >= m + 1:
                    pair = (a, b)
                    break
            if pair:
                break
        a, b = pair
        alpha = find_multiplier(V.channel((b, b)) - V.channel((a, a)), 1, m)
        gamma[:, a, b] = alpha.tensor.full()
        gamma[:, b, a] = -alpha.tensor.full()
        branch = f"diagonal ({a},{b})"
    U = _commutator(V, gamma)
    res = check_restriction_lemma(U, m, budget, seed, workers)
    if not res.found:
        raise SearchExhausted(f"restriction [{branch}]", budget)
    fr = frame(res.xi)
    g = endomorphism_products(V, fr, gamma)
    cert = _finish("endomorphism", m, res.xi, gamma, g, fr, [V], seed, budget, res.trials, branch)
    if cert.achieved_degree < m + 1:
        raise SearchExhausted(f"extension [{branch}]", budget, f"degree {cert.achieved_degree}")
    return cert


def metric_certificate(V, m, budget=DEFAULT_BUDGET, seed=0, workers=1):
    """(xi, f) with f in S^2(ker xi) and ``deg E^m_xi(pi_2^* f . <xi_V, grad_V V>|_eq) >= m + 1``."""
    _require_dim(V)
    if V.channels:
        raise ValueError("metric certificates take a scalar V")
    if _deg(V) < m + 1:
        raise PreconditionError(f"deg V = {_deg(V)} must be at least m + 1")
    wit = find_diff_restriction_witness(V, m, budget, seed, workers)
    fr = frame(wit.xi)
    dV = differentiated_restrict(V, fr)
    inner = find_multiplier(dV, 2, m)
    f = SymTensor.from_full(fr.B @ inner.tensor.full() @ fr.B.T, check=False)
    g = metric_products(V, fr, f)
    cert = _finish("metric", m, wit.xi, f, g, fr, [V], seed, budget, wit.trials)
    if cert.achieved_degree < m + 1:
        raise SearchExhausted("extension", budget, f"degree {cert.achieved_degree}")
    return cert


def revalidate(cert, V):
    """Recompute the pipeline from the stored (xi, multiplier); returns the achieved degree."""
    fr = frame(cert.xi)
    if cert.mode == "metric":
        g = metric_products(V, fr, cert.multiplier)
    elif cert.mode == "connection":
        g = connection_products(V, fr, cert.multiplier)
    elif cert.mode == "endomorphism":
        g = endomorphism_products(V, fr, cert.multiplier)
    else:
        raise ValueError(f"unknown mode {cert.mode!r}")
    d, _ = extension_degree(g, cert.m, fr)
    return d


# ---------------------------------------------------------------------------
# n = 2
# ---------------------------------------------------------------------------


@dataclass
class DegeneracyReport:
    trials: int
    max_excess_degree: float
    max_gap: float
    max_relative_gap: float
    violations: int
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return self.violations == 0


def _random_skew(rng, n, r):
    G = rng.standard_normal((n, r, r)) + 1j * rng.standard_normal((n, r, r))
    return 0.5 * (G - np.conj(np.transpose(G, (0, 2, 1))))


def n2_degeneracy_check(trials=200, m_max=3, seed=0, r=2, modes=("connection", "metric"), gap_tol=1e-9):
    """Randomized audit of the two-dimensional obstruction.

    Each trial draws m, xi, V with parity opposite to m (unit norm) and a
    perturbation, then records ``deg E^m_xi(g)`` for the equatorial product g
    on S^0 and the variational gap.  A violation is a degree above m or a
    gap above ``gap_tol``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    worst_deg, worst_gap, worst_rel, bad = -math.inf, 0.0, 0.0, 0
    for t in range(trials):
        mode = modes[t % len(modes)]
        m = int(rng.integers(0, m_max + 1))
        xi = rng.standard_normal(2)
        fr = frame(xi)
        top = m + 1 + 2 * int(rng.integers(0, 2))
        basis = sh.build_basis(2, top)
        bands = list(range(m + 1, top + 1, 2))
        if mode == "connection":
            V = sh.SphereFunction.random(basis, rng, bands=bands, channels=(r,), complex_=True)
            V = (1.0 / math.sqrt(V.norm_sq())) * V
            pert = _random_skew(rng, 2, r)
            g = connection_products(V, fr, pert)
        else:
            V = sh.SphereFunction.random(basis, rng, bands=bands)
            V = (1.0 / math.sqrt(V.norm_sq())) * V
            pert = SymTensor.random(2, 2, rng)
            g = metric_products(V, fr, pert)
        d, _ = extension_degree(g, m, fr)
        total, kept = variational_terms([V], xi, pert, m, mode)
        gap = total - kept
        rel = gap / total if total > 0 else 0.0
        worst_deg = max(worst_deg, d - m)
        worst_gap = max(worst_gap, gap)
        worst_rel = max(worst_rel, rel)
        ok = d <= m and gap <= gap_tol
        bad += not ok
        rows.append({"trial": t, "mode": mode, "m": m, "degree": d, "gap": gap, "ok": ok})
    return DegeneracyReport(trials, worst_deg, worst_gap, worst_rel, bad, rows)
