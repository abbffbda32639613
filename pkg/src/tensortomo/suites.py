"""Verification suites run by the command-line driver.

Each suite returns a list of case dictionaries with the keys ``name``,
``status`` ("pass", "fail" or "error"), ``measured`` and ``tolerance``,
plus an optional ``data`` mapping of extra columns.
"""

import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import degree_certificates as dc
from . import disk_xray as dx
from . import slice_ops as so
from . import spectral_perturbation as sp
from . import spherical_harmonics as sh
from . import symbol_calculus as sc
from . import tensor_algebra as ta
from . import polynomials as poly

SUITES = ("verify-algebra", "verify-slices", "certify", "symbols", "perturb", "disk")
CERT_MODES = ("connection", "endomorphism", "metric", "n2-degeneracy")


@dataclass
class RunConfig:
    command: str
    dim: int = 3
    rank: int = 2
    cutoff: int = None
    channels: int = 2
    seed: int = 0
    budget: int = dc.DEFAULT_BUDGET
    workers: int = 1
    trials: int = None
    mode: str = "connection"
    dim_matrix: int = 10
    tolerances: dict = field(default_factory=dict)
    out: str = None
    format: str = "json"

    def __post_init__(self):
        if self.cutoff is None:
            self.cutoff = self.rank + 3

    def validate(self):
        if self.dim < 2:
            raise ValueError("--dim must be at least 2")
        if self.rank < 0:
            raise ValueError("--rank must be non-negative")
        if self.cutoff < self.rank + 3:
            raise ValueError("--cutoff must be at least rank + 3")
        if self.budget < 1:
            raise ValueError("--budget must be at least 1")
        if self.channels < 1 or self.workers < 1:
            raise ValueError("--channels and --workers must be positive")
        if self.trials is not None and self.trials < 1:
            raise ValueError("--trials must be positive")
        if self.dim_matrix < 2:
            raise ValueError("--dim-matrix must be at least 2")
        if self.mode not in CERT_MODES:
            raise ValueError(f"--mode must be one of {', '.join(CERT_MODES)}")

    def tol(self, key, default):
        return float(self.tolerances.get(key, default))

    def resolved(self):
        keys = ("command", "dim", "rank", "cutoff", "channels", "seed", "budget", "workers", "trials", "mode", "dim_matrix", "tolerances", "format")
        return {k: getattr(self, k) for k in keys}


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else (None if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def case(name, measured, tolerance, ok=None, data=None):
    """A case passes when ``measured <= tolerance`` unless ``ok`` is given."""
    if ok is None:
        ok = measured is not None and float(measured) <= float(tolerance)
    rec = {"name": name, "status": "pass" if ok else "fail", "measured": _num(measured), "tolerance": _num(tolerance)}
    if data:
        rec["data"] = data
    return rec


def guarded(name, fn):
    """Run ``fn`` returning a list of cases; exceptions become an error case."""
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - reported, never swallowed
        return [{"name": name, "status": "error", "measured": None, "tolerance": None, "data": {"error": f"{type(exc).__name__}: {exc}", "trace": traceback.format_exc(limit=3)}}]


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# Random inputs shared by several suites
# ---------------------------------------------------------------------------


def random_input(mode, n, m, rng, r=2, top=None):
    """Random V with a band of degree >= m+1, shaped for the given certificate mode."""
    top = m + 1 if top is None else top
    basis = sh.build_basis(n, top)
    bands = sorted({m + 1, top} | {int(k) for k in rng.integers(0, top + 1, size=2)})
    if mode == "connection":
        return sh.SphereFunction.random(basis, rng, bands=bands, channels=(r,), complex_=True)
    if mode == "endomorphism":
        V = sh.SphereFunction.random(basis, rng, bands=bands, channels=(r, r), complex_=True)
        eye = np.eye(r)
        return V.map_channels(lambda b: b - np.trace(b, axis1=1, axis2=2)[:, None, None] * eye / r)
    if mode == "metric":
        return sh.SphereFunction.random(basis, rng, bands=bands)
    raise ValueError(f"unknown mode {mode!r}")


def random_skew_form(rng, n, r):
    G = rng.standard_normal((n, r, r)) + 1j * rng.standard_normal((n, r, r))
    return 0.5 * (G - np.conj(np.transpose(G, (0, 2, 1))))


def random_spd(rng, n, spread=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.exp(rng.uniform(-spread, spread, n))) @ Q.T


# ---------------------------------------------------------------------------
# verify-algebra
# ---------------------------------------------------------------------------


def suite_algebra(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, N = cfg.dim, cfg.cutoff
    tol = cfg.tol("algebra", 1e-10)
    cases = []
    for k in range(cfg.rank + 1):

        def tensor_cases(k=k):
            out = []
            raw = rng.standard_normal((n,) * k)
            s = ta.symmetrize(raw, n=n)
            out.append(case(f"symmetrize idempotent m={k}", np.abs(ta.symmetrize(s.full(), n=n).coeffs - s.coeffs).max(), tol))
            f = ta.SymTensor.random(n, k, rng)
            out.append(case(f"trace-free reconstruction m={k}", (ta.reconstruct(ta.tracefree_decompose(f)) - f).norm(), tol))
            if k >= 2:
                out.append(case(f"trace adjoint of J m={k}", np.abs(ta.trace_matrix(n, k) - ta.jay_matrix(n, k - 2).T).max(), tol))
            xi = rng.standard_normal(n)
            K = ta.ker_iota_projector(xi, k)
            out.append(case(f"ker-iota projector idempotent m={k}", np.abs(K @ K - K).max() + np.abs(K - K.T).max(), tol))
            if k >= 1:
                out.append(case(f"ker-iota projector kills ran j_xi m={k}", np.abs(K @ ta.j_xi_matrix(xi, k)).max(), tol))
                out.append(case(f"iota_xi vanishes on projector range m={k}", np.abs(ta.iota_matrix(xi, k) @ K).max(), tol))
            if k <= N:
                basis = sh.build_basis(n, N)
                u = sh.SphereFunction.random(basis, rng)
                lhs = sh.pullback_m(f, basis).inner(u).real
                rhs = float(np.dot(f.orthonormal(), sh.pushforward_m(u, k).orthonormal()))
                out.append(case(f"pushforward adjoint of pullback m={k}", abs(lhs - rhs), tol * max(1.0, abs(lhs))))
            return out

        cases += guarded(f"tensor suite m={k}", tensor_cases)

    def basis_cases():
        basis = sh.build_basis(n, N)
        rule = sh.sphere_quadrature(n, 2 * N + 2)
        Y = np.concatenate([basis.evaluate(k, rule.nodes) for k in range(N + 1)], axis=1)
        gram = Y.T @ (rule.weights[:, None] * Y)
        out = [case(f"harmonic basis orthonormal n={n} N={N}", np.abs(gram - np.eye(gram.shape[0])).max(), tol)]
        lap = max((np.abs(poly.laplacian(basis.blocks[k].T, n, k)).max() if k >= 2 and basis.dims[k] else 0.0) for k in range(N + 1))
        out.append(case(f"harmonic basis Laplacian-free n={n} N={N}", lap, tol))
        return out

    cases += guarded("harmonic basis", basis_cases)

    def band_cases():
        L = min(N, 4)
        basis = sh.build_basis(n, 2 * L)
        worst = 0.0
        for a in range(L + 1):
            for b in range(L + 1):
                u = sh.SphereFunction.random(basis, rng, bands=[a])
                w = sh.SphereFunction.random(basis, rng, bands=[b])
                e = sh.multiply(u, w).band_energies()
                allowed = np.zeros(len(e), bool)
                allowed[abs(a - b) : a + b + 1 : 2] = True
                worst = max(worst, float(e[~allowed].sum() / max(e.sum(), 1e-300)))
        return [case(f"multiplication band law n={n} L={L}", worst, tol)]

    cases += guarded("band law", band_cases)
    return cases


# ---------------------------------------------------------------------------
# verify-slices
# ---------------------------------------------------------------------------


def scaling_jacobian_residual(A0, A1, h, degree=60):
    """Relative mismatch of the pushforward identity for the radial scaling.

    The A0 side is parametrized isometrically by ``x = A0^{-1/2} theta``, the
    A1 side radially by ``x = theta / sqrt(<A1 theta, theta>)``.
    """
    n = A0.shape[0]
    rule = sh.sphere_quadrature(n, degree)
    th = rule.nodes
    w0, U0 = np.linalg.eigh(A0)
    x = th @ (U0 / np.sqrt(w0)) @ U0.T
    q1 = np.einsum("pi,ij,pj->p", x, A1, x)
    Rx = x / np.sqrt(q1)[:, None]
    lhs = rule.integrate(h(Rx) * so.sphere_scaling_jacobian(A0, A1, x))
    rho = np.einsum("pi,ij,pj->p", th, A1, th) ** -0.5
    rhs = math.sqrt(np.linalg.det(A1)) * rule.integrate(h(th * rho[:, None]) * rho**n)
    return _rel(lhs, rhs)


def suite_slices(cfg):
    rng = np.random.default_rng(cfg.seed)
    n = max(cfg.dim, 3)
    tol = cfg.tol("slices", 1e-9)
    trials = cfg.trials or 5
    cases = []

    def constants():
        worst = 0.0
        for m in range(1, 13):
            ref = quad(lambda t: math.sin(t) ** (m - 1), 0.0, math.pi, epsabs=0, epsrel=1e-13)[0]
            worst = max(worst, _rel(so.c_constant(m), ref))
        return [case("C_m closed form vs quadrature m=1..12", worst, cfg.tol("constants", 1e-12))]

    cases += guarded("constants", constants)

    def norms():
        inner = sh.build_basis(n - 1, cfg.cutoff)
        worst = 0.0
        for _ in range(trials):
            f = sh.SphereFunction.random(inner, rng)
            fr = so.frame(rng.standard_normal(n))
            for k in range(min(cfg.rank, 5) + 1):
                worst = max(worst, _rel(so.outer_norm_sq(f, k, fr), so.extension_energy(f, k)))
        return [case(f"extension norm identity n={n}", worst, tol)]

    cases += guarded("norm identity", norms)

    def restriction():
        basis = sh.build_basis(n, cfg.cutoff)
        worst = 0.0
        for _ in range(trials):
            u = sh.SphereFunction.random(basis, rng)
            fr = so.frame(rng.standard_normal(n))
            w = rng.standard_normal((20, n - 1))
            w /= np.linalg.norm(w, axis=1)[:, None]
            worst = max(worst, float(np.abs(so.restrict(u, fr).evaluate(w) - u.evaluate(fr.to_outer(w))).max()))
        return [case(f"restriction matches point values n={n}", worst, tol)]

    cases += guarded("restriction", restriction)

    def pairing():
        worst = 0.0
        for _ in range(trials):
            fr = so.frame(rng.standard_normal(n))
            m = int(rng.integers(0, cfg.rank + 1))
            mp = int(rng.integers(0, cfg.rank + 1))
            f = sh.SphereFunction.random(sh.build_basis(n - 1, cfg.cutoff), rng)
            fp = ta.SymTensor.random(n, mp, rng)
            lhs = so.pairing_lhs(f, fp, fr, m)
            bands = so.extension_bands(f, m, fr, sh.build_basis(n, mp), mp)
            ext = sh.SphereFunction(sh.build_basis(n, mp), tuple(bands))
            push = ta.project_ker_iota(fr.xi, sh.pushforward_m(ext, mp))
            worst = max(worst, abs(lhs - push.inner(fp)) / max(1.0, abs(lhs)))
        return [case(f"pairing identity n={n}", worst, tol)]

    cases += guarded("pairing", pairing)

    def jacobian():
        worst = 0.0
        for _ in range(trials):
            k = int(rng.integers(2, min(n, 4) + 1))
            c = 0.5 * rng.standard_normal(k)
            worst = max(worst, scaling_jacobian_residual(random_spd(rng, k, 0.5), random_spd(rng, k, 0.5), lambda x: np.exp(x @ c)))
        return [case("sphere scaling Jacobian pushforward", worst, cfg.tol("jacobian", 1e-7))]

    cases += guarded("scaling jacobian", jacobian)
    return cases


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

_CERTIFIERS = {
    "connection": dc.connection_certificate,
    "endomorphism": dc.endomorphism_certificate,
    "metric": dc.metric_certificate,
}


def suite_certify(cfg):
    trials = cfg.trials or 1
    if cfg.mode == "n2-degeneracy":
        return guarded("n2 degeneracy", lambda: _n2_cases(cfg, trials))
    rng = np.random.default_rng(cfg.seed)
    rel_tol = cfg.tol("relative_gap", 1e-6)
    cases = []
    for t in range(trials):
        V = random_input(cfg.mode, cfg.dim, cfg.rank, rng, r=cfg.channels)

        def one(V=V, t=t):
            cert = _CERTIFIERS[cfg.mode](V, cfg.rank, budget=cfg.budget, seed=cfg.seed, workers=cfg.workers)
            ok = cert.achieved_degree >= cfg.rank + 1 and cert.relative_gap > rel_tol
            return [case(f"{cfg.mode} certificate {t}", cert.relative_gap, rel_tol, ok=ok, data={"certificate": cert.to_record()})]

        cases += guarded(f"{cfg.mode} certificate {t}", one)
    return cases


def _n2_cases(cfg, trials):
    rep = dc.n2_degeneracy_check(trials=max(trials, 1), m_max=cfg.rank, seed=cfg.seed, r=cfg.channels)
    gap_tol = cfg.tol("n2_gap", 1e-9)
    return [
        case("n=2 maximal variational gap", rep.max_gap, gap_tol),
        case("n=2 extension degree excess over m", rep.max_excess_degree, 0.0),
        case("n=2 violating trials", rep.violations, 0, data={"trials": rep.trials}),
    ]


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


def suite_symbols(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, r = max(cfg.dim, 2), cfg.channels
    tol = cfg.tol("symbols", 1e-9)
    trials = cfg.trials or 3
    cases = []
    for m in range(cfg.rank + 1):

        def pi_cases(m=m):
            xi = rng.standard_normal(n)
            S = sc.sigma_pi_m(xi, n, m).matrix
            Si = sc.sigma_pi_m_inv(xi, n, m).matrix
            K = ta.ker_iota_projector(xi, m)
            P = sc.p_m_matrix(xi, n, m)
            scale = max(1.0, np.abs(S).max())
            return [
                case(f"sigma_Pi inverse on ker iota m={m}", np.abs(Si @ S - K).max(), tol),
                case(f"sigma_Pi even in xi m={m}", np.abs(sc.sigma_pi_m(-xi, n, m).matrix - S).max() / scale, tol),
                case(f"P_m orthogonal projector m={m}", np.abs(P @ P - P).max() + np.abs(P - P.T).max(), tol),
            ]

        cases += guarded(f"sigma_Pi m={m}", pi_cases)

        def sandwich(m=m):
            worst = 0.0
            for _ in range(trials):
                xi = rng.standard_normal(n)
                cR = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                cL = rng.standard_normal((n, n))
                a, b = sc.sandwich_symbol(
                    lambda u: 1.0 + u @ cR + 0.3 * (u @ cR) ** 2,
                    lambda u: np.einsum("pi,ij,pj->p", u, cL, u) + 0.5,
                    xi, m, m, m_ext=int(rng.integers(0, m + 2)),
                )
                worst = max(worst, float(np.linalg.norm(a.matrix - b.matrix)))
            return [case(f"sandwich routes agree m={m}", worst, cfg.tol("sandwich", 1e-8))]

        if n >= 3:
            cases += guarded(f"sandwich m={m}", sandwich)

        def connection(m=m):
            worst, worst_l = 0.0, 0.0
            min_gap = math.inf
            for _ in range(trials):
                V = random_input("connection", n, m, rng, r=r, top=m + 2)
                xi = rng.standard_normal(n)
                G = random_skew_form(rng, n, r)
                g = G.reshape(-1)
                Q = sc.sigma_q_connection(V, xi, m).matrix
                L = sc.sigma_l_connection(V, xi, m).matrix
                Pi = sc.sigma_pi_m_inv(xi, n, m, r).matrix
                lhs = (np.vdot(g, L @ g) - np.vdot(Q @ g, Pi @ (Q @ g))).real
                gap = sc.variational_gap([V], xi, G, m, "connection")
                C = so.c_constant(n - 1 + 2 * m)
                rhs = 2.0 * np.pi / np.linalg.norm(xi) / C * gap
                worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
                quadform = sc.connection_quadratic_form(V, xi, G)
                worst_l = max(worst_l, abs(np.vdot(g, L @ g).real - quadform) / max(1.0, quadform))
                min_gap = min(min_gap, gap)
            return [
                case(f"connection cancellation identity m={m}", worst, tol),
                case(f"sigma_L matches equatorial quadrature m={m}", worst_l, tol),
                case(f"connection gap non-negative m={m}", -min_gap, 1e-10),
            ]

        cases += guarded(f"connection symbols m={m}", connection)

        def metric(m=m):
            worst, worst_routes, worst_odd = 0.0, 0.0, 0.0
            for _ in range(trials):
                V = random_input("metric", n, m, rng, top=m + 2)
                xi = rng.standard_normal(n)
                h = ta.SymTensor.random(n, 2, rng)
                Q = sc.sigma_q_metric(V, xi, m).matrix
                a2 = sc.sigma_a2_metric(V, xi, h, m)
                a2q = sc.sigma_a2_metric(V, xi, h, m, route="quadrature")
                q = Q @ h.orthonormal()
                lhs = a2 - 2.0 * np.vdot(q, sc.sigma_pi_m_inv(xi, n, m).matrix @ q).real
                gap = sc.variational_gap([V], xi, h, m, "metric")
                rhs = np.pi / np.linalg.norm(xi) / so.c_constant(n - 1 + 2 * m) * gap
                worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
                worst_routes = max(worst_routes, abs(a2 - a2q) / max(1.0, abs(a2)))
                worst_odd = max(worst_odd, np.abs(sc.sigma_q_metric(V, -xi, m).matrix + Q).max())
            return [
                case(f"metric cancellation identity m={m}", worst, tol),
                case(f"metric a2 routes agree m={m}", worst_routes, tol),
                case(f"metric sigma_Q odd in xi m={m}", worst_odd, tol),
            ]

        cases += guarded(f"metric symbols m={m}", metric)
    return cases


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------


def _perturb_trial(seed, d):
    rng = np.random.default_rng(seed)
    kernel = int(rng.integers(1, max(2, d // 2)))
    F = sp.random_kernel_family(rng, d, kernel)
    radius = sp.default_radius(F.P0)
    formula = sp.second_variation(F, radius)
    _, fd = sp.finite_difference_variation(F, radius)
    return formula, fd


def suite_perturb(cfg):
    trials = cfg.trials or 20
    tol = cfg.tol("perturb", 1e-5)
    cases = []

    def exact():
        F = sp.SpectralFamily.quadratic(np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)))
        val = sp.second_variation(F, 0.5)
        return [case("2x2 family second variation = -2", abs(val + 2.0), 1e-12, data={"lam_ddot_formula": val})]

    cases += guarded("exact 2x2", exact)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(trials)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_perturb_trial, int(s), int(np.random.default_rng(int(s)).integers(2, cfg.dim_matrix + 1))) for s in seeds]
        for t, fut in enumerate(futures):
            try:
                formula, fd = fut.result()
            except Exception as exc:  # noqa: BLE001
                cases.append({"name": f"trial {t}", "status": "error", "measured": None, "tolerance": tol, "data": {"error": str(exc)}})
                continue
            rel = abs(formula - fd) / max(abs(formula), 1e-8)
            cases.append(case(f"trial {t}", rel, tol, data={"lam_ddot_formula": formula, "lam_ddot_fd": fd, "rel_err": rel}))

    def ejection():
        rng = np.random.default_rng(cfg.seed + 1)
        out = []
        for t in range(min(trials, 20)):
            d = int(rng.integers(3, cfg.dim_matrix + 1))
            F = sp.random_psd_family(rng, d, int(rng.integers(1, d)))
            rep = sp.ejection_experiment(F)
            out.append(case(f"ejection {t}", rep.lam_ddot, 1e-8, ok=rep.consistent and abs(rep.lam_dot) <= 1e-8, data={"ejected": rep.ejected, "kernel_before": rep.kernel_before, "kernel_after": rep.kernel_after}))
        return out

    cases += guarded("ejection", ejection)
    return cases


# ---------------------------------------------------------------------------
# disk
# ---------------------------------------------------------------------------


def suite_disk(cfg):
    rng = np.random.default_rng(cfg.seed)
    ranks = range(0, min(cfg.rank, 3) + 1)
    cases = []

    def annihilation():
        worst = 0.0
        for m in ranks:
            if m == 0:
                continue
            for d in range(2, 6):
                q = dx.TensorField.random(m - 1, d - 1, rng)
                Dp = dx.boundary_potential(q)
                chords = [dx.chord_from_angle(b, t) for b, t in zip(rng.uniform(0, 2 * math.pi, 100), rng.uniform(-1.5, 1.5, 100))]
                worst = max(worst, float(np.abs(dx.transform_matrix(chords, m, Dp.d) @ Dp.vector()).max()))
        return [case("potentials annihilated by the transform", worst, cfg.tol("disk", 1e-12))]

    cases += guarded("annihilation", annihilation)
    for m in ranks:
        for d in range(2, 6):

            def audit(m=m, d=d):
                rep = dx.sinjectivity_audit(m, d)
                data = {"kernel_dim": rep.kernel_dim, "potential_dim": rep.potential_dim, "sv_gap": _num(rep.sv_gap)}
                return [case(f"kernel = potentials m={m} d={d}", rep.max_principal_angle, 1e-6, ok=rep.passed, data=data)]

            cases += guarded(f"audit m={m} d={d}", audit)
    return cases


RUNNERS = {
    "verify-algebra": suite_algebra,
    "verify-slices": suite_slices,
    "certify": suite_certify,
    "symbols": suite_symbols,
    "perturb": suite_perturb,
    "disk": suite_disk,
}
