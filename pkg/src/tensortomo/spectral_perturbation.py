"""Finite-dimensional perturbation theory for an eigenvalue cluster at zero.

For a Hermitian family ``P_tau`` whose cluster of eigenvalues inside a small
circle ``|z| = radius`` sits at zero when ``tau = 0``:

* ``Pi`` is the spectral projector of the cluster,
* ``P^{-1}`` (the reduced resolvent) is the inverse of P on the complement,
* ``H_1`` is the next Laurent coefficient, so that near ``z = 0``
  ``(z - P)^{-1} = Pi / z - P^{-1} + z H_1 + O(z^2)``,

and the trace ``lambda_tau = Tr(P_tau Pi_tau)`` of the cluster satisfies
``lambda'' = Tr(P'' Pi) - 2 Tr(Pi P' P^{-1} P' Pi)``.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

CONTOUR_GUARD = 1e-8
KERNEL_RTOL = 1e-8
FD_STEP = 1e-4


class ContourError(ValueError):
    """An eigenvalue lies on (or too close to) the contour."""


def _hermitian(P, name="P"):
    P = np.asarray(P)
    scale = max(1.0, float(np.abs(P).max())) if P.size else 1.0
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.abs(P - P.conj().T).max() > 1e-12 * scale:
        raise ValueError(f"{name} must be Hermitian")
    return 0.5 * (P + P.conj().T)


def _split(P, radius):
    P = _hermitian(P)
    evals, evecs = np.linalg.eigh(P)
    if np.any(np.abs(np.abs(evals) - radius) < CONTOUR_GUARD):
        raise ContourError(f"an eigenvalue lies within {CONTOUR_GUARD} of |z| = {radius}; choose another radius")
    inside = np.abs(evals) < radius
    return evals, evecs, inside


def cluster_projector(P, radius):
    """Spectral projector onto the eigenvalues with ``|lambda| < radius``."""
    _, evecs, inside = _split(P, radius)
    V = evecs[:, inside]
    return V @ V.conj().T


def contour_projector(P, radius, nodes=64):
    """``(1/2 pi i) oint (z - P)^{-1} dz`` by the trapezoid rule on the circle."""
    _split(P, radius)
    return _contour_moment(P, radius, nodes, power=0)


def _contour_moment(P, radius, nodes, power):
    """``(1/2 pi i) oint z^{-power} (z - P)^{-1} dz`` with ``nodes`` trapezoid points."""
    P = np.asarray(P, dtype=complex)
    d = P.shape[0]
    acc = np.zeros((d, d), dtype=complex)
    for theta in 2.0 * np.pi * np.arange(nodes) / nodes:
        z = radius * np.exp(1j * theta)
        acc += z ** (1 - power) * np.linalg.inv(z * np.eye(d) - P)
    return acc / nodes


def reduced_resolvent(P, radius):
    """``sum_{outside} E_lambda / lambda``: inverse of P away from the cluster."""
    evals, evecs, inside = _split(P, radius)
    V = evecs[:, ~inside]
    return (V / evals[~inside]) @ V.conj().T


def second_coefficient(P, radius):
    """``H_1 = -sum_{outside} E_lambda / lambda^2``."""
    evals, evecs, inside = _split(P, radius)
    V = evecs[:, ~inside]
    return -(V / evals[~inside] ** 2) @ V.conj().T


def contour_second_coefficient(P, radius, nodes=64):
    """``H_1`` as the z^1 Laurent coefficient, ``(1/2 pi i) oint z^{-2} (z - P)^{-1} dz``."""
    _split(P, radius)
    return _contour_moment(P, radius, nodes, power=2)


@dataclass(frozen=True, eq=False)
class SpectralSnapshot:
    projector: np.ndarray
    reduced: np.ndarray
    h1: np.ndarray
    trace: float
    radius: float

    def identity_residuals(self, P):
        """Residuals of the resolvent identities (all should vanish)."""
        Pi, R, H = self.projector, self.reduced, self.h1
        I = np.eye(P.shape[0])
        return {
            "P R - (I - Pi)": float(np.abs(P @ R - (I - Pi)).max()),
            "R P - (I - Pi)": float(np.abs(R @ P - (I - Pi)).max()),
            "Pi R": float(np.abs(Pi @ R).max()),
            "R Pi": float(np.abs(R @ Pi).max()),
            "P H1 + R": float(np.abs(P @ H + R).max()),
        }


def snapshot(P, radius):
    Pi = cluster_projector(P, radius)
    return SpectralSnapshot(Pi, reduced_resolvent(P, radius), second_coefficient(P, radius), float(np.real(np.trace(P @ Pi))), radius)


def kernel_dimension(P, rtol=KERNEL_RTOL):
    s = np.linalg.svd(np.asarray(P), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return int(s.size)
    return int(np.sum(s < rtol * s[0]))


def default_radius(P, rtol=KERNEL_RTOL):
    """Half the first eigenvalue magnitude above the numerical kernel."""
    evals = np.sort(np.abs(np.linalg.eigvalsh(_hermitian(P))))
    k = kernel_dimension(P, rtol)
    if k == len(evals):
        raise ValueError("P vanishes; no spectral gap")
    return 0.5 * float(evals[k])


class SpectralFamily:
    """One-parameter Hermitian family with derivatives at ``tau = 0``.

    Derivatives are taken from the constructor when given, otherwise by
    central differences with step ``h`` and one Richardson extrapolation.
    """

    def __init__(self, evaluate, Pdot=None, Pddot=None, h=FD_STEP):
        self._evaluate = evaluate
        self.h = h
        P0 = _hermitian(evaluate(0.0), "P_0")
        self.d = P0.shape[0]
        self.P0 = P0
        self.Pdot = _hermitian(Pdot, "Pdot") if Pdot is not None else self._richardson(self._d1)
        self.Pddot = _hermitian(Pddot, "Pddot") if Pddot is not None else self._richardson(self._d2)

    def __call__(self, tau):
        return _hermitian(self._evaluate(float(tau)))

    def _d1(self, h):
        return (self(h) - self(-h)) / (2.0 * h)

    def _d2(self, h):
        return (self(h) - 2.0 * self.P0 + self(-h)) / h**2

    def _richardson(self, D):
        return (4.0 * D(self.h / 2.0) - D(self.h)) / 3.0

    # constructors ---------------------------------------------------------

    @classmethod
    def quadratic(cls, P0, P1, P2):
        """``P_tau = P0 + tau P1 + tau^2 P2 / 2``."""
        P0, P1, P2 = (np.asarray(x) for x in (P0, P1, P2))
        return cls(lambda t: P0 + t * P1 + 0.5 * t * t * P2, P1, P2)

    @classmethod
    def gram(cls, M0, M1):
        """PSD family ``(M0 + tau M1)^H (M0 + tau M1)``."""
        M0, M1 = np.asarray(M0), np.asarray(M1)
        Pdot = M0.conj().T @ M1 + M1.conj().T @ M0
        Pddot = 2.0 * M1.conj().T @ M1

        def ev(t):
            M = M0 + t * M1
            return M.conj().T @ M

        return cls(ev, Pdot, Pddot)


def cluster_trace(F, tau, radius):
    P = F(tau)
    return float(np.real(np.trace(P @ cluster_projector(P, radius))))


def first_variation(F, radius):
    """``lambda' = Tr(P' Pi)``."""
    Pi = cluster_projector(F.P0, radius)
    return float(np.real(np.trace(F.Pdot @ Pi)))


def second_variation(F, radius=None):
    """``lambda'' = Tr(P'' Pi) - 2 Tr(Pi P' P^{-1} P' Pi)``."""
    radius = default_radius(F.P0) if radius is None else radius
    Pi = cluster_projector(F.P0, radius)
    R = reduced_resolvent(F.P0, radius)
    t1 = np.trace(F.Pddot @ Pi)
    t2 = np.trace(Pi @ F.Pdot @ R @ F.Pdot @ Pi)
    return float(np.real(t1 - 2.0 * t2))


def finite_difference_variation(F, radius, h=1e-3):
    """``(lambda', lambda'')`` from central differences of ``Tr(P_tau Pi_tau)`` with Richardson."""
    lam = {t: cluster_trace(F, t, radius) for t in (-h, -h / 2, 0.0, h / 2, h)}

    def d1(s):
        return (lam[s] - lam[-s]) / (2 * s)

    def d2(s):
        return (lam[s] - 2 * lam[0.0] + lam[-s]) / s**2

    return (4 * d1(h / 2) - d1(h)) / 3, (4 * d2(h / 2) - d2(h)) / 3


@dataclass
class EjectionReport:
    lam: float
    lam_dot: float
    lam_dot_fd: float
    lam_ddot: float
    kernel_before: int
    kernel_after: int
    tau_probe: float
    radius: float

    @property
    def ejected(self):
        return self.kernel_after < self.kernel_before

    @property
    def consistent(self):
        """Positive second variation must come with a strict kernel drop."""
        return self.lam_ddot <= 1e-8 or self.ejected

    def to_json(self):
        rec = asdict(self)
        rec["ejected"] = self.ejected
        return json.dumps(rec, sort_keys=True)


def probe_step(F, lam_ddot, rtol=KERNEL_RTOL, margin=1e2, floor=1e-2, cap=1.0):
    """Smallest step at which ``tau^2 lambda''/2`` clears the kernel threshold by ``margin``."""
    if lam_ddot <= 0.0:
        return floor
    scale = float(np.linalg.norm(F.P0, 2))
    return float(min(cap, max(floor, np.sqrt(2.0 * margin * rtol * scale / lam_ddot))))


def ejection_experiment(F, radius=None, tau_probe=None, psd_tol=1e-12):
    """Check ``lambda' = 0`` and that ``lambda'' > 0`` ejects an eigenvalue from zero.

    By default the kernel is probed at :func:`probe_step`, since an
    eigenvalue leaving zero has size about ``tau^2 lambda''/2``.
    """
    if kernel_dimension(F.P0) == 0:
        raise ValueError("P_0 must have a non-trivial kernel")
    radius = default_radius(F.P0) if radius is None else radius
    lam_ddot = second_variation(F, radius)
    if tau_probe is None:
        tau_probe = probe_step(F, lam_ddot)
    for t in (-tau_probe, tau_probe):
        P = F(t)
        lo = np.linalg.eigvalsh(P).min()
        if lo < -psd_tol * max(1.0, np.abs(P).max()):
            raise ValueError(f"family is not PSD at tau = {t} (min eigenvalue {lo:.3e})")
    lam_dot_fd, _ = finite_difference_variation(F, radius)
    return EjectionReport(
        lam=cluster_trace(F, 0.0, radius),
        lam_dot=first_variation(F, radius),
        lam_dot_fd=float(lam_dot_fd),
        lam_ddot=lam_ddot,
        kernel_before=kernel_dimension(F.P0),
        kernel_after=kernel_dimension(F(tau_probe)),
        tau_probe=tau_probe,
        radius=radius,
    )


def random_hermitian(rng, d, complex_=True):
    A = rng.standard_normal((d, d))
    if complex_:
        A = A + 1j * rng.standard_normal((d, d))
    return 0.5 * (A + A.conj().T)


def random_kernel_family(rng, d, kernel, complex_=True):
    """``P0 + tau P1 + tau^2 P2/2`` with P0 PSD of the given kernel dimension."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)) + (1j * rng.standard_normal((d, d)) if complex_ else 0))
    ev = np.concatenate([np.zeros(kernel), rng.uniform(1.0, 3.0, d - kernel)])
    P0 = (Q * ev) @ Q.conj().T
    return SpectralFamily.quadratic(P0, random_hermitian(rng, d, complex_), random_hermitian(rng, d, complex_))


def random_psd_family(rng, d, kernel, preserve=False):
    """Gram family with ``dim ker P_0 = kernel``; ``preserve`` keeps the kernel fixed for all tau."""
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = np.concatenate([rng.uniform(1.0, 2.0, d - kernel), np.zeros(kernel)])
    M0 = (U * s) @ V.T
    M1 = rng.standard_normal((d, d))
    if preserve:
        M1 = M1 @ (V[:, : d - kernel] @ V[:, : d - kernel].T)
    return SpectralFamily.gram(M0, M1)
