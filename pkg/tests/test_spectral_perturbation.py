import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensortomo import spectral_perturbation as sp

seeds = st.integers(0, 2**32 - 1)


def low_sum(F, tau, k):
    """Sum of the k smallest eigenvalues, straight from eigvalsh."""
    return float(np.sum(np.linalg.eigvalsh(F(tau))[:k]))


def fd_second(F, k, h=1e-3):
    f = {s: low_sum(F, s, k) for s in (-h, -h / 2, 0.0, h / 2, h)}
    d2 = lambda s: (f[s] - 2 * f[0.0] + f[-s]) / s**2  # noqa: E731
    return (4 * d2(h / 2) - d2(h)) / 3


def test_exact_two_by_two():
    # P_tau = [[0, tau], [tau, 1]]: the small eigenvalue is -tau^2 + O(tau^4)
    F = sp.SpectralFamily.quadratic(np.diag([0.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)))
    assert sp.second_variation(F, 0.5) == pytest.approx(-2.0, abs=1e-12)
    assert sp.first_variation(F, 0.5) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=15)
@given(st.integers(2, 8), seeds)
def test_contour_matches_spectral_projector(d, seed):
    rng = np.random.default_rng(seed)
    F = sp.random_kernel_family(rng, d, int(rng.integers(1, d)))
    r = sp.default_radius(F.P0)
    np.testing.assert_allclose(sp.contour_projector(F.P0, r, nodes=128), sp.cluster_projector(F.P0, r), atol=1e-10)
    np.testing.assert_allclose(sp.contour_second_coefficient(F.P0, r, nodes=128), sp.second_coefficient(F.P0, r), atol=1e-9)


@settings(max_examples=15)
@given(st.integers(2, 8), seeds)
def test_resolvent_identities(d, seed):
    rng = np.random.default_rng(seed)
    F = sp.random_kernel_family(rng, d, int(rng.integers(1, d)))
    snap = sp.snapshot(F.P0, sp.default_radius(F.P0))
    for name, val in snap.identity_residuals(F.P0).items():
        assert val <= 1e-10, name


@settings(max_examples=30)
@given(st.integers(2, 10), seeds)
def test_second_variation_matches_eigenvalue_differences(d, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max(2, d // 2)))
    F = sp.random_kernel_family(rng, d, k)
    formula = sp.second_variation(F)
    assert formula == pytest.approx(fd_second(F, k), rel=1e-5, abs=1e-7)


def test_family_derivatives_by_richardson():
    rng = np.random.default_rng(2)
    G = sp.random_kernel_family(rng, 5, 2)
    F = sp.SpectralFamily(lambda t: G(t))
    np.testing.assert_allclose(F.Pdot, G.Pdot, atol=1e-8)
    np.testing.assert_allclose(F.Pddot, G.Pddot, atol=1e-6)


@settings(max_examples=20)
@given(st.integers(3, 10), seeds)
def test_psd_family_ejection(d, seed):
    rng = np.random.default_rng(seed)
    F = sp.random_psd_family(rng, d, int(rng.integers(1, d)))
    rep = sp.ejection_experiment(F)
    assert abs(rep.lam_dot) <= 1e-8 and abs(rep.lam_dot_fd) <= 1e-6
    assert rep.lam_ddot >= -1e-10
    assert rep.consistent
    if rep.lam_ddot > 1e-8:
        assert rep.ejected


def test_preserved_kernel_has_zero_second_variation():
    rng = np.random.default_rng(4)
    F = sp.random_psd_family(rng, 6, 2, preserve=True)
    rep = sp.ejection_experiment(F)
    assert abs(rep.lam_ddot) <= 1e-8 and not rep.ejected and rep.consistent
    assert json.loads(rep.to_json())["ejected"] is False


def test_probe_step_bounds():
    F = sp.random_psd_family(np.random.default_rng(0), 4, 1)
    assert sp.probe_step(F, 0.0) == 1e-2
    assert sp.probe_step(F, 1e-30) == 1.0
    assert 1e-2 <= sp.probe_step(F, 1e-4) <= 1.0


def test_contour_on_eigenvalue_rejected():
    P = np.diag([0.0, 1.0, 2.0])
    with pytest.raises(sp.ContourError):
        sp.cluster_projector(P, 1.0)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        sp.snapshot(np.array([[0.0, 1.0], [0.0, 1.0]]), 0.5)


def test_ejection_needs_kernel():
    F = sp.SpectralFamily.quadratic(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sp.ejection_experiment(F)
