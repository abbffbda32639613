import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import angle_rule, monomial_integral, random_unit, zonal
from tensortomo import polynomials as poly
from tensortomo import spherical_harmonics as sh
from tensortomo.tensor_algebra import SymTensor

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_harmonic_dimension_formula(n):
    for k in range(8):
        ref = (2 * k + n - 2) * math.factorial(k + n - 3) // (math.factorial(k) * math.factorial(n - 2)) if k or n > 2 else 1
        assert sh.harmonic_dimension(n, k) == ref


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_addition_theorem(n):
    N = 5 if n < 5 else 4
    basis = sh.build_basis(n, N)
    rng = np.random.default_rng(n)
    x = random_unit(rng, 6, n)
    y = random_unit(rng, 6, n)
    for k in range(N + 1):
        kernel = np.sum(basis.evaluate(k, x) * basis.evaluate(k, y), axis=1)
        np.testing.assert_allclose(kernel, zonal(n, k, np.sum(x * y, axis=1)), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("n,N", [(2, 6), (3, 6), (4, 5), (5, 4)])
def test_orthonormal_under_independent_quadrature(n, N):
    basis = sh.build_basis(n, N)
    pts, w = angle_rule(n, 36 if n < 5 else 24)
    Y = np.concatenate([basis.evaluate(k, pts) for k in range(N + 1)], axis=1)
    np.testing.assert_allclose(Y.T @ (w[:, None] * Y), np.eye(Y.shape[1]), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_blocks_are_harmonic(n):
    basis = sh.build_basis(n, 5)
    for k in range(2, 6):
        np.testing.assert_allclose(poly.laplacian(basis.blocks[k].T, n, k), 0.0, atol=1e-10)


def test_zero_sphere_basis():
    basis = sh.build_basis(1, 1)
    pts = np.array([[1.0], [-1.0]])
    np.testing.assert_allclose(basis.evaluate(0, pts).ravel(), [1 / math.sqrt(2)] * 2)
    np.testing.assert_allclose(basis.evaluate(1, pts).ravel(), [1 / math.sqrt(2), -1 / math.sqrt(2)])
    assert sh.sphere_volume(1) == 2.0


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_quadrature_exactness(n):
    D = 8
    rule = sh.sphere_quadrature(n, D)
    for d in range(D + 1):
        for e in poly.exponents(n, d):
            got = rule.integrate(np.prod(rule.nodes**e, axis=1))
            assert got == pytest.approx(monomial_integral(e), abs=1e-12)


@given(st.integers(2, 4), st.integers(0, 3), st.integers(0, 3), seeds)
def test_multiply_matches_pointwise_product(n, a, b, seed):
    rng = np.random.default_rng(seed)
    basis = sh.build_basis(n, a + b)
    u = sh.SphereFunction.random(basis, rng, bands=range(a + 1))
    w = sh.SphereFunction.random(basis, rng, bands=range(b + 1))
    x = random_unit(rng, 7, n)
    np.testing.assert_allclose(sh.multiply(u, w).evaluate(x), u.evaluate(x) * w.evaluate(x), rtol=1e-10, atol=1e-10)


def test_multiply_channel_rules():
    rng = np.random.default_rng(2)
    basis = sh.build_basis(3, 3)
    A = sh.SphereFunction.random(basis, rng, bands=[1], channels=(2, 2))
    v = sh.SphereFunction.random(basis, rng, bands=[0, 2], channels=(2,))
    x = random_unit(rng, 5, 3)
    got = sh.multiply(A, v, op="ab,b->a").evaluate(x)
    np.testing.assert_allclose(got, np.einsum("pab,pb->pa", A.evaluate(x), v.evaluate(x)), atol=1e-12)


def test_multiply_cutoff_error():
    basis = sh.build_basis(3, 2)
    u = sh.SphereFunction.basis_function(basis, 2, 0)
    with pytest.raises(sh.CutoffError):
        sh.multiply(u, u)


def test_degree_conventions():
    basis = sh.build_basis(3, 4)
    assert sh.degree(sh.SphereFunction.zeros(basis)) == sh.ZERO_DEGREE
    assert sh.degree(sh.constant(basis)) == 0
    u = sh.SphereFunction.basis_function(basis, 3, 1) + 1e-12 * sh.SphereFunction.basis_function(basis, 4, 0)
    assert sh.degree(u) == 3
    assert sh.degree(u, tol=0.0) == 4


@given(st.integers(2, 4), st.integers(0, 3), seeds)
def test_pushforward_is_adjoint_of_pullback(n, m, seed):
    rng = np.random.default_rng(seed)
    basis = sh.build_basis(n, m + 2)
    u = sh.SphereFunction.random(basis, rng)
    pts, w = angle_rule(n, 36)
    vals = u.evaluate(pts)
    # oracle: pi_{m*} u = integral of u(v) v^{(x) m}, read off in monomial order
    exps = poly.exponents(n, m)
    ref = np.array([w @ (vals * np.prod(pts**e, axis=1)) for e in exps])
    np.testing.assert_allclose(sh.pushforward_m(u, m).coeffs, ref, atol=1e-11)


@given(st.integers(2, 4), st.integers(0, 4), seeds)
def test_pullback_values(n, m, seed):
    rng = np.random.default_rng(seed)
    f = SymTensor.random(n, m, rng)
    basis = sh.build_basis(n, m)
    x = random_unit(rng, 5, n)
    np.testing.assert_allclose(sh.pullback_m(f, basis).evaluate(x), f.evaluate(x), atol=1e-11)


def test_pullback_parity_bands():
    f = SymTensor.random(3, 3, np.random.default_rng(0))
    e = sh.pullback_m(f, sh.build_basis(3, 3)).band_energies()
    assert e[0] == 0.0 and e[2] == 0.0 and e[1] > 0 and e[3] > 0


@pytest.mark.parametrize("n", [3, 4])
def test_f_minus_is_lower_part_of_product(n):
    rng = np.random.default_rng(n)
    basis = sh.build_basis(n, 5)
    f = sh.coordinate(basis, 0) + 0.5 * sh.coordinate(basis, n - 1)
    for m in range(1, 5):
        w = sh.SphereFunction.random(basis, rng, bands=[m])
        prod = sh.multiply(f, w)
        lo = sh.f_minus(f, w)
        np.testing.assert_allclose(lo.truncate(m - 1).bands[m - 1], prod.bands[m - 1], atol=1e-12)
        assert (prod - lo - sh.f_plus(f, w)).norm_sq() < 1e-22


def test_from_samples_recovers_expansion():
    rng = np.random.default_rng(4)
    basis = sh.build_basis(4, 4)
    u = sh.SphereFunction.random(basis, rng, channels=(2,))
    rule = sh.sphere_quadrature(4, 10)
    back = sh.SphereFunction.from_samples(basis, rule, u.evaluate(rule.nodes))
    assert (back - u).norm_sq() < 1e-24


def test_basis_save_load(tmp_path):
    basis = sh.build_basis(4, 3)
    path = tmp_path / "b.txt"
    basis.save(path)
    again = sh.HarmonicBasis.load(path)
    for a, b in zip(basis.blocks, again.blocks):
        np.testing.assert_array_equal(a, b)
    path.write_text("# other v9\n")
    with pytest.raises(ValueError):
        sh.HarmonicBasis.load(path)


def test_cached_basis_uses_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("TENSORTOMO_CACHE_DIR", str(tmp_path))
    b1 = sh.cached_basis(3, 3)
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and "n3_N3" in files[0].name
    b2 = sh.cached_basis(3, 3)
    np.testing.assert_array_equal(b1.blocks[3], b2.blocks[3])


def test_band_operator_matrix_of_multiplication():
    basis = sh.build_basis(3, 3)
    x0 = sh.coordinate(basis, 0)
    M = sh.band_operator_matrix(lambda u: sh.multiply(x0, u), basis, 1, 2)
    assert M.shape == (5, 3)
    # multiplication by v_0 on Omega_1 -> Omega_2 has full column rank
    assert np.linalg.matrix_rank(M) == 3
