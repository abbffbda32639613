import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import angle_rule, monomial_integral
from tensortomo import polynomials as poly


@pytest.mark.parametrize("n,d", [(1, 3), (2, 4), (3, 3), (4, 2), (5, 3)])
def test_exponent_enumeration(n, d):
    exps = poly.exponents(n, d)
    assert exps.shape == (math.comb(n + d - 1, d), n)
    assert np.all(exps.sum(axis=1) == d)
    assert len({tuple(e) for e in exps}) == exps.shape[0]
    np.testing.assert_array_equal(poly.locate(n, exps), np.arange(exps.shape[0]))
    if n > 1:
        assert poly.degree_of(n, exps.shape[0]) == d


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_sphere_moments_closed_form(n):
    for d in range(7):
        exps = poly.exponents(n, d)
        ref = np.array([monomial_integral(e) for e in exps])
        np.testing.assert_allclose(poly.sphere_moments(exps), ref, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("n", [3, 4])
def test_sphere_moments_against_angle_quadrature(n):
    pts, w = angle_rule(n, 16)
    for e in poly.exponents(n, 4):
        assert poly.sphere_moments(e[None])[0] == pytest.approx(w @ np.prod(pts**e, axis=1), abs=1e-13)


@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_multiply_is_pointwise_product(n, a, b, seed):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(poly.count(n, a))
    q = rng.standard_normal(poly.count(n, b))
    x = rng.standard_normal((4, n))

    def ev(c, d):
        return np.prod(x[:, None, :] ** poly.exponents(n, d)[None], axis=2) @ c

    np.testing.assert_allclose(ev(poly.multiply(p, q, n, a, b), a + b), ev(p, a) * ev(q, b), rtol=1e-11, atol=1e-11)


def test_laplacian_of_harmonic_polynomial():
    # x^2 - y^2 and xy are harmonic in R^3
    n = 3
    exps = [tuple(e) for e in poly.exponents(n, 2)]
    p = np.zeros(len(exps))
    p[exps.index((2, 0, 0))] = 1.0
    p[exps.index((0, 2, 0))] = -1.0
    np.testing.assert_allclose(poly.laplacian(p, n, 2), 0.0, atol=1e-15)
    r2 = np.zeros(len(exps))
    for i in range(n):
        e = [0] * n
        e[i] = 2
        r2[exps.index(tuple(e))] = 1.0
    assert poly.laplacian(r2, n, 2) == pytest.approx([2.0 * n])


def test_sine_cosine_integral():
    from scipy.integrate import quad

    for p in range(0, 6):
        for a in range(0, 5):
            ref = quad(lambda t: math.sin(t) ** p * math.cos(t) ** a, 0.0, math.pi, epsabs=1e-13, limit=200)[0]
            assert poly.sine_cosine_integral(p, a) == pytest.approx(ref, abs=1e-12)
