import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_symmetrize, full_eval, random_unit
from tensortomo import tensor_algebra as ta
from tensortomo.tensor_algebra import PreconditionError, ShapeError, SymTensor

dims = st.integers(2, 4)
ranks = st.integers(0, 4)
seeds = st.integers(0, 2**32 - 1)


def test_dimension_matches_stars_and_bars():
    for n in range(1, 6):
        for m in range(6):
            assert ta.dimension(n, m) == math.comb(n + m - 1, m)


def test_scalar_and_metric():
    assert SymTensor.scalar(3, 2.5).full() == 2.5
    np.testing.assert_array_equal(SymTensor.metric(3).full(), np.eye(3))


@given(dims, ranks, seeds)
def test_symmetrize_matches_permutation_average(n, m, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n,) * m)
    got = ta.symmetrize(raw, n=n).full()
    np.testing.assert_allclose(got, brute_symmetrize(raw), atol=1e-13)
    again = ta.symmetrize(got, n=n).full()
    np.testing.assert_allclose(again, got, atol=1e-13)


@given(dims, ranks, seeds)
def test_symmetrize_is_orthogonal_projection(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2,) + (n,) * m)
    sa = brute_symmetrize(a)
    lhs = np.sum(ta.symmetrize(a, n=n).full() * b)
    assert lhs == pytest.approx(np.sum(sa * brute_symmetrize(b)), abs=1e-12)


@given(dims, ranks, seeds)
def test_inner_product_equals_full_contraction(n, m, seed):
    rng = np.random.default_rng(seed)
    f, g = SymTensor.random(n, m, rng), SymTensor.random(n, m, rng)
    assert f.inner(g) == pytest.approx(np.sum(f.full() * g.full()), abs=1e-12)
    assert np.dot(f.orthonormal(), g.orthonormal()) == pytest.approx(np.sum(f.full() * g.full()), abs=1e-12)


@given(dims, ranks, seeds)
def test_pullback_evaluation(n, m, seed):
    rng = np.random.default_rng(seed)
    f = SymTensor.random(n, m, rng)
    v = rng.standard_normal((5, n))
    np.testing.assert_allclose(f.evaluate(v), full_eval(f.full(), v), atol=1e-12)


def test_trace_examples():
    n = 3
    assert ta.trace(SymTensor.metric(n)).full() == pytest.approx(n)
    # rank one traces vanish by convention
    assert ta.trace(SymTensor.random(n, 1, np.random.default_rng(0))).coeffs == pytest.approx([0.0])
    with pytest.raises(ShapeError):
        ta.trace_matrix(n, 1)


@given(dims, st.integers(2, 4), seeds)
def test_trace_against_einsum(n, m, seed):
    f = SymTensor.random(n, m, np.random.default_rng(seed))
    ref = np.trace(f.full(), axis1=0, axis2=1)
    np.testing.assert_allclose(np.asarray(ta.trace(f).full()), ref, atol=1e-12)


@given(dims, st.integers(0, 3), seeds)
def test_jay_is_adjoint_of_trace(n, m, seed):
    rng = np.random.default_rng(seed)
    f = SymTensor.random(n, m, rng)
    g = SymTensor.random(n, m + 2, rng)
    assert ta.jay(f).inner(g) == pytest.approx(f.inner(ta.trace(g)), abs=1e-11)
    ref = brute_symmetrize(np.multiply.outer(np.eye(n), f.full()))
    np.testing.assert_allclose(ta.jay(f).full(), ref, atol=1e-13)


@given(dims, ranks, seeds)
def test_tracefree_decomposition(n, m, seed):
    f = SymTensor.random(n, m, np.random.default_rng(seed))
    parts = ta.tracefree_decompose(f)
    assert len(parts) == m // 2 + 1
    for part in parts:
        if part.m >= 2:
            assert ta.trace(part).norm() < 1e-10
    assert (ta.reconstruct(parts) - f).norm() < 1e-10 * max(1.0, f.norm())


def test_tracefree_metric_square():
    g = SymTensor.metric(3)
    gg = ta.symmetric_product(g, g)
    parts = ta.tracefree_decompose(gg)
    assert parts[0].norm() < 1e-12 and parts[1].norm() < 1e-12
    assert parts[2].full() == pytest.approx(1.0)


@given(dims, st.integers(1, 4), seeds)
def test_ker_iota_projector(n, m, seed):
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n)
    f = SymTensor.random(n, m, rng)
    p = ta.project_ker_iota(xi, f)
    # contraction with xi vanishes
    np.testing.assert_allclose(np.tensordot(xi, p.full(), axes=(0, 0)), 0.0, atol=1e-11)
    # the residual lies in ran j_xi and is orthogonal to ker iota
    J = ta.j_xi_matrix(xi, m)
    resid = f.orthonormal() - p.orthonormal()
    coef, *_ = np.linalg.lstsq(J, resid, rcond=None)
    assert np.linalg.norm(J @ coef - resid) < 1e-10 * max(1.0, np.linalg.norm(resid))
    assert abs(np.dot(p.orthonormal(), resid)) < 1e-10 * max(1.0, f.norm() ** 2)


def test_ker_iota_rank_zero_and_zero_covector():
    P = ta.ker_iota_projector(np.array([1.0, 2.0]), 0)
    np.testing.assert_array_equal(P, np.ones((1, 1)))
    with pytest.raises(PreconditionError):
        ta.ker_iota_projector(np.zeros(3), 2)


def test_j_xi_and_iota_are_adjoint():
    rng = np.random.default_rng(3)
    xi = rng.standard_normal(3)
    for m in range(1, 4):
        # <S(xi (x) p), f> = <p, iota_xi f>
        np.testing.assert_allclose(ta.j_xi_matrix(xi, m).T, ta.iota_matrix(xi, m), atol=1e-12)


def test_shape_errors():
    with pytest.raises(ShapeError):
        SymTensor(3, 2, np.zeros(5))
    with pytest.raises(ValueError):
        SymTensor(2, 1, np.array([np.nan, 0.0]))
    with pytest.raises(ShapeError):
        SymTensor.from_full(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ShapeError):
        ta.symmetrize(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        SymTensor.random(2, 1, np.random.default_rng(0)) + SymTensor.random(3, 1, np.random.default_rng(0))


@pytest.mark.parametrize("n,m", [(2, 3), (3, 2), (4, 3)])
def test_full_round_trip(n, m):
    f = SymTensor.random(n, m, np.random.default_rng(0))
    full = f.full()
    for K in itertools.product(range(n), repeat=m):
        assert full[K] == full[tuple(sorted(K))]
    assert SymTensor.from_full(full).allclose(f)


def test_symmetric_product_of_vectors():
    rng = np.random.default_rng(1)
    a, b = random_unit(rng, 2, 3)
    p = ta.symmetric_product(SymTensor(3, 1, a), SymTensor(3, 1, b))
    np.testing.assert_allclose(p.full(), 0.5 * (np.outer(a, b) + np.outer(b, a)), atol=1e-14)
