import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_unit
from tensortomo import degree_certificates as dc
from tensortomo import slice_ops as so
from tensortomo import spherical_harmonics as sh
from tensortomo import symbol_calculus as sc
from tensortomo.tensor_algebra import PreconditionError, SymTensor

seeds = st.integers(0, 2**32 - 1)


def top_degree_by_sampling(u, top, rng, samples=400):
    """Largest k <= top whose band carries energy, via least squares on samples."""
    x = random_unit(rng, samples, u.n)
    basis = sh.build_basis(u.n, top)
    Y = np.concatenate([basis.evaluate(k, x) for k in range(top + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(Y, u.evaluate(x), rcond=None)
    off = basis.offsets()
    e = [np.sum(np.abs(coef[off[k] : off[k + 1]]) ** 2) for k in range(top + 1)]
    total = sum(e)
    return max(k for k in range(top + 1) if e[k] > 1e-9 * total)


def test_low_discrepancy_directions_are_fixed_unit_vectors():
    d = dc.low_discrepancy_directions(4)
    assert d.shape == (dc.LOW_DISCREPANCY_SIZE, 4)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    np.testing.assert_array_equal(d, dc.low_discrepancy_directions(4))


def test_candidate_directions_order():
    c = list(dc.candidate_directions(3, budget=250, seed=1))
    assert len(c) == 250
    np.testing.assert_array_equal(np.array(c[:200]), dc.low_discrepancy_directions(3))
    again = list(dc.candidate_directions(3, budget=250, seed=1))
    np.testing.assert_array_equal(np.array(c), np.array(again))


@settings(max_examples=10)
@given(st.integers(3, 4), st.integers(0, 3), seeds)
def test_restriction_lemma_witness(n, m, seed):
    rng = np.random.default_rng(seed)
    W = sh.SphereFunction.random(sh.build_basis(n, m + 2), rng, bands=[int(rng.integers(0, m + 1)), m + 1 + int(rng.integers(0, 2))])
    res = dc.check_restriction_lemma(W, m)
    assert res.status == "witness" and res.degree >= m + 1
    # the witness is re-checked by sampling the restriction pointwise
    fr = so.frame(res.xi)
    R = so.restrict(W, fr)
    assert top_degree_by_sampling(R, m + 2, rng) >= m + 1


@pytest.mark.parametrize("n,m", [(3, 0), (3, 2), (4, 1)])
def test_restriction_lemma_bounded(n, m):
    rng = np.random.default_rng(m)
    W = sh.SphereFunction.random(sh.build_basis(n, m), rng, bands=[m])
    assert dc.check_restriction_lemma(W, m).status == "bounded"


@settings(max_examples=10)
@given(st.integers(3, 4), st.integers(0, 3), seeds)
def test_differentiated_restriction_witness(n, m, seed):
    rng = np.random.default_rng(seed)
    W = sh.SphereFunction.random(sh.build_basis(n, m + 1), rng, bands=[m + 1])
    res = dc.find_diff_restriction_witness(W, m)
    d = so.differentiated_restrict(W, so.frame(res.xi))
    assert sh.degree(d) >= m and d.norm_sq() > 0


@settings(max_examples=10)
@given(st.integers(3, 4), st.integers(0, 3), seeds)
def test_extension_lemma(n, m, seed):
    rng = np.random.default_rng(seed)
    f = sh.SphereFunction.random(sh.build_basis(n - 1, m + 2), rng, bands=[m + 1 + int(rng.integers(0, 2))])
    assert dc.check_extension_lemma(f, m, so.frame(rng.standard_normal(n)))


def test_extension_lemma_precondition():
    f = sh.constant(sh.build_basis(2, 1))
    with pytest.raises(PreconditionError):
        dc.check_extension_lemma(f, 1, so.frame(np.ones(3)))


def test_two_dimensional_input_refused():
    W = sh.SphereFunction.random(sh.build_basis(2, 3), np.random.default_rng(0), bands=[3])
    with pytest.raises(PreconditionError):
        dc.check_restriction_lemma(W, 1)
    with pytest.raises(PreconditionError):
        dc.metric_certificate(W, 1)


@given(st.integers(2, 4), st.integers(1, 3), seeds)
def test_find_multiplier_raises_degree(n, k, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(0, 3))
    W = sh.SphereFunction.random(sh.build_basis(n, m), rng, bands=[m])
    res = dc.find_multiplier(W, k, m)
    assert res.tensor.m == k
    prod = sh.multiply(sh.pullback_m(res.tensor, sh.build_basis(n, m + k)), W.rebase(m + k))
    assert sh.degree(prod) == m + k


def _random_v(mode, n, m, rng):
    basis = sh.build_basis(n, m + 2)
    bands = [m + 1, m + 2]
    if mode == "connection":
        return sh.SphereFunction.random(basis, rng, bands=bands, channels=(2,), complex_=True)
    if mode == "endomorphism":
        V = sh.SphereFunction.random(basis, rng, bands=bands, channels=(2, 2), complex_=True)
        return V.map_channels(lambda b: b - np.trace(b, axis1=1, axis2=2)[:, None, None] * np.eye(2) / 2)
    return sh.SphereFunction.random(basis, rng, bands=bands)


CERTIFIERS = {"connection": dc.connection_certificate, "endomorphism": dc.endomorphism_certificate, "metric": dc.metric_certificate}


@settings(max_examples=6)
@given(st.sampled_from(sorted(CERTIFIERS)), st.integers(0, 2), seeds)
def test_certificates_give_positive_gap(mode, m, seed):
    rng = np.random.default_rng(seed)
    V = _random_v(mode, 3, m, rng)
    cert = CERTIFIERS[mode](V, m)
    assert cert.achieved_degree >= m + 1
    assert dc.revalidate(cert, V) >= m + 1
    # the gap is recomputed from the stored multiplier by the symbol layer
    gap = sc.variational_gap([V], cert.xi, cert.multiplier, m, mode)
    assert gap == pytest.approx(cert.gap, rel=1e-9)
    total, _ = sc.variational_terms([V], cert.xi, cert.multiplier, m, mode)
    assert gap > 1e-6 * total


def test_endomorphism_diagonal_branch():
    rng = np.random.default_rng(3)
    w = sh.SphereFunction.random(sh.build_basis(3, 2), rng, bands=[2])
    V = w.map_channels(lambda b: np.einsum("k,ab->kab", b, np.diag([1.0, -1.0])))
    cert = dc.endomorphism_certificate(V, 1)
    assert cert.branch.startswith("diagonal")
    assert cert.achieved_degree >= 2


def test_endomorphism_requires_trace_free():
    V = sh.SphereFunction.random(sh.build_basis(3, 2), np.random.default_rng(0), bands=[2], channels=(2, 2))
    V = V.map_channels(lambda b: b + np.trace(b, axis1=1, axis2=2)[:, None, None] * np.eye(2))
    with pytest.raises(PreconditionError):
        dc.endomorphism_certificate(V, 1)


def test_metric_multiplier_lives_on_ker_xi():
    rng = np.random.default_rng(5)
    V = _random_v("metric", 3, 1, rng)
    cert = dc.metric_certificate(V, 1)
    xi = cert.xi
    np.testing.assert_allclose(cert.multiplier.full() @ xi, 0.0, atol=1e-12)
    assert isinstance(cert.multiplier, SymTensor) and cert.multiplier.m == 2


def test_certificate_json_round_trip():
    rng = np.random.default_rng(9)
    for mode in CERTIFIERS:
        V = _random_v(mode, 3, 1, rng)
        cert = CERTIFIERS[mode](V, 1)
        back = dc.Certificate.from_record(json.loads(cert.to_json()))
        assert back.to_json() == cert.to_json()
        assert dc.revalidate(back, V) == dc.revalidate(cert, V)


def test_search_is_deterministic_across_workers():
    rng = np.random.default_rng(11)
    V = _random_v("connection", 3, 2, rng)
    a = dc.connection_certificate(V, 2, seed=4, workers=1)
    b = dc.connection_certificate(V, 2, seed=4, workers=4)
    assert a.to_json() == b.to_json()


def test_precondition_on_low_degree_v():
    V = sh.SphereFunction.random(sh.build_basis(3, 1), np.random.default_rng(0), bands=[1], channels=(2,), complex_=True)
    with pytest.raises(PreconditionError):
        dc.connection_certificate(V, 1)


def test_n2_degeneracy():
    rep = dc.n2_degeneracy_check(trials=60, seed=3)
    assert rep.passed
    assert rep.max_gap <= 1e-9
    assert rep.max_excess_degree <= 0
