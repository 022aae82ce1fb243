import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censored_areal.correlation import (SpatialSpec, SpatialStructure, TemporalSpec, ar_autocorrelation,
                                        ar_correlation, ar_innovation, assemble_precision,
                                        coefficients_to_matrix, dagar_innovation, is_stationary,
                                        sar_innovation, st_coefficients)
from censored_areal.errors import NonStationary, RhoOutOfRange
from censored_areal.graph import path_graph, random_connected_graph

from oracles import dagar_precision, lyapunov_acf


def test_ar_innovation_examples():
    B = ar_innovation(TemporalSpec((0.7,), 3)).B
    np.testing.assert_allclose(np.diag(B, -1), [0.7, 0.7])
    B = ar_innovation(TemporalSpec((0.5, 0.2), 4)).B
    assert B[2, 0] == pytest.approx(0.2) and B[2, 1] == pytest.approx(0.5)
    with pytest.raises(NonStationary):
        ar_innovation(TemporalSpec((1.0,), 3))


def test_ar_autocorrelation_examples():
    np.testing.assert_allclose(ar_correlation(TemporalSpec((0.0,), 4)), np.eye(4))
    np.testing.assert_allclose(ar_autocorrelation((0.7,), 2), [1, 0.7, 0.49])
    np.testing.assert_allclose(ar_autocorrelation((0.5, 0.2), 2), [1, 0.625, 0.5125])


@settings(max_examples=80, deadline=None)
@given(g1=st.floats(-0.95, 0.95), g2=st.floats(-0.95, 0.95), lag=st.integers(1, 12))
def test_ar_acf_matches_lyapunov(g1, g2, lag):
    gamma = np.array([g1, g2])
    if not is_stationary(gamma) or abs(g2) > 0.9 or abs(g1) + abs(g2) > 0.98:
        return
    np.testing.assert_allclose(ar_autocorrelation(gamma, lag), lyapunov_acf(gamma, lag), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(g=st.floats(0.0, 0.95), T=st.integers(1, 8))
def test_ar_innovation_inverts_toeplitz(g, T):
    pair = ar_innovation(TemporalSpec((g,), T))
    np.testing.assert_allclose(pair.precision() @ ar_correlation(TemporalSpec((g,), T)), np.eye(T), atol=1e-10)


def test_sar_examples():
    g = path_graph(2)
    np.testing.assert_allclose(sar_innovation(g, SpatialSpec("sar", 0.0)).B, 0)
    G = sar_innovation(g, SpatialSpec("sar", 0.5)).covariance()
    np.testing.assert_allclose(G, np.array([[1.25, 1], [1, 1.25]]) / 0.5625, atol=1e-12)
    with pytest.raises(RhoOutOfRange):
        sar_innovation(g, SpatialSpec("sar", 1.0))


def test_dagar_examples():
    G = dagar_innovation(path_graph(2), None, SpatialSpec("dagar", 0.5)).covariance()
    np.testing.assert_allclose(G, [[1, 0.5], [0.5, 1]], atol=1e-12)
    G3 = dagar_innovation(path_graph(3), None, SpatialSpec("dagar", 0.5)).covariance()
    np.testing.assert_allclose(np.diag(G3), 1.0, atol=1e-12)
    pair = dagar_innovation(path_graph(3), None, SpatialSpec("dagar", 1e-9))
    np.testing.assert_allclose(pair.covariance(), np.eye(3), atol=1e-8)
    with pytest.raises(RhoOutOfRange):
        dagar_innovation(path_graph(2), None, SpatialSpec("dagar", 1.0))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 999), rho=st.floats(0.0, 0.95))
def test_dagar_matches_formula(n, seed, rho):
    g = random_connected_graph(n, np.random.default_rng(seed))
    s = SpatialStructure(g, "dagar")
    np.testing.assert_allclose(s.innovation(rho).precision(), dagar_precision(s.A, rho), atol=1e-12)


def test_assemble_precision_examples():
    ind_s = SpatialStructure(path_graph(2), "dagar").innovation(0.0)
    ind_t = ar_innovation(TemporalSpec((0.0,), 3))
    np.testing.assert_allclose(assemble_precision(ind_s, ind_t, 1.0).dense(), np.eye(6))
    s = SpatialStructure(path_graph(2), "dagar")
    pf = assemble_precision(s.innovation(0.5), ar_innovation(TemporalSpec((0.7,), 2)), 2.0)
    C = 2.0 * np.kron(s.correlation(0.5), ar_correlation(TemporalSpec((0.7,), 2)))
    np.testing.assert_allclose(pf.dense(), np.linalg.inv(C), rtol=1e-10)
    s = SpatialStructure(path_graph(3), "sar")
    pf = assemble_precision(s.innovation(0.4), ar_innovation(TemporalSpec((0.5, 0.2), 3)), 1.0)
    C = np.kron(s.correlation(0.4), ar_correlation(TemporalSpec((0.5, 0.2), 3)))
    np.testing.assert_allclose(pf.dense() @ C, np.eye(9), atol=1e-10)
    assert pf.logdet_Q == pytest.approx(-np.linalg.slogdet(C)[1], abs=1e-10)
    assert pf.factor_logdet() == pytest.approx(pf.logdet_Q, abs=1e-10)


@pytest.mark.parametrize("kind", ["dagar", "sar"])
def test_coefficient_classes(kind):
    sp = SpatialStructure(path_graph(2), kind).innovation(0.5)
    tp = ar_innovation(TemporalSpec((0.7,), 2))
    tab = st_coefficients(sp, tp)
    assert tab.select("B").max() == pytest.approx(0.5)
    assert tab.select("C").min() == pytest.approx(-0.35)
    ind = st_coefficients(SpatialStructure(path_graph(2), "dagar").innovation(0.0), tp)
    assert set(ind.klass[ind.value != 0]) == {"A"}


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 5), T=st.integers(1, 5), seed=st.integers(0, 999), rho=st.floats(0.05, 0.9),
       g=st.floats(0.0, 0.9))
def test_coefficient_table_reassembles_B(n, T, seed, rho, g):
    gr = random_connected_graph(n, np.random.default_rng(seed))
    sp = SpatialStructure(gr, "dagar").innovation(rho)
    tp = ar_innovation(TemporalSpec((g,), T))
    pf = assemble_precision(sp, tp, 1.0)
    np.testing.assert_allclose(coefficients_to_matrix(st_coefficients(sp, tp)), pf.B.toarray(), atol=1e-14)
