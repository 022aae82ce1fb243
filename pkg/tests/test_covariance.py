import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censored_areal.correlation import SpatialStructure
from censored_areal.covariance import SeparableModel
from censored_areal.errors import ConfigError
from censored_areal.graph import random_connected_graph


def dense_S(model, rho, psi, gamma):
    return np.kron(model.spatial_correlation(rho), model.temporal_correlation(gamma)) + psi * np.eye(model.N)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), T=st.integers(1, 6), seed=st.integers(0, 999), kind=st.sampled_from(["dagar", "sar"]),
       rho=st.floats(0.05, 0.9), psi=st.floats(0.01, 2.0), g=st.floats(0.0, 0.9))
def test_backends_agree(n, T, seed, kind, rho, psi, g):
    graph = random_connected_graph(max(n, 2), np.random.default_rng(seed))
    model = SeparableModel(SpatialStructure(graph, kind), 1, T)
    S = dense_S(model, rho, psi, (g,))
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((model.N, 3))
    ref = np.linalg.solve(S, V)
    ref_logdet = np.linalg.slogdet(S)[1]
    idx = np.sort(rng.choice(model.N, size=min(3, model.N), replace=False))
    for backend in ("kron", "sparse", "dense"):
        op = model.operator(rho, psi, (g,), backend)
        np.testing.assert_allclose(op.solve(V), ref, rtol=1e-8, atol=1e-9)
        assert op.logdet == pytest.approx(ref_logdet, abs=1e-8)
        np.testing.assert_allclose(op.inverse_block(idx), np.linalg.inv(S)[np.ix_(idx, idx)], rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(op.matvec(V), S @ V, rtol=1e-8, atol=1e-9)


def test_kron_sqrt_and_dense():
    graph = random_connected_graph(4, np.random.default_rng(3))
    model = SeparableModel(SpatialStructure(graph, "dagar"), 2, 5)
    op = model.operator(0.6, 0.3, (0.4, 0.2))
    S = dense_S(model, 0.6, 0.3, (0.4, 0.2))
    np.testing.assert_allclose(op.dense(), S, atol=1e-12)
    E = np.eye(model.N)
    R = op.sqrt_matvec(E)
    np.testing.assert_allclose(R @ R.T, S, atol=1e-10)


def test_operator_validation():
    graph = random_connected_graph(3, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        SeparableModel(SpatialStructure(graph, "dagar"), 1, 3, backend="cholmod")
    model = SeparableModel(SpatialStructure(graph, "dagar"), 1, 3)
    with pytest.raises(ConfigError):
        model.operator(0.5, 0.0, (0.5,))


def test_eigen_cache_reused():
    graph = random_connected_graph(3, np.random.default_rng(0))
    model = SeparableModel(SpatialStructure(graph, "dagar"), 1, 3, cache=2)
    a = model.spatial_eigen(0.5)
    assert model.spatial_eigen(0.5) is a
    model.spatial_eigen(0.1)
    model.spatial_eigen(0.2)
    assert model.spatial_eigen(0.5) is not a
