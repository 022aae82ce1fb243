import numpy as np
import pytest

from censored_areal.correlation import SpatialStructure
from censored_areal.covariance import SeparableModel
from censored_areal.errors import ConfigError, DimensionMismatch
from censored_areal.graph import path_graph, random_connected_graph
from censored_areal.inference import FitProblem, ModelConfig, ParameterState, conditional_blocks
from censored_areal.prediction import PredictionTask, extend_structures, predictive_draws, write_predictions

from conftest import make_chain, make_dataset


def _dense_conditional(g, T, h, beta, s2, rho, psi, gamma, X, Xp, y):
    model = SeparableModel(SpatialStructure(g, "dagar"), len(gamma), T + h)
    S = s2 * (np.kron(model.spatial_correlation(rho), model.temporal_correlation(gamma)) + psi * np.eye(g.n * (T + h)))
    idx = np.arange(g.n * (T + h)).reshape(g.n, T + h)
    o, f = idx[:, :T].reshape(-1), idx[:, T:].reshape(-1)
    Soo, Sfo, Sff = S[np.ix_(o, o)], S[np.ix_(f, o)], S[np.ix_(f, f)]
    mu = Xp @ beta + Sfo @ np.linalg.solve(Soo, y - X @ beta)
    return mu, Sff - Sfo @ np.linalg.solve(Soo, Sfo.T)


@pytest.mark.parametrize("n,T,h,gamma", [(1, 5, 2, (0.6,)), (3, 4, 3, (0.5, 0.2))])
def test_matches_dense_conditioning(n, T, h, gamma):
    rng = np.random.default_rng(n)
    g = random_connected_graph(n, rng) if n > 1 else path_graph(1)
    X = np.column_stack([np.ones(n * T), rng.normal(size=n * T)])
    Xp = np.column_stack([np.ones(n * h), rng.normal(size=n * h)])
    y = rng.normal(size=n * T)
    beta, s2, rho, psi = np.array([0.3, -0.7]), 1.4, 0.55, 0.2
    ds = make_dataset(y, n, T, X=X)
    ch = make_chain(beta, s2, psi, rho, gamma, draws=400)
    pred = predictive_draws([ch], PredictionTask(h, Xp), ds, g, {"p": len(gamma)}, rng)
    mu, C = _dense_conditional(g, T, h, beta, s2, rho, psi, gamma, X, Xp, y)
    np.testing.assert_allclose(pred.cond_mean[0], mu, atol=1e-10)
    np.testing.assert_allclose(pred.cond_var[0], np.diag(C), atol=1e-10)
    # sample moments of the 400 draws agree with the conditional law
    z = (pred.draws - mu) / np.sqrt(np.diag(C))
    m = z.shape[0]
    assert np.all(np.abs(z.mean(axis=0)) < 4 / np.sqrt(m))
    assert np.all(np.abs(z.var(axis=0) - 1) < 4 * np.sqrt(2 / m))


def test_independence_gives_marginal_moments():
    g = path_graph(2)
    T, h = 3, 2
    ds = make_dataset(np.arange(6.0), 2, T)
    Xp = np.ones((4, 1))
    ch = make_chain([1.5], 2.0, 0.5, 0.0, 0.0)
    pred = predictive_draws([ch], PredictionTask(h, Xp), ds, g, {}, np.random.default_rng(0))
    np.testing.assert_allclose(pred.cond_mean[0], 1.5)
    np.testing.assert_allclose(pred.cond_var[0], 2.0 * 1.5)


def test_missing_tail_agrees_with_imputation_conditional():
    rng = np.random.default_rng(5)
    g = random_connected_graph(3, rng)
    T = 4
    y_full = rng.normal(size=3 * (T + 1)).reshape(3, T + 1)
    st = np.zeros((3, T + 1), dtype=int)
    st[:, T] = 4
    y = np.where(st == 4, np.nan, y_full).reshape(-1)
    lo = np.where(st.reshape(-1) == 4, -np.inf, y)
    hi = np.where(st.reshape(-1) == 4, np.inf, y)
    long = make_dataset(y, 3, T + 1, status=st.reshape(-1), lower=lo, upper=hi)
    problem = FitProblem(long, g, ModelConfig())
    state = ParameterState(np.array([0.2]), 1.3, 1.3 * 0.4, 0.4, 0.7, (0.5,), np.zeros(3))
    mu_c, Sigma = conditional_blocks(state, problem.part, problem)
    short = make_dataset(y_full[:, :T].reshape(-1), 3, T)
    ch = make_chain([0.2], 1.3, 0.4, 0.7, 0.5)
    pred = predictive_draws([ch], PredictionTask(1, np.ones((3, 1))), short, g, {}, rng)
    np.testing.assert_allclose(pred.cond_mean[0], mu_c, atol=1e-10)
    np.testing.assert_allclose(pred.cond_var[0], np.diag(Sigma), atol=1e-10)


def test_task_validation_and_summary_order(tmp_path):
    with pytest.raises(ConfigError):
        PredictionTask(0, np.ones((1, 1)))
    g = path_graph(2)
    ds = make_dataset(np.arange(6.0), 2, 3)
    ch = make_chain([1.0], 1.0, 0.3, 0.5, 0.4, draws=50)
    with pytest.raises(DimensionMismatch):
        predictive_draws([ch], PredictionTask(2, np.ones((3, 1))), ds, g, {}, np.random.default_rng(0))
    pred = predictive_draws([ch], PredictionTask(2, np.ones((2, 1)), sites=(1,)), ds, g, {},
                            np.random.default_rng(0))
    sm = pred.summary
    assert pred.draws.shape == (50, 2)
    assert np.all(sm.q025 <= sm.median) and np.all(sm.median <= sm.q975)
    path = tmp_path / "p.csv"
    write_predictions(pred, path, ds.site_labels, [4, 5], observed=np.array([1.0, np.nan]))
    lines = path.read_text().splitlines()
    assert lines[0] == "site,time_index,mean,median,q025,q975,observed"
    assert lines[1].startswith("2,4,") and lines[2].endswith(",")


def test_extend_structures_blocks():
    g = path_graph(2)
    model = SeparableModel(SpatialStructure(g, "dagar"), 1, 3)
    b = extend_structures(model, 2, 0.5, 0.1, (0.3,))
    big = SeparableModel(SpatialStructure(g, "dagar"), 1, 5)
    full = np.kron(big.spatial_correlation(0.5), big.temporal_correlation((0.3,))) + 0.1 * np.eye(10)
    o = [0, 1, 2, 5, 6, 7]
    f = [3, 4, 8, 9]
    np.testing.assert_allclose(b.oo, full[np.ix_(o, o)])
    np.testing.assert_allclose(b.op, full[np.ix_(o, f)])
    np.testing.assert_allclose(b.pp, full[np.ix_(f, f)])
