"""Model comparison, convergence and exploratory statistics.

Deviance criteria use the data-augmentation deviance
``D(theta) = -2 log N(y_full; X beta, sigma2 S_psi)`` where ``y_full`` holds
the observed values and the draw's own imputations. With ``k`` counting
``n_coef + 3 + p`` parameters (coefficients, sigma2, rho, psi, AR terms):

* ``DIC = D_bar + p_D`` with ``p_D = D_bar - D(theta_bar)``
* ``EAIC = D_bar + 2 k`` and ``EBIC = D_bar + k log N``

``theta_bar`` plugs in posterior means of every parameter and of every
imputed value. The holdout ELPD is the sum over test cells of the log of
the draw-averaged predictive density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .correlation import _durbin_levinson
from .data import CensoredDataset
from .errors import ConfigError, TooFewChains, ZeroVariance
from .graph import SpatialGraph
from .inference import ChainResult, FitProblem, ModelConfig

__all__ = [
    "CriteriaReport",
    "ConvergenceReport",
    "deviance",
    "deviance_criteria",
    "elpd_holdout",
    "gelman_rubin",
    "convergence_report",
    "morans_i",
    "acf",
    "acf_pacf",
]


@dataclass(frozen=True)
class CriteriaReport:
    dic: float
    eaic: float
    ebic: float
    p_d: float
    d_bar: float
    d_hat: float
    k: int
    N: int
    elpd: float | None = None

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class ConvergenceReport:
    rhat: dict
    rhat_upper: dict
    accept_rate: list
    chain_acf: dict

    def as_dict(self) -> dict:
        return {"rhat": self.rhat, "rhat_upper": self.rhat_upper,
                "accept_rate": self.accept_rate, "chain_acf": self.chain_acf}


def deviance(problem: FitProblem, beta, sigma2, rho, psi, gamma, y_full) -> float:
    op = problem.model.operator(rho, psi, gamma)
    r = np.asarray(y_full) - problem.X @ np.asarray(beta)
    quad = float(r @ op.solve(r)) / sigma2
    return problem.N * math.log(2 * math.pi * sigma2) + op.logdet + quad


def _y_full(problem: FitProblem, ch: ChainResult, s: int) -> np.ndarray:
    y = problem.ds.y.copy()
    cen = problem.part.cen_idx
    if cen.size:
        if ch.y_cen is None:
            raise ConfigError("chains lack imputations; deviance needs them when cells are censored")
        y[cen] = ch.y_cen[s]
    return y


def deviance_criteria(chains: list[ChainResult], ds: CensoredDataset, graph: SpatialGraph,
                      model_cfg: ModelConfig | dict) -> CriteriaReport:
    if not chains:
        raise ConfigError("no chains supplied")
    if not isinstance(model_cfg, ModelConfig):
        model_cfg = ModelConfig.from_dict(model_cfg)
    problem = FitProblem(ds, graph, model_cfg)
    devs = []
    for ch in chains:
        for s in range(ch.n_draws):
            devs.append(deviance(problem, ch.beta[s], ch.sigma2[s], ch.rho[s], ch.psi[s],
                                 tuple(ch.gamma[s]), _y_full(problem, ch, s)))
    d_bar = float(np.mean(devs))
    beta = np.vstack([c.beta for c in chains]).mean(axis=0)
    sigma2 = float(np.concatenate([c.sigma2 for c in chains]).mean())
    rho = float(np.concatenate([c.rho for c in chains]).mean())
    psi = float(np.concatenate([c.psi for c in chains]).mean())
    gamma = tuple(np.vstack([c.gamma for c in chains]).mean(axis=0))
    y = problem.ds.y.copy()
    cen = problem.part.cen_idx
    if cen.size:
        y[cen] = np.vstack([c.y_cen for c in chains]).mean(axis=0)
    d_hat = deviance(problem, beta, sigma2, rho, psi, gamma, y)
    k = ds.n_coef + 3 + model_cfg.p
    N = ds.N
    p_d = d_bar - d_hat
    return CriteriaReport(d_bar + p_d, d_bar + 2 * k, d_bar + k * math.log(N), p_d, d_bar, d_hat, k, N)


def elpd_holdout(cond_mean: np.ndarray, cond_var: np.ndarray, y_test: np.ndarray) -> float:
    """Sum over test cells of ``log mean_s N(y; mu_s, v_s)``; NaN test values are skipped."""
    mu = np.atleast_2d(cond_mean)
    v = np.atleast_2d(cond_var)
    y = np.asarray(y_test, dtype=float)
    keep = np.isfinite(y)
    if not keep.any():
        raise ConfigError("no observed test values")
    mu, v, y = mu[:, keep], v[:, keep], y[keep]
    logdens = -0.5 * (np.log(2 * np.pi * v) + (y - mu) ** 2 / v)
    return float(np.sum(logsumexp(logdens, axis=0) - math.log(mu.shape[0])))


def gelman_rubin(chains, param: str | None = None, split: bool = True,
                 confidence: float = 0.95) -> tuple[float, float]:
    """Potential scale reduction factor and its upper confidence bound.

    ``chains`` is a list of :class:`ChainResult` (then ``param`` names the
    column) or of 1-d arrays. With ``split`` every chain is cut into two
    halves first. Follows the classic df-corrected estimator: for identical
    chains the point value is ``sqrt((n - 1) / n)``.
    """
    series = [np.asarray(c.column(param) if isinstance(c, ChainResult) else c, dtype=float) for c in chains]
    if len(series) < 2:
        raise TooFewChains("need at least two chains")
    n = min(len(s) for s in series)
    if any(len(s) != n for s in series):
        raise ConfigError("chains must have equal retained lengths")
    if split:
        h = n // 2
        series = [part for s in series for part in (s[:h], s[n - h:])]
        n = h
    if n < 2:
        raise ConfigError("chains are too short")
    x = np.array(series)
    m = x.shape[0]
    s2 = x.var(axis=1, ddof=1)
    xbar = x.mean(axis=1)
    w = s2.mean()
    b = n * xbar.var(ddof=1)
    if w <= 0:
        raise ZeroVariance(f"chains for {param or 'series'} have zero within-chain variance")
    muhat = xbar.mean()
    var_w = s2.var(ddof=1) / m
    var_b = 2 * b * b / (m - 1)
    cov_wb = (n / m) * (np.cov(s2, xbar ** 2)[0, 1] - 2 * muhat * np.cov(s2, xbar)[0, 1])
    V = (n - 1) * w / n + (1 + 1 / m) * b / n
    var_V = ((n - 1) ** 2 * var_w + (1 + 1 / m) ** 2 * var_b
             + 2 * (n - 1) * (1 + 1 / m) * cov_wb) / n ** 2
    df_adj = 1.0 if var_V <= 0 else ((2 * V * V / var_V) + 3) / ((2 * V * V / var_V) + 1)
    r_fixed = (n - 1) / n
    r_random = (1 + 1 / m) * (1 / n) * (b / w)
    q = (1 + confidence) / 2
    if var_w > 0:
        fq = stats.f.ppf(q, m - 1, 2 * w * w / var_w)
    else:
        fq = stats.chi2.ppf(q, m - 1) / (m - 1)
    point = math.sqrt(df_adj * (r_fixed + r_random))
    upper = math.sqrt(df_adj * (r_fixed + fq * r_random))
    return point, upper


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (biased, divisor ``n``)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ConfigError("series must be longer than max_lag")
    d = x - x.mean()
    c0 = float(d @ d) / n
    if c0 == 0:
        raise ZeroVariance("constant series")
    return np.array([float(d[: n - k] @ d[k:]) / n / c0 for k in range(max_lag + 1)])


def acf_pacf(series, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ACF and PACF at lags ``1..max_lag``; PACF via Durbin-Levinson."""
    r = acf(series, max_lag)
    coefs, _ = _durbin_levinson(r, max_lag)
    pacf = np.array([coefs[k][k - 1] for k in range(1, max_lag + 1)])
    return r[1:], pacf


def convergence_report(chains: list[ChainResult], max_lag: int = 20) -> ConvergenceReport:
    names = chains[0].param_names()
    rhat, upper, chain_acf = {}, {}, {}
    for name in names:
        cols = [c.column(name) for c in chains]
        if any(np.ptp(v) == 0 for v in cols):
            continue  # fixed parameter
        if len(chains) >= 2:
            rhat[name], upper[name] = gelman_rubin(cols)
        lag = min(max_lag, len(cols[0]) - 1)
        chain_acf[name] = [acf(v, lag)[1:].tolist() for v in cols]
    return ConvergenceReport(rhat, upper, [float(c.accept_rate) for c in chains], chain_acf)


def morans_i(values, A, permutations: int = 999, rng: np.random.Generator | None = None):
    """Moran's I and a folded permutation p-value.

    ``p = (min(#{I_perm >= I}, permutations - #{I_perm >= I}) + 1) / (permutations + 1)``.
    """
    y = np.asarray(values, dtype=float)
    A = np.asarray(A, dtype=float)
    n = y.size
    if n < 3:
        raise ConfigError("Moran's I needs at least three regions")
    if A.shape != (n, n):
        raise ConfigError("proximity matrix does not match the number of values")
    if not np.allclose(A, A.T):
        raise ConfigError("proximity matrix must be symmetric")
    s0 = A.sum()
    if s0 == 0:
        raise ConfigError("proximity matrix has no links")
    z = y - y.mean()
    den = float(z @ z)
    if den == 0:
        raise ZeroVariance("all values are equal")
    scale = n / s0 / den
    stat = float(scale * (z @ A @ z))
    if permutations <= 0:
        return stat, float("nan")
    if rng is None:
        rng = np.random.default_rng(0)
    Z = np.array([rng.permutation(z) for _ in range(permutations)])
    sims = scale * np.einsum("ij,jk,ik->i", Z, A, Z)
    larger = int(np.sum(sims >= stat))
    if permutations - larger < larger:
        larger = permutations - larger
    return stat, (larger + 1) / (permutations + 1)
