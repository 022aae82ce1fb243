"""Posterior predictive draws for future times at existing sites.

For each stored draw ``(theta, y_c)`` the training panel ``y_obs`` (observed
plus that draw's imputations) and the future cells are jointly Gaussian
under the separable model extended to ``T + horizon`` times; one future
vector is drawn from the conditional normal of the future cells given
``y_obs``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import SeparableModel
from .data import CensoredDataset
from .errors import ConfigError, DimensionMismatch
from .inference import ChainResult, FitProblem, ModelConfig
from .graph import SpatialGraph

__all__ = [
    "PredictionTask",
    "PredictiveSummary",
    "PredictiveDraws",
    "ExtendedBlocks",
    "extend_structures",
    "predictive_draws",
    "write_predictions",
]


@dataclass(frozen=True)
class PredictionTask:
    """Forecast ``horizon`` steps past the training panel at ``sites``.

    ``X_pred`` rows are site-major over ``(site, step)`` pairs.
    """

    horizon: int
    X_pred: np.ndarray
    sites: tuple | None = None

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, np.integer)) and self.horizon >= 1):
            raise ConfigError("horizon must be a positive integer")
        X = np.atleast_2d(np.asarray(self.X_pred, dtype=float))
        object.__setattr__(self, "X_pred", X)
        if self.sites is not None:
            object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))

    def site_list(self, n: int) -> np.ndarray:
        return np.arange(n) if self.sites is None else np.array(self.sites, dtype=int)


@dataclass(frozen=True)
class PredictiveSummary:
    mean: np.ndarray
    median: np.ndarray
    q025: np.ndarray
    q975: np.ndarray

    @classmethod
    def from_draws(cls, draws: np.ndarray) -> "PredictiveSummary":
        q = np.quantile(draws, [0.025, 0.5, 0.975], axis=0)
        return cls(draws.mean(axis=0), q[1], q[0], q[2])


@dataclass(frozen=True)
class PredictiveDraws:
    """One row per posterior draw.

    ``cond_mean`` / ``cond_var`` are the per-draw conditional moments, kept
    for density-based scores.
    """

    draws: np.ndarray
    cond_mean: np.ndarray
    cond_var: np.ndarray
    summary: PredictiveSummary
    sites: np.ndarray
    horizon: int


@dataclass(frozen=True)
class ExtendedBlocks:
    """Unit-scale blocks of ``kron(Gamma, Phi*) + psi I`` over training and future cells."""

    oo: np.ndarray
    op: np.ndarray
    pp: np.ndarray


def _temporal_blocks(model: SeparableModel, gamma, horizon: int):
    T = model.T
    Phi = model.temporal_correlation(gamma, T + horizon)
    return Phi[T:, :T], Phi[T:, T:]


def extend_structures(model: SeparableModel, horizon: int, rho: float, psi: float, gamma,
                      sites=None) -> ExtendedBlocks:
    """Dense blocks of the joint covariance (divided by ``sigma2``)."""
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    sites = np.arange(model.n) if sites is None else np.asarray(sites, dtype=int)
    G = model.spatial_correlation(rho)
    Phi = model.temporal_correlation(gamma, model.T + horizon)
    T = model.T
    oo = np.kron(G, Phi[:T, :T]) + psi * np.eye(model.N)
    op = np.kron(G[:, sites], Phi[:T, T:])
    pp = np.kron(G[np.ix_(sites, sites)], Phi[T:, T:]) + psi * np.eye(sites.size * horizon)
    return ExtendedBlocks(oo, op, pp)


def _robust_factor(C: np.ndarray) -> np.ndarray:
    C = 0.5 * (C + C.T)
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(C)
        return U * np.sqrt(np.clip(w, 0.0, None))


def predictive_draws(chains: list[ChainResult], task: PredictionTask, ds: CensoredDataset,
                     graph: SpatialGraph, model_cfg: ModelConfig | dict,
                     rng: np.random.Generator) -> PredictiveDraws:
    """Composition sampling of the future cells, one draw per stored posterior draw."""
    if not chains:
        raise ConfigError("no chains supplied")
    if not isinstance(model_cfg, ModelConfig):
        model_cfg = ModelConfig.from_dict(model_cfg)
    problem = FitProblem(ds, graph, model_cfg)
    model = problem.model
    h = task.horizon
    sites = task.site_list(ds.n)
    n_pred = sites.size * h
    if task.X_pred.shape != (n_pred, ds.n_coef):
        raise DimensionMismatch(f"X_pred must be {n_pred} x {ds.n_coef}, got {task.X_pred.shape}")
    cen = problem.part.cen_idx
    cache: dict = {}
    rows_mean, rows_var, rows_draw = [], [], []
    for ch in chains:
        if cen.size and (ch.y_cen is None or not np.array_equal(ch.cen_idx, cen)):
            raise ConfigError("chains lack imputations for this dataset's censored cells")
        for s in range(ch.n_draws):
            rho, psi = float(ch.rho[s]), float(ch.psi[s])
            gamma = tuple(float(g) for g in ch.gamma[s])
            sigma2 = float(ch.sigma2[s])
            beta = ch.beta[s]
            key = tuple(np.round([rho, psi, *gamma], 12))
            if key not in cache:
                op = model.operator(rho, psi, gamma)
                G = model.spatial_correlation(rho)
                Phi_po, Phi_pp = _temporal_blocks(model, gamma, h)
                # cross-covariance (future x training), unit scale
                C = np.kron(G[sites], Phi_po)
                SinvCt = op.solve(C.T)
                cond = np.kron(G[np.ix_(sites, sites)], Phi_pp) + psi * np.eye(n_pred) - C @ SinvCt
                cache.clear()
                cache[key] = (op, G[sites], Phi_po, _robust_factor(cond), np.clip(np.diag(cond), 0.0, None))
            op, Gs, Phi_po, L, dvar = cache[key]
            y = ds.y.copy()
            if cen.size:
                y[cen] = ch.y_cen[s]
            w = op.solve(y - ds.X @ beta).reshape(ds.n, ds.T)
            mu = task.X_pred @ beta + (Gs @ w @ Phi_po.T).reshape(-1)
            sd = np.sqrt(sigma2)
            rows_mean.append(mu)
            rows_var.append(sigma2 * dvar)
            rows_draw.append(mu + sd * (L @ rng.standard_normal(n_pred)))
    draws = np.array(rows_draw)
    return PredictiveDraws(draws, np.array(rows_mean), np.array(rows_var),
                           PredictiveSummary.from_draws(draws), sites, h)


def write_predictions(pred: PredictiveDraws, path: str | Path, site_labels, time_labels,
                      observed: np.ndarray | None = None) -> None:
    """CSV with ``site, time_index, mean, median, q025, q975`` (and ``observed``)."""
    sm = pred.summary
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        header = ["site", "time_index", "mean", "median", "q025", "q975"]
        if observed is not None:
            header.append("observed")
        w.writerow(header)
        k = 0
        for i in pred.sites:
            for t in range(pred.horizon):
                row = [site_labels[i], time_labels[t], repr(float(sm.mean[k])), repr(float(sm.median[k])),
                       repr(float(sm.q025[k])), repr(float(sm.q975[k]))]
                if observed is not None:
                    row.append("" if np.isnan(observed[k]) else repr(float(observed[k])))
                w.writerow(row)
                k += 1
