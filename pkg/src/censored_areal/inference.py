"""Collapsed posterior and the Metropolis-within-Gibbs sampler.

Model: ``Y = X beta + omega + eps`` with ``omega ~ N(0, sigma2 kron(Gamma, Phi))``
and ``eps ~ N(0, tau2 I)``. Writing ``psi = tau2 / sigma2`` and
``S_psi = kron(Gamma, Phi) + psi I``, the reference prior ``1 / sigma2`` on
``(beta, sigma2)`` integrates out to

    log pi(rho, psi, gamma | y) = -1/2 log|S_psi| + 1/2 log|V| - (N - k)/2 log S2
                                  + log pi(rho) + log pi(psi) + log pi(gamma)

with ``V = inv(X' inv(S_psi) X)``, ``beta_hat = V X' inv(S_psi) y`` and
``S2 = (y - X beta_hat)' inv(S_psi) (y - X beta_hat) / (N - k)``.

Each iteration: (1) independence Metropolis step for ``(rho, psi, gamma)``;
(2) ``sigma2 ~ scaled-inv-chi2(N - k, S2)``, ``tau2 = sigma2 psi``;
(3) ``beta ~ N(beta_hat, sigma2 V)``; (4) censored and missing responses
by coordinate Gibbs scans of their truncated normal conditional.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy import optimize, special

from .correlation import SpatialStructure, is_stationary
from .covariance import BACKENDS, SeparableModel
from .data import CensoredDataset, Partition, partition
from .errors import ConfigError, DataError, NotSPD, NumericalFailure
from .graph import Ordering, SpatialGraph
from .stochastics import RngStream, beta_logpdf, rscaled_inv_chisq, rtmvn_gibbs_precision

__all__ = [
    "PriorSpec",
    "ProposalSpec",
    "ModelConfig",
    "RunConfig",
    "ParameterSpace",
    "ParameterState",
    "CollapsedEval",
    "ChainResult",
    "FitProblem",
    "collapsed_log_posterior",
    "metropolis_update",
    "conditional_blocks",
    "gibbs_fit",
    "run_chain",
    "write_chain",
    "read_chain",
    "summarize",
]


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------

def _from_dict(cls, d: dict | None, what: str):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class PriorSpec:
    a_rho: float = 1.0
    b_rho: float = 1.0
    a_psi: float = 1.0
    b_psi: float = 1.0
    a_gamma: float = 1.0
    b_gamma: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"prior hyperparameter {f.name} must be positive")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "prior")


@dataclass(frozen=True)
class ProposalSpec:
    """Independence proposals on the unit scale of each parameter.

    ``kind="beta"`` uses the fixed Beta hyperparameters below.
    ``kind="laplace"`` replaces them before the chain starts by Beta laws
    moment-matched to a Laplace approximation of the collapsed posterior
    (spread inflated by ``inflate``); with ``recalibrate`` they are refit
    once more at the end of burn-in. Proposals never change after burn-in.
    ``scheme="joint"`` proposes all free parameters together;
    ``"blockwise"`` updates rho, psi and gamma one block at a time.
    """

    kind: str = "beta"
    scheme: str = "joint"
    a_rho: float = 2.0
    b_rho: float = 2.0
    a_psi: float = 2.0
    b_psi: float = 2.0
    a_gamma: float = 2.0
    b_gamma: float = 2.0
    inflate: float = 1.5
    recalibrate: bool = True

    def __post_init__(self):
        if self.kind not in ("beta", "laplace"):
            raise ConfigError(f"proposal kind must be 'beta' or 'laplace', got {self.kind!r}")
        if self.scheme not in ("joint", "blockwise"):
            raise ConfigError(f"proposal scheme must be 'joint' or 'blockwise', got {self.scheme!r}")
        for name in ("a_rho", "b_rho", "a_psi", "b_psi", "a_gamma", "b_gamma", "inflate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"proposal setting {name} must be positive")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "proposal")


@dataclass(frozen=True)
class ModelConfig:
    """Model choice and sampler knobs.

    ``fixed`` pins any of ``rho``, ``psi``, ``gamma`` (a list of length
    ``p``) to a value. ``rho_interval`` and ``gamma_interval`` are the
    supports the unit-scale Beta laws are stretched onto.
    """

    kind: str = "dagar"
    p: int = 1
    prior: PriorSpec = field(default_factory=PriorSpec)
    proposal: ProposalSpec = field(default_factory=ProposalSpec)
    fixed: dict = field(default_factory=dict)
    ordering: tuple | None = None
    raw_adjacency: bool = False
    rho_interval: tuple = (0.0, 1.0)
    gamma_interval: tuple = (0.0, 1.0)
    backend: str = "kron"
    sweeps: int = 5

    def __post_init__(self):
        if self.kind not in ("dagar", "sar"):
            raise ConfigError(f"model kind must be 'dagar' or 'sar', got {self.kind!r}")
        if not (isinstance(self.p, int) and self.p >= 1):
            raise ConfigError("AR order p must be an integer >= 1")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if not (isinstance(self.sweeps, int) and self.sweeps >= 1):
            raise ConfigError("sweeps must be a positive integer")
        unknown = set(self.fixed) - {"rho", "psi", "gamma"}
        if unknown:
            raise ConfigError(f"only rho, psi and gamma can be fixed, got {sorted(unknown)}")
        for name in ("rho_interval", "gamma_interval"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} needs lower < upper")
            object.__setattr__(self, name, (float(lo), float(hi)))
        lo, hi = self.rho_interval
        if self.kind == "dagar" and (lo < 0 or hi > 1):
            raise ConfigError("DAGAR rho_interval must lie inside [0, 1]")
        if self.kind == "sar" and not self.raw_adjacency and (lo < -1 or hi > 1):
            raise ConfigError("SAR rho_interval must lie inside [-1, 1]")
        fixed = dict(self.fixed)
        if "gamma" in fixed:
            g = tuple(float(v) for v in np.atleast_1d(fixed["gamma"]))
            if len(g) != self.p:
                raise ConfigError(f"fixed gamma needs {self.p} values")
            fixed["gamma"] = g
        for key in ("rho", "psi"):
            if key in fixed:
                fixed[key] = float(fixed[key])
        if "psi" in fixed and not 0 < fixed["psi"]:
            raise ConfigError("fixed psi must be positive")
        object.__setattr__(self, "fixed", fixed)
        if self.ordering is not None:
            object.__setattr__(self, "ordering", tuple(int(v) for v in self.ordering))

    @classmethod
    def from_dict(cls, d: dict | None) -> "ModelConfig":
        d = dict(d or {})
        if "prior" in d:
            d["prior"] = PriorSpec.from_dict(d["prior"])
        if "proposal" in d:
            d["proposal"] = ProposalSpec.from_dict(d["proposal"])
        for key in ("rho_interval", "gamma_interval", "ordering"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return _from_dict(cls, d, "model")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixed"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.fixed.items()}
        for key in ("rho_interval", "gamma_interval", "ordering"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


@dataclass(frozen=True)
class RunConfig:
    chains: int = 3
    iters: int = 40000
    burnin: int = 10000
    thin: int = 50
    seed: int = 0
    threads: int = 1
    store_imputations: bool = True

    def __post_init__(self):
        for name in ("chains", "iters", "thin", "threads"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"{name} must be a positive integer")
        if not (isinstance(self.burnin, int) and 0 <= self.burnin < self.iters):
            raise ConfigError("burnin must satisfy 0 <= burnin < iters")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "run")

    @property
    def n_keep(self) -> int:
        return (self.iters - self.burnin) // self.thin


# ----------------------------------------------------------------------------
# parameters
# ----------------------------------------------------------------------------

def _logit(u):
    return np.log(u) - np.log1p(-u)


def _expit(z):
    return special.expit(z)


class ParameterSpace:
    """Maps the covariance parameters to unit-interval coordinates.

    Free coordinates are ordered ``rho, psi, gamma_1..gamma_p``. Each free
    coordinate ``u`` carries a Beta prior; ``rho = lo + (hi - lo) u`` and
    likewise for ``gamma``; ``psi = u``.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.p = cfg.p
        names = ["rho", "psi"] + [f"gamma_{j + 1}" for j in range(cfg.p)]
        lo = [cfg.rho_interval[0], 0.0] + [cfg.gamma_interval[0]] * cfg.p
        hi = [cfg.rho_interval[1], 1.0] + [cfg.gamma_interval[1]] * cfg.p
        pr = cfg.prior
        a = [pr.a_rho, pr.a_psi] + [pr.a_gamma] * cfg.p
        b = [pr.b_rho, pr.b_psi] + [pr.b_gamma] * cfg.p
        q = cfg.proposal
        qa = [q.a_rho, q.a_psi] + [q.a_gamma] * cfg.p
        qb = [q.b_rho, q.b_psi] + [q.b_gamma] * cfg.p
        fixed_vals = [cfg.fixed.get("rho"), cfg.fixed.get("psi")]
        fixed_vals += list(cfg.fixed["gamma"]) if "gamma" in cfg.fixed else [None] * cfg.p
        self.names = names
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.prior_a = np.array(a, dtype=float)
        self.prior_b = np.array(b, dtype=float)
        self.prop_a = np.array(qa, dtype=float)
        self.prop_b = np.array(qb, dtype=float)
        self.fixed = fixed_vals
        self.free = np.array([v is None for v in fixed_vals])
        self.blocks = [np.array([0]), np.array([1]), np.arange(2, 2 + cfg.p)]

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_theta(self, u: np.ndarray) -> np.ndarray:
        theta = self.lo + (self.hi - self.lo) * u
        for k, v in enumerate(self.fixed):
            if v is not None:
                theta[k] = v
        return theta

    def to_unit(self, theta: np.ndarray) -> np.ndarray:
        u = (np.asarray(theta, dtype=float) - self.lo) / (self.hi - self.lo)
        return np.where(self.free, u, 0.5)

    def split(self, theta):
        return float(theta[0]), float(theta[1]), tuple(float(g) for g in theta[2:])

    def log_prior(self, u: np.ndarray) -> float:
        total = 0.0
        for k in np.flatnonzero(self.free):
            total += beta_logpdf(u[k], self.prior_a[k], self.prior_b[k])
        return total

    def log_proposal(self, u: np.ndarray, idx) -> float:
        return sum(beta_logpdf(u[k], self.prop_a[k], self.prop_b[k]) for k in idx)

    def draw_proposal(self, u: np.ndarray, idx, rng: np.random.Generator) -> np.ndarray:
        new = u.copy()
        for k in idx:
            new[k] = rng.beta(self.prop_a[k], self.prop_b[k])
        return new

    def initial_unit(self) -> np.ndarray:
        # rho = psi = gamma = 0.5 on their natural scale where admissible
        theta = np.array([0.5, 0.5] + [0.5] * self.p)
        u = (theta - self.lo) / (self.hi - self.lo)
        u = np.where((u > 0) & (u < 1), u, 0.5)
        return np.where(self.free, u, 0.5)

    def set_proposal(self, k: int, a: float, b: float) -> None:
        self.prop_a[k], self.prop_b[k] = a, b


@dataclass
class ParameterState:
    beta: np.ndarray
    sigma2: float
    tau2: float
    psi: float
    rho: float
    gamma: tuple
    y_cen: np.ndarray


@dataclass(frozen=True)
class CollapsedEval:
    log_post: float
    beta_hat: np.ndarray
    V_beta_hat: np.ndarray
    S2: float
    log_prior: float = 0.0


# ----------------------------------------------------------------------------
# the problem and the collapsed posterior
# ----------------------------------------------------------------------------

class FitProblem:
    """Dataset, graph and model configuration bundled for repeated evaluation."""

    def __init__(self, ds: CensoredDataset, graph: SpatialGraph, cfg: ModelConfig):
        if graph.n != ds.n:
            raise DataError(f"graph has {graph.n} regions but the data have {ds.n} sites")
        self.ds = ds
        self.graph = graph
        self.cfg = cfg
        ordering = Ordering(cfg.ordering) if cfg.ordering is not None else None
        spatial = SpatialStructure(graph, cfg.kind, ordering, cfg.raw_adjacency)
        if cfg.kind == "sar":
            lo, hi = spatial.rho_bounds()
            a, b = cfg.rho_interval
            if a < lo or b > hi:
                raise ConfigError(f"rho_interval ({a}, {b}) leaves the SAR support ({lo:.4g}, {hi:.4g})")
        self.model = SeparableModel(spatial, cfg.p, ds.T, cfg.backend)
        self.space = ParameterSpace(cfg)
        self.part: Partition = partition(ds)
        self.X = ds.X
        self.N, self.k = ds.X.shape
        if self.N <= self.k:
            raise ConfigError("need more cells than regression coefficients")
        if np.linalg.matrix_rank(self.X) < self.k:
            raise DataError("design matrix is rank deficient")
        if self.part.n_obs < self.k + 1:
            raise DataError(f"only {self.part.n_obs} observed cells; need at least {self.k + 1}")
        self.lower_c = ds.lower[self.part.cen_idx]
        self.upper_c = ds.upper[self.part.cen_idx]


def collapsed_log_posterior(rho: float, psi: float, gamma, y_full: np.ndarray, X: np.ndarray,
                            model: SeparableModel, space: ParameterSpace | None = None,
                            op=None) -> CollapsedEval:
    """Log collapsed posterior of ``(rho, psi, gamma)`` up to a constant.

    ``space`` supplies the Beta priors (omitted: flat). ``op`` may pass a
    prebuilt covariance operator for these parameter values.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_full, dtype=float)
    N, k = X.shape
    if N <= k:
        raise ConfigError("need N > k")
    if op is None:
        op = model.operator(rho, psi, gamma)
    A = op.solve(np.column_stack([X, y]))
    SX, Sy = A[:, :k], A[:, k]
    XtSX = X.T @ SX
    XtSX = 0.5 * (XtSX + XtSX.T)
    try:
        L = np.linalg.cholesky(XtSX)
    except np.linalg.LinAlgError as exc:
        raise DataError("design matrix is rank deficient") from exc
    beta_hat = sla.cho_solve((L, True), X.T @ Sy)
    V = sla.cho_solve((L, True), np.eye(k))
    rss = float(y @ Sy - (X.T @ Sy) @ beta_hat)
    if not rss > 0:
        raise NumericalFailure("non-positive generalized residual sum of squares")
    S2 = rss / (N - k)
    logdet_V = -2.0 * float(np.sum(np.log(np.diag(L))))
    lp = -0.5 * op.logdet + 0.5 * logdet_V - 0.5 * (N - k) * math.log(S2)
    lprior = 0.0
    if space is not None:
        lprior = space.log_prior(space.to_unit(np.array([rho, psi, *gamma], dtype=float)))
    return CollapsedEval(lp + lprior, beta_hat, V, S2, lprior)


# ----------------------------------------------------------------------------
# the sampler
# ----------------------------------------------------------------------------

class _Current:
    """Mutable per-chain state (theta, its operator and collapsed evaluation)."""

    __slots__ = ("u", "theta", "op", "ev", "y", "beta", "sigma2")

    def __init__(self, u, theta, op, ev, y, beta, sigma2):
        self.u, self.theta, self.op, self.ev = u, theta, op, ev
        self.y, self.beta, self.sigma2 = y, beta, sigma2


def _evaluate(problem: FitProblem, theta, y, op=None):
    rho, psi, gamma = problem.space.split(theta)
    if op is None:
        op = problem.model.operator(rho, psi, gamma)
    ev = collapsed_log_posterior(rho, psi, gamma, y, problem.X, problem.model, problem.space, op)
    return op, ev


def _try_evaluate(problem: FitProblem, theta, y):
    rho, psi, gamma = problem.space.split(theta)
    if problem.cfg.p and not is_stationary(gamma):
        return None
    try:
        return _evaluate(problem, theta, y)
    except (NumericalFailure, NotSPD, ConfigError, np.linalg.LinAlgError):
        return None


def metropolis_update(problem: FitProblem, cur: _Current, rng: np.random.Generator) -> bool:
    """One independence Metropolis step (joint or blockwise) on the free parameters.

    Returns whether at least one proposed block was accepted.
    """
    space = problem.space
    free = np.flatnonzero(space.free)
    if free.size == 0:
        return True
    if problem.cfg.proposal.scheme == "joint":
        blocks = [free]
    else:
        blocks = [b[space.free[b]] for b in space.blocks]
        blocks = [b for b in blocks if b.size]
    accepted_any = False
    for idx in blocks:
        u_new = space.draw_proposal(cur.u, idx, rng)
        # the uniform is drawn whatever happens so the stream advances identically
        log_unif = math.log(rng.random())
        if np.any(u_new[idx] <= 0.0) or np.any(u_new[idx] >= 1.0):
            continue
        theta_new = space.to_theta(u_new)
        res = _try_evaluate(problem, theta_new, cur.y)
        if res is None:
            continue
        op_new, ev_new = res
        log_m = (ev_new.log_post - cur.ev.log_post
                 + space.log_proposal(cur.u, idx) - space.log_proposal(u_new, idx))
        if log_unif < log_m:
            cur.u, cur.theta, cur.op, cur.ev = u_new, theta_new, op_new, ev_new
            accepted_any = True
    return accepted_any


def conditional_blocks(state: ParameterState, part: Partition, problem: FitProblem):
    """Mean and covariance of the censored block given the observed block.

    Uses ``y`` from the dataset for observed cells; returns
    ``(mu_c_given_o, Sigma_c_given_o)``.
    """
    cen = part.cen_idx
    if cen.size == 0:
        raise ConfigError("no censored cells")
    op = problem.model.operator(state.rho, state.psi, state.gamma)
    mu = problem.X @ state.beta
    r = np.zeros(problem.N)
    r[part.obs_idx] = problem.ds.y[part.obs_idx] - mu[part.obs_idx]
    P_cc = op.inverse_block(cen) / state.sigma2
    Pco_r = op.solve(r)[cen] / state.sigma2
    try:
        cf = sla.cho_factor(P_cc, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("conditional precision of the censored block is not positive definite") from exc
    Sigma = sla.cho_solve(cf, np.eye(cen.size))
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu_c = mu[cen] - Sigma @ Pco_r
    return mu_c, Sigma


def _impute(problem: FitProblem, cur: _Current, rng: np.random.Generator) -> None:
    cen = problem.part.cen_idx
    if cen.size == 0:
        return
    s2 = cur.sigma2
    r = cur.y - problem.X @ cur.beta
    Pr = cur.op.solve(r)[cen] / s2
    P_cc = cur.op.inverse_block(cen) / s2
    x = rtmvn_gibbs_precision(None, P_cc, problem.lower_c, problem.upper_c, cur.y[cen],
                              problem.cfg.sweeps, rng, Pr=Pr)
    if np.any(x < problem.lower_c) or np.any(x > problem.upper_c):
        raise NumericalFailure("imputed value left its censoring interval")
    cur.y[cen] = x


def _initial_state(problem: FitProblem):
    ds = problem.ds
    obs = problem.part.obs_idx
    cen = problem.part.cen_idx
    y0 = ds.y.copy()
    y0[cen] = ds.y[obs].mean()
    beta0, *_ = np.linalg.lstsq(problem.X, y0, rcond=None)
    fit = problem.X @ beta0
    sigma2 = float(np.sum((y0 - fit) ** 2) / (problem.N - problem.k))
    sd = math.sqrt(sigma2) if sigma2 > 0 else 1.0
    lo, hi = problem.lower_c, problem.upper_c
    both = np.isfinite(lo) & np.isfinite(hi)
    yc = np.where(both, 0.5 * (np.where(both, lo, 0.0) + np.where(both, hi, 0.0)), fit[cen])
    yc = np.where(np.isneginf(lo) & np.isfinite(hi), hi - sd, yc)
    yc = np.where(np.isfinite(lo) & np.isposinf(hi), lo + sd, yc)
    y = ds.y.copy()
    y[cen] = yc
    return y, beta0, sigma2


def _laplace_fit(problem: FitProblem, u0: np.ndarray, y: np.ndarray):
    """Mode and marginal sds of the collapsed posterior in logit coordinates."""
    space = problem.space
    free = np.flatnonzero(space.free)

    def neg(z):
        u = u0.copy()
        u[free] = _expit(z)
        res = _try_evaluate(problem, space.to_theta(u), y)
        if res is None:
            return 1e300
        # log-Jacobian of the logit map keeps this a density in z
        return -(res[1].log_post + float(np.sum(np.log(u[free]) + np.log1p(-u[free]))))

    z0 = _logit(np.clip(u0[free], 1e-6, 1 - 1e-6))
    opt = optimize.minimize(neg, z0, method="Nelder-Mead",
                            options={"xatol": 1e-4, "fatol": 1e-6, "maxiter": 400 * free.size})
    z = opt.x
    f0 = opt.fun
    d = free.size
    h = 1e-3 * np.maximum(1.0, np.abs(z))
    H = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h[i]
            ej[j] = h[j]
            if i == j:
                val = (neg(z + ei) - 2 * f0 + neg(z - ei)) / h[i] ** 2
            else:
                val = (neg(z + ei + ej) - neg(z + ei - ej) - neg(z - ei + ej) + neg(z - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    try:
        cov = np.linalg.inv(H)
        sd = np.sqrt(np.diag(cov))
        if not np.all(np.isfinite(sd)) or np.any(np.diag(cov) <= 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sd = np.full(d, 0.5)
    return z, sd


_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(40)
_GH_W = _GH_W / _GH_W.sum()


def _beta_matching(mean: float, var: float) -> tuple[float, float]:
    """Beta law with the given mean and variance, never flatter than uniform."""
    mean = min(max(mean, 1e-4), 1 - 1e-4)
    c = mean * (1 - mean) / max(var, 1e-12) - 1.0
    c = max(c, 2.0)
    return mean * c, (1 - mean) * c


def _beta_from_logit(m: float, s: float) -> tuple[float, float]:
    """Beta law sharing the mean and variance of ``expit(N(m, s^2))``."""
    u = _expit(m + s * _GH_X)
    mean = float(_GH_W @ u)
    var = float(_GH_W @ (u - mean) ** 2)
    return _beta_matching(mean, var)


def _calibrate(problem: FitProblem, cur: _Current, burn_u: np.ndarray | None = None) -> None:
    """Refit the Beta proposals of the free parameters.

    With enough burn-in draws ``burn_u`` (unit scale), match their mean and
    inflated variance; otherwise use a Laplace approximation at the current
    imputation.
    """
    space = problem.space
    free = np.flatnonzero(space.free)
    if free.size == 0:
        return
    infl = problem.cfg.proposal.inflate
    if burn_u is not None and len(np.unique(burn_u[:, 0])) >= 20:
        mean = burn_u.mean(axis=0)
        var = burn_u.var(axis=0, ddof=1) * infl ** 2
        for k, m, v in zip(free, mean, var):
            space.set_proposal(k, *_beta_matching(float(m), float(v)))
        return
    z, sd = _laplace_fit(problem, cur.u, cur.y)
    for k, m, sdk in zip(free, z, sd):
        space.set_proposal(k, *_beta_from_logit(float(m), infl * float(sdk)))


@dataclass
class ChainResult:
    """Retained draws of one chain; arrays have one row per stored iteration."""

    iters: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    tau2: np.ndarray
    psi: np.ndarray
    rho: np.ndarray
    gamma: np.ndarray
    logpost: np.ndarray
    accepted: np.ndarray
    accept_rate: float
    meta: dict
    y_cen: np.ndarray | None = None
    cen_idx: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.iters.size

    @property
    def draws(self) -> list[ParameterState]:
        out = []
        for s in range(self.n_draws):
            yc = self.y_cen[s] if self.y_cen is not None else np.empty(0)
            out.append(ParameterState(self.beta[s].copy(), float(self.sigma2[s]), float(self.tau2[s]),
                                      float(self.psi[s]), float(self.rho[s]),
                                      tuple(self.gamma[s]), yc.copy()))
        return out

    def param_names(self) -> list[str]:
        k = self.beta.shape[1]
        p = self.gamma.shape[1]
        return ([f"beta_{j}" for j in range(k)] + ["sigma2", "tau2", "psi", "rho"]
                + [f"gamma_{j + 1}" for j in range(p)])

    def matrix(self) -> np.ndarray:
        """Draws as columns in :meth:`param_names` order."""
        return np.column_stack([self.beta, self.sigma2, self.tau2, self.psi, self.rho, self.gamma])

    def column(self, name: str) -> np.ndarray:
        return self.matrix()[:, self.param_names().index(name)]


def run_chain(problem: FitProblem, run: RunConfig, chain_id: int) -> ChainResult:
    """Run one chain of the four-step sampler."""
    rng = RngStream(run.seed, chain_id).generator()
    cfg = problem.cfg
    # per-chain copy so calibration never leaks between chains
    problem = _ChainView(problem, ParameterSpace(cfg))
    space = problem.space
    y, beta, sigma2 = _initial_state(problem)
    u = space.initial_unit()
    theta = space.to_theta(u)
    res = _try_evaluate(problem, theta, y)
    if res is None:
        raise NumericalFailure(f"collapsed posterior cannot be evaluated at the initial values {theta}")
    op, ev = res
    cur = _Current(u, theta, op, ev, y, beta, sigma2)
    if cfg.proposal.kind == "laplace":
        _calibrate(problem, cur)
    n_keep = run.n_keep
    k, p = problem.k, cfg.p
    cen = problem.part.cen_idx
    out_beta = np.empty((n_keep, k))
    out_scalar = np.empty((n_keep, 4))
    out_gamma = np.empty((n_keep, p))
    out_lp = np.empty(n_keep)
    out_acc = np.zeros(n_keep, dtype=bool)
    out_it = np.empty(n_keep, dtype=int)
    out_y = np.empty((n_keep, cen.size)) if run.store_imputations else None
    burn_u = []
    n_acc = 0
    n_post = 0
    n_acc_burn = 0
    s_keep = 0
    N, kk = problem.N, problem.k
    free = np.flatnonzero(space.free)
    for it in range(1, run.iters + 1):
        if it > 1 and cen.size:
            # the imputation moved: refresh the collapsed evaluation at theta
            cur.op, cur.ev = _evaluate(problem, cur.theta, cur.y, cur.op)
        acc = metropolis_update(problem, cur, rng)
        ev = cur.ev
        sigma2 = rscaled_inv_chisq(N - kk, ev.S2, rng)
        try:
            chol = np.linalg.cholesky(sigma2 * ev.V_beta_hat)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("posterior covariance of beta is not positive definite") from exc
        beta = ev.beta_hat + chol @ rng.standard_normal(kk)
        cur.beta, cur.sigma2 = beta, sigma2
        _impute(problem, cur, rng)
        if it <= run.burnin:
            n_acc_burn += acc
            if it > run.burnin // 2 and free.size:
                burn_u.append(cur.u[free].copy())
            if (it == run.burnin and cfg.proposal.kind == "laplace" and cfg.proposal.recalibrate
                    and free.size):
                _calibrate(problem, cur, np.array(burn_u))
            continue
        n_post += 1
        n_acc += acc
        if (it - run.burnin) % run.thin == 0:
            th = cur.theta
            psi = float(th[1])
            out_it[s_keep] = it
            out_beta[s_keep] = beta
            out_scalar[s_keep] = (sigma2, sigma2 * psi, psi, th[0])
            out_gamma[s_keep] = th[2:]
            out_lp[s_keep] = cur.ev.log_post
            out_acc[s_keep] = acc
            if out_y is not None:
                out_y[s_keep] = cur.y[cen]
            s_keep += 1
    meta = {
        "seed": run.seed,
        "chain": chain_id,
        "iters": run.iters,
        "burnin": run.burnin,
        "thin": run.thin,
        "n_draws": n_keep,
        "accept_rate": n_acc / n_post if n_post else float("nan"),
        "accept_rate_burnin": n_acc_burn / run.burnin if run.burnin else float("nan"),
        "proposal_a": space.prop_a.tolist(),
        "proposal_b": space.prop_b.tolist(),
    }
    return ChainResult(out_it, out_beta, out_scalar[:, 0], out_scalar[:, 1], out_scalar[:, 2],
                       out_scalar[:, 3], out_gamma, out_lp, out_acc, meta["accept_rate"], meta,
                       out_y, cen.copy())


class _ChainView:
    """A FitProblem with a private ParameterSpace (proposals are per chain)."""

    def __init__(self, problem: FitProblem, space: ParameterSpace):
        self._p = problem
        self.space = space

    def __getattr__(self, name):
        return getattr(self._p, name)


def model_hash(ds: CensoredDataset, cfg: ModelConfig) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    for arr in (ds.y, ds.status, ds.lower, ds.upper, ds.X):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def gibbs_fit(ds: CensoredDataset, g: SpatialGraph, model_cfg: ModelConfig | dict | None = None,
              run_cfg: RunConfig | dict | None = None) -> list[ChainResult]:
    """Run every chain; chains use independent streams ``(seed, chain_id)``."""
    if not isinstance(model_cfg, ModelConfig):
        model_cfg = ModelConfig.from_dict(model_cfg)
    if not isinstance(run_cfg, RunConfig):
        run_cfg = RunConfig.from_dict(run_cfg)
    problem = FitProblem(ds, g, model_cfg)
    digest = model_hash(ds, model_cfg)

    def one(c):
        res = run_chain(problem, run_cfg, c)
        res.meta["model_hash"] = digest
        return res

    if run_cfg.threads > 1 and run_cfg.chains > 1:
        with ThreadPoolExecutor(max_workers=run_cfg.threads) as pool:
            results = list(pool.map(one, range(run_cfg.chains)))
    else:
        results = [one(c) for c in range(run_cfg.chains)]
    return results


# ----------------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------------

def _num(v) -> str:
    return repr(float(v))


def write_chain(res: ChainResult, path: str | Path, sidecar: dict | None = None,
                cell_labels: list[str] | None = None, imputation_path: str | Path | None = None) -> None:
    """Chain CSV plus ``<path>.json`` sidecar; imputations optionally in a wide CSV."""
    path = Path(path)
    names = res.param_names()
    M = res.matrix()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + names + ["logpost", "accepted"])
        for s in range(res.n_draws):
            w.writerow([int(res.iters[s])] + [_num(v) for v in M[s]]
                       + [_num(res.logpost[s]), int(res.accepted[s])])
    meta = dict(res.meta)
    meta["param_names"] = names
    if sidecar:
        meta.update(sidecar)
    if imputation_path is not None and res.y_cen is not None:
        imputation_path = Path(imputation_path)
        labels = cell_labels or [str(int(c)) for c in res.cen_idx]
        with open(imputation_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + labels)
            for s in range(res.n_draws):
                w.writerow([int(res.iters[s])] + [_num(v) for v in res.y_cen[s]])
        meta["imputations"] = imputation_path.name
        meta["cen_idx"] = [int(c) for c in res.cen_idx]
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_chain(path: str | Path) -> ChainResult:
    """Inverse of :func:`write_chain` (imputations loaded when referenced)."""
    path = Path(path)
    side = path.with_suffix(path.suffix + ".json")
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, len(header)))
    col = {h: i for i, h in enumerate(header)}
    bcols = [h for h in header if h.startswith("beta_")]
    gcols = [h for h in header if h.startswith("gamma_")]
    if not bcols or "sigma2" not in col:
        raise DataError(f"{path} is not a chain file")
    y_cen = cen_idx = None
    if "imputations" in meta:
        ipath = path.parent / meta["imputations"]
        with open(ipath, encoding="utf-8", newline="") as fh:
            irows = list(csv.reader(fh))
        y_cen = np.array([[float(v) for v in r[1:]] for r in irows[1:]]).reshape(len(irows) - 1, -1)
        cen_idx = np.array(meta["cen_idx"], dtype=int)
    acc = data[:, col["accepted"]].astype(bool)
    rate = meta.get("accept_rate", float(acc.mean()) if acc.size else float("nan"))
    return ChainResult(data[:, col["iter"]].astype(int), data[:, [col[h] for h in bcols]],
                       data[:, col["sigma2"]], data[:, col["tau2"]], data[:, col["psi"]],
                       data[:, col["rho"]], data[:, [col[h] for h in gcols]],
                       data[:, col["logpost"]], acc, rate, meta, y_cen, cen_idx)


def summarize(chains: list[ChainResult]) -> list[dict]:
    """Posterior mean and 2.5 / 97.5 percentiles per parameter, chains pooled."""
    M = np.vstack([c.matrix() for c in chains])
    out = []
    for j, name in enumerate(chains[0].param_names()):
        v = M[:, j]
        out.append({"param": name, "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                    "q025": float(np.quantile(v, 0.025)), "q975": float(np.quantile(v, 0.975))})
    return out

