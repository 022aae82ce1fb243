"""Simulation studies: data generation, ad hoc baselines and metrics.

Study I fits every replicate three ways (censoring-aware, censored cells set
to the detection limit, or to half of it) and records 95% interval lengths
and coverage of the true parameters. Study II holds out the final time
points and scores forecasts at several horizons by root mean squared
prediction error, interval length and coverage.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .correlation import SpatialStructure
from .covariance import SeparableModel
from .data import CensoredDataset, Status, apply_detection_limit
from .errors import CensoredArealError, ConfigError, LengthMismatch, NoLODRecorded, NumericalFailure
from .graph import SpatialGraph, grid_graph, write_edge_list
from .inference import ModelConfig, RunConfig, gibbs_fit
from .prediction import PredictionTask, predictive_draws
from .stochastics import RngStream

log = logging.getLogger(__name__)

__all__ = [
    "StudyDesign",
    "StudyMetrics",
    "PRESETS",
    "preset",
    "simulate_panel",
    "simulate_dataset",
    "baseline_impute",
    "run_study",
    "sqrt_mspe",
    "METHODS",
    "BEIJING_STATIONS",
    "beijing_graph",
    "beijing_standin",
    "write_beijing_standin",
    "beijing_check",
]

METHODS = ("NST-CLG", "LOD", "LOD2")
DEFAULT_TRUTH = {"beta": [1.0, 2.0, 2.5], "sigma2": 2.0, "rho": 0.8, "gamma": [0.7], "tau2": 0.6}


@dataclass(frozen=True)
class StudyDesign:
    """One simulation study.

    ``T`` is the number of estimation times; study II adds ``T_holdout``
    forecast times per site. ``run`` and ``model`` are passed to the
    sampler for every fit.
    """

    study: str = "I"
    grid_side: int = 3
    T: int = 9
    T_holdout: int = 0
    censor_pct: float = 15.0
    missing_pct: float = 5.0
    replicates: int = 50
    truth: dict = field(default_factory=lambda: dict(DEFAULT_TRUTH))
    kind: str = "dagar"
    seed: int = 2024
    run: dict = field(default_factory=lambda: {"chains": 1, "iters": 6000, "burnin": 2000, "thin": 4})
    model: dict = field(default_factory=lambda: {"proposal": {"kind": "laplace"}})
    methods: tuple = METHODS
    horizons: tuple = (1, 3, 7)
    max_fail_frac: float = 0.05

    def __post_init__(self):
        if self.study not in ("I", "II"):
            raise ConfigError("study must be 'I' or 'II'")
        if self.grid_side < 1 or self.T < 1:
            raise ConfigError("grid_side and T must be positive")
        for name in ("censor_pct", "missing_pct"):
            v = getattr(self, name)
            if not 0 <= v < 100:
                raise ConfigError(f"{name} must lie in [0, 100)")
        if self.censor_pct + self.missing_pct > 100:
            raise ConfigError("censored plus missing share exceeds 100%")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        if self.study == "II":
            if self.T_holdout < 1:
                raise ConfigError("study II needs T_holdout >= 1")
            if max(self.horizons) > self.T_holdout:
                raise ConfigError("horizons cannot exceed T_holdout")
        missing = {"beta", "sigma2", "rho", "gamma", "tau2"} - set(self.truth)
        if missing:
            raise ConfigError(f"truth lacks {sorted(missing)}")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        # validate eagerly so a bad design fails before any replicate runs
        RunConfig.from_dict(self.run)
        self.model_config()

    @classmethod
    def from_dict(cls, d: dict) -> "StudyDesign":
        d = dict(d)
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown study keys: {sorted(unknown)}")
        for key in ("methods", "horizons"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["horizons"] = list(self.horizons)
        return d

    def model_config(self) -> ModelConfig:
        m = dict(self.model)
        m.setdefault("kind", self.kind)
        m.setdefault("p", len(self.truth["gamma"]))
        return ModelConfig.from_dict(m)

    @property
    def n(self) -> int:
        return self.grid_side ** 2


PRESETS = {
    "table4.1-desk": {
        "study": "I", "grid_side": 3, "T": 9, "censor_pct": 15.0, "missing_pct": 5.0,
        "replicates": 50, "seed": 41,
        "run": {"chains": 1, "iters": 6000, "burnin": 2000, "thin": 4},
    },
    "table4.4-desk": {
        "study": "II", "grid_side": 5, "T": 20, "T_holdout": 7, "censor_pct": 35.0, "missing_pct": 5.0,
        "replicates": 30, "seed": 44, "horizons": [1, 3, 7],
        "run": {"chains": 1, "iters": 4000, "burnin": 1500, "thin": 5},
    },
}


def preset(name: str, **overrides) -> StudyDesign:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = dict(PRESETS[name])
    d.update(overrides)
    return StudyDesign.from_dict(d)


# ----------------------------------------------------------------------------
# simulation
# ----------------------------------------------------------------------------

def simulate_panel(graph: SpatialGraph, T: int, X: np.ndarray, beta, sigma2: float, rho: float,
                   gamma, tau2: float, rng: np.random.Generator, kind: str = "dagar") -> np.ndarray:
    """Exact draw of ``N(X beta, sigma2 kron(Gamma, Phi) + tau2 I)``."""
    model = SeparableModel(SpatialStructure(graph, kind), len(gamma), T)
    Ls = np.linalg.cholesky(model.spatial_correlation(rho))
    Lt = np.linalg.cholesky(model.temporal_correlation(tuple(gamma)))
    Z = rng.standard_normal((graph.n, T))
    omega = math.sqrt(sigma2) * (Ls @ Z @ Lt.T).reshape(-1)
    eps = math.sqrt(tau2) * rng.standard_normal(graph.n * T)
    return X @ np.asarray(beta, dtype=float) + omega + eps


@dataclass(frozen=True)
class SimulatedData:
    dataset: CensoredDataset
    y_true: np.ndarray
    X_holdout: np.ndarray | None
    y_holdout: np.ndarray | None
    graph: SpatialGraph


def _censor_and_drop(ds: CensoredDataset, censor_pct: float, missing_pct: float,
                     rng: np.random.Generator) -> CensoredDataset:
    N = ds.N
    n_cens = int(math.floor(censor_pct * N / 100.0))
    if n_cens:
        order = np.argsort(ds.y, kind="stable")
        lod = float(ds.y[order[n_cens - 1]])
        ds = apply_detection_limit(ds, lod, "left")
    n_miss = int(math.floor(missing_pct / 100.0 * (N - n_cens)))
    if n_miss:
        pool = np.flatnonzero(ds.status == Status.OBSERVED)
        drop = np.sort(rng.choice(pool, size=n_miss, replace=False))
        st = ds.status.copy()
        lo, hi, y = ds.lower.copy(), ds.upper.copy(), ds.y.copy()
        st[drop] = Status.MISSING
        lo[drop], hi[drop], y[drop] = -np.inf, np.inf, np.nan
        ds = ds.replace(status=st, lower=lo, upper=hi, y=y)
    return ds


def simulate_dataset(design: StudyDesign, rng: np.random.Generator) -> SimulatedData:
    """Covariates ``(1, N(0,1), N(1,9))``, a response at the design's truth,
    left-censoring of the lowest ``floor(delta N / 100)`` estimation cells
    and ``floor(m (N - censored) / 100)`` missing cells among the rest."""
    g = grid_graph(design.grid_side)
    n, T, H = g.n, design.T, design.T_holdout
    Ttot = T + H
    Ntot = n * Ttot
    x1 = rng.normal(0.0, 1.0, Ntot)
    x2 = rng.normal(1.0, 3.0, Ntot)
    X = np.column_stack([np.ones(Ntot), x1, x2])
    tr = design.truth
    y = simulate_panel(g, Ttot, X, tr["beta"], tr["sigma2"], tr["rho"], tr["gamma"], tr["tau2"], rng, design.kind)
    est = (np.arange(n)[:, None] * Ttot + np.arange(T)[None, :]).reshape(-1)
    N = n * T
    ds = CensoredDataset(n, T, y[est], np.zeros(N, dtype=np.int8), y[est], y[est], X[est],
                         ("intercept", "x1", "x2"), tuple(str(i + 1) for i in range(n)),
                         tuple(range(1, T + 1)))
    ds = _censor_and_drop(ds, design.censor_pct, design.missing_pct, rng)
    if H:
        hold = (np.arange(n)[:, None] * Ttot + np.arange(T, Ttot)[None, :]).reshape(-1)
        return SimulatedData(ds, y[est], X[hold], y[hold], g)
    return SimulatedData(ds, y[est], None, None, g)


def baseline_impute(ds: CensoredDataset, method: str) -> CensoredDataset:
    """Complete a dataset the ad hoc way.

    ``LOD`` / ``LOD2`` put censored cells at the detection limit or half of
    it; ``mean`` uses the observed mean for censored cells too. Missing cells
    always get the mean of the observed cells. Every cell becomes observed.
    """
    if method not in ("LOD", "LOD2", "mean"):
        raise ConfigError(f"unknown baseline {method!r}")
    st = ds.status
    obs = st == Status.OBSERVED
    miss = st == Status.MISSING
    cens = ~obs & ~miss
    y = ds.y.copy()
    if not (~obs).any():
        return ds
    fill = float(ds.y[obs].mean()) if obs.any() else 0.0
    y[miss] = fill
    if cens.any():
        if method == "mean":
            y[cens] = fill
        else:
            if ds.lod is None:
                raise NoLODRecorded("dataset carries no detection limit")
            y[cens] = ds.lod if method == "LOD" else 0.5 * ds.lod
    return ds.replace(y=y, status=np.zeros(ds.N, dtype=np.int8), lower=y, upper=y)


def sqrt_mspe(pred_means, truth_values) -> float:
    a = np.asarray(pred_means, dtype=float).reshape(-1)
    b = np.asarray(truth_values, dtype=float).reshape(-1)
    if a.size != b.size or a.size == 0:
        raise LengthMismatch(f"need equal non-empty lengths, got {a.size} and {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# ----------------------------------------------------------------------------
# running a study
# ----------------------------------------------------------------------------

@dataclass
class StudyMetrics:
    """Per-replicate records plus aggregated tables."""

    design: StudyDesign
    records: list
    failures: list
    tables: dict

    def write(self, outdir: str | Path) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, rows in self.tables.items():
            written.append(_write_rows(outdir / f"{name}.csv", rows))
        written.append(_write_rows(outdir / "replicates.csv", self.records))
        side = outdir / "study.json"
        side.write_text(json.dumps({"design": self.design.to_dict(), "failures": self.failures},
                                   indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(side)
        return written


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def _truth_values(design: StudyDesign) -> dict:
    tr = design.truth
    out = {f"beta_{j}": float(b) for j, b in enumerate(tr["beta"])}
    out.update({"sigma2": float(tr["sigma2"]), "tau2": float(tr["tau2"]),
                "psi": float(tr["tau2"]) / float(tr["sigma2"]), "rho": float(tr["rho"])})
    out.update({f"gamma_{j + 1}": float(g) for j, g in enumerate(tr["gamma"])})
    return out


def _fit_seed(design: StudyDesign, rep: int) -> int:
    return int(np.random.SeedSequence(design.seed, spawn_key=(rep, 1)).generate_state(1)[0])


def _replicate(design: StudyDesign, rep: int) -> list[dict]:
    rng = RngStream(design.seed, (rep, 0)).generator()
    sim = simulate_dataset(design, rng)
    model_cfg = design.model_config()
    run_cfg = RunConfig.from_dict({**design.run, "seed": _fit_seed(design, rep)})
    truth = _truth_values(design)
    rows = []
    for method in design.methods:
        ds = sim.dataset if method == "NST-CLG" else baseline_impute(sim.dataset, method)
        chains = gibbs_fit(ds, sim.graph, model_cfg, run_cfg)
        acc = float(np.mean([c.accept_rate for c in chains]))
        if design.study == "I":
            names = chains[0].param_names()
            M = np.vstack([c.matrix() for c in chains])
            for j, name in enumerate(names):
                lo, hi = np.quantile(M[:, j], [0.025, 0.975])
                t = truth[name]
                rows.append({"replicate": rep, "method": method, "parameter": name,
                             "mean": float(M[:, j].mean()), "q025": float(lo), "q975": float(hi),
                             "length": float(hi - lo), "covered": int(lo <= t <= hi),
                             "accept_rate": acc})
        else:
            task = PredictionTask(design.T_holdout, sim.X_holdout)
            prng = RngStream(run_cfg.seed, (rep, 2)).generator()
            pred = predictive_draws(chains, task, ds, sim.graph, model_cfg, prng)
            sm = pred.summary
            steps = np.tile(np.arange(design.T_holdout), design.n)
            for h in design.horizons:
                sel = steps < h
                cover = (sm.q025[sel] <= sim.y_holdout[sel]) & (sim.y_holdout[sel] <= sm.q975[sel])
                rows.append({"replicate": rep, "method": method, "horizon": h,
                             "sqrt_mspe": sqrt_mspe(sm.mean[sel], sim.y_holdout[sel]),
                             "length": float(np.mean(sm.q975[sel] - sm.q025[sel])),
                             "coverage": float(np.mean(cover)), "accept_rate": acc})
    return rows


def _aggregate(design: StudyDesign, records: list[dict]) -> dict:
    tables = {}
    if design.study == "I":
        params = list(dict.fromkeys(r["parameter"] for r in records))
        cov_rows, len_rows = [], []
        for name in params:
            crow = {"parameter": name}
            lrow = {"parameter": name}
            for m in design.methods:
                sel = [r for r in records if r["parameter"] == name and r["method"] == m]
                crow[m] = float(np.mean([r["covered"] for r in sel])) if sel else float("nan")
                lrow[m] = float(np.mean([r["length"] for r in sel])) if sel else float("nan")
            cov_rows.append(crow)
            len_rows.append(lrow)
        tables["coverage"] = cov_rows
        tables["interval_length"] = len_rows
    else:
        rows = []
        for m in design.methods:
            for h in design.horizons:
                sel = [r for r in records if r["method"] == m and r["horizon"] == h]
                rows.append({"method": m, "horizon": h,
                             "sqrt_mspe": float(np.mean([r["sqrt_mspe"] for r in sel])),
                             "length": float(np.mean([r["length"] for r in sel])),
                             "coverage": float(np.mean([r["coverage"] for r in sel]))})
        tables["prediction"] = rows
        if "NST-CLG" in design.methods and "LOD" in design.methods:
            wins = []
            for h in design.horizons:
                nst = {r["replicate"]: r["sqrt_mspe"] for r in records if r["method"] == "NST-CLG" and r["horizon"] == h}
                lod = {r["replicate"]: r["sqrt_mspe"] for r in records if r["method"] == "LOD" and r["horizon"] == h}
                reps = sorted(set(nst) & set(lod))
                frac = float(np.mean([nst[r] <= lod[r] for r in reps])) if reps else float("nan")
                wins.append({"horizon": h, "nst_le_lod_fraction": frac, "replicates": len(reps)})
            tables["mspe_wins"] = wins
    return tables


def run_study(design: StudyDesign, progress=None, threads: int = 1) -> StudyMetrics:
    """Run all replicates; a replicate that fails numerically is dropped and counted.

    Replicates draw from their own ``(seed, replicate)`` streams, so running
    them on ``threads`` workers does not change any result.
    """
    def one(rep):
        try:
            out = (rep, _replicate(design, rep), None)
        except CensoredArealError as exc:
            log.warning("replicate %d failed: %s", rep, exc)
            out = (rep, [], exc)
        if progress is not None:
            progress(rep)
        return out

    reps = range(design.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, reps))
    else:
        results = [one(rep) for rep in reps]
    records, failures = [], []
    for rep, rows, exc in results:
        records.extend(rows)
        if exc is not None:
            failures.append({"replicate": rep, "error": f"{type(exc).__name__}: {exc}"})
    if len(failures) > design.max_fail_frac * design.replicates:
        raise NumericalFailure(f"{len(failures)} of {design.replicates} replicates failed")
    return StudyMetrics(design, records, failures, _aggregate(design, records))


# ----------------------------------------------------------------------------
# Beijing-format stand-in
# ----------------------------------------------------------------------------

BEIJING_STATIONS = (
    "Aotizhongxin", "Changping", "Dingling", "Dongsi", "Guanyuan", "Gucheng",
    "Huairou", "Nongzhanguan", "Shunyi", "Tiantan", "Wanliu", "Wanshouxigong",
)

# invented neighbourhood structure following the rough layout of the stations
_BEIJING_EDGES = (
    ("Dingling", "Changping"), ("Changping", "Wanliu"), ("Changping", "Aotizhongxin"),
    ("Changping", "Huairou"), ("Wanliu", "Aotizhongxin"), ("Wanliu", "Guanyuan"),
    ("Wanliu", "Gucheng"), ("Aotizhongxin", "Dongsi"), ("Aotizhongxin", "Nongzhanguan"),
    ("Aotizhongxin", "Guanyuan"), ("Guanyuan", "Dongsi"), ("Guanyuan", "Gucheng"),
    ("Guanyuan", "Wanshouxigong"), ("Gucheng", "Wanshouxigong"), ("Dongsi", "Nongzhanguan"),
    ("Dongsi", "Tiantan"), ("Wanshouxigong", "Tiantan"), ("Nongzhanguan", "Shunyi"),
    ("Shunyi", "Huairou"), ("Nongzhanguan", "Tiantan"),
)

BEIJING_TRUTH = {"beta": [7.05, -0.037, -0.226, -5.588], "sigma2": 0.524, "rho": 0.679,
                 "gamma": [0.529], "tau2": 0.149}


def beijing_graph() -> SpatialGraph:
    idx = {s: i for i, s in enumerate(BEIJING_STATIONS)}
    return SpatialGraph(len(BEIJING_STATIONS), tuple((idx[a], idx[b]) for a, b in _BEIJING_EDGES),
                        BEIJING_STATIONS)


def _ar1_series(rng, T, phi, sd):
    x = np.empty(T)
    x[0] = rng.normal(0.0, sd)
    e = rng.normal(0.0, sd * math.sqrt(1 - phi * phi), T)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    return x


def beijing_standin(seed: int = 7, T: int = 190, n_missing: int = 55, truth: dict | None = None):
    """Synthetic twice-daily panel in the Beijing air-quality layout.

    Returns ``(graph, rows)`` where ``rows`` are dicts with keys ``station,
    time_index, y, status, lower, upper, TEMP, PRES, WSPM``. ``y`` is a CO
    concentration (log scale carries the model); ``PRES`` is in units of
    100 hPa. Covariates share a regional weather signal with small station
    deviations; the log response follows the DAGAR-AR(1) model at
    ``truth`` around the centred covariates.
    """
    truth = dict(BEIJING_TRUTH if truth is None else truth)
    rng = np.random.default_rng(seed)
    g = beijing_graph()
    n = g.n
    temp_common = -0.55 + _ar1_series(rng, T, 0.85, 3.6)
    pres_common = 10.216 + _ar1_series(rng, T, 0.85, 0.055)
    wind_common = _ar1_series(rng, T, 0.6, 0.8)
    TEMP = temp_common[None, :] + rng.normal(0, 1.5, (n, T))
    PRES = pres_common[None, :] + rng.normal(0, 0.02, (n, T))
    WSPM = np.clip(1.643 * np.exp(0.55 * wind_common[None, :] + rng.normal(0, 0.35, (n, T)) - 0.2), 0.0, 9.6)
    X = np.column_stack([np.ones(n * T), TEMP.reshape(-1), WSPM.reshape(-1), PRES.reshape(-1)])
    Xc = X.copy()
    Xc[:, 1:] -= X[:, 1:].mean(axis=0)
    logy = simulate_panel(g, T, Xc, truth["beta"], truth["sigma2"], truth["rho"], truth["gamma"],
                          truth["tau2"], rng)
    miss = set(rng.choice(n * T, size=n_missing, replace=False).tolist())
    rows = []
    for i in range(n):
        for t in range(T):
            k = i * T + t
            gone = k in miss
            rows.append({"station": BEIJING_STATIONS[i], "time_index": t + 1,
                         "y": "" if gone else repr(round(float(np.exp(logy[k])), 3)),
                         "status": "missing" if gone else "obs", "lower": "", "upper": "",
                         "TEMP": repr(round(float(TEMP[i, t]), 2)), "PRES": repr(round(float(PRES[i, t]), 5)),
                         "WSPM": repr(round(float(WSPM[i, t]), 2))})
    return g, rows


def write_beijing_standin(data_path: str | Path, graph_path: str | Path, seed: int = 7, **kw) -> None:
    g, rows = beijing_standin(seed, **kw)
    write_edge_list(g, graph_path)
    _write_rows(Path(data_path), rows)



BEIJING_RUN = {"chains": 3, "iters": 12000, "burnin": 4000, "thin": 8}
BEIJING_COVARIATES = ("TEMP", "WSPM", "PRES")


def beijing_check(outdir: str | Path, seed: int = 7, run: dict | None = None, holdout: int = 6,
                  threads: int = 1, rhat_max: float = 1.05) -> dict:
    """Fit DAGAR-AR(1) to the stand-in panel and check its basic properties.

    Writes the stand-in files, chain CSVs, a summary and ``beijing_check.json``
    under ``outdir``. The response is modelled on the log scale with centred
    covariates; the last ``holdout`` times of every station are scored by
    the holdout ELPD.
    """
    from .data import center_covariates, load_dataset, log_response, split_holdout
    from .diagnostics import convergence_report, deviance_criteria, elpd_holdout
    from .inference import summarize, write_chain

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data_path, graph_path = outdir / "beijing_data.csv", outdir / "beijing_graph.txt"
    write_beijing_standin(data_path, graph_path, seed)
    ds, g = load_dataset(data_path, graph_path, {"covariates": list(BEIJING_COVARIATES)})
    ds = log_response(ds)
    train, test = split_holdout(ds, holdout)
    train, means = center_covariates(train)
    test, _ = center_covariates(test, means)
    model_cfg = ModelConfig.from_dict({"kind": "dagar", "p": 1, "proposal": {"kind": "laplace"}})
    run_cfg = RunConfig.from_dict({**BEIJING_RUN, **(run or {}), "seed": seed, "threads": threads})
    chains = gibbs_fit(train, g, model_cfg, run_cfg)
    for c, ch in enumerate(chains, start=1):
        write_chain(ch, outdir / f"chain_{c}.csv", {"model": model_cfg.to_dict(), "run": asdict(run_cfg)})
    summary = summarize(chains)
    _write_rows(outdir / "summary.csv", summary)
    conv = convergence_report(chains)
    crit = deviance_criteria(chains, train, g, model_cfg)
    task = PredictionTask(holdout, test.X)
    pred = predictive_draws(chains, task, train, g, model_cfg, RngStream(seed, (0, 3)).generator())
    elpd = elpd_holdout(pred.cond_mean, pred.cond_var, test.y)
    names = ("intercept",) + BEIJING_COVARIATES
    beta_ci = {names[j]: [r["q025"], r["q975"]] for j, r in enumerate(summary[: len(names)])}
    negative = ("WSPM", "PRES")
    acc = [float(c.accept_rate) for c in chains]
    checks = {
        "completed": True,
        "rhat_ok": bool(all(v <= rhat_max for v in conv.rhat.values())),
        "accept_ok": bool(all(0.05 < a < 0.9 for a in acc)),
        "negative_beta_excludes_zero": bool(all(beta_ci[c][1] < 0 for c in negative)),
    }
    report = {
        "shape": {"n": ds.n, "T": ds.T, "missing": int(ds.count(Status.MISSING)),
                  "train_cells": train.N, "test_cells": test.N},
        "rhat": conv.rhat,
        "accept_rate": acc,
        "beta_ci": beta_ci,
        "criteria": {**crit.as_dict(), "elpd": elpd},
        "checks": checks,
        "passed": bool(all(checks.values())),
        "run": asdict(run_cfg),
        "model": model_cfg.to_dict(),
    }
    (outdir / "beijing_check.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
    return report
