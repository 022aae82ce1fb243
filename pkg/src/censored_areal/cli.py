"""Command-line entry point: ``censored-areal <subcommand> ...``.

Subcommands
-----------
simulate   write one simulated replicate (or the Beijing-format stand-in)
fit        run the sampler on a dataset; chains, summary and a self-contained fit directory
predict    forecast the held-out (or supplied) future times from a fit directory
diagnose   convergence, deviance criteria, holdout ELPD and Moran's I for a fit directory
study      run a simulation study from a preset or a design JSON

Failures map to exit codes 2 (configuration), 3 (data) and 4 (numerical).
Every output file is accompanied by, or itself contains, the configuration
that produced it; no timestamps are written so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CensoredDataset, Status, center_covariates, load_dataset, log_response,
                   read_dataset_csv, split_holdout, write_dataset)
from .diagnostics import acf_pacf, convergence_report, deviance_criteria, elpd_holdout, morans_i
from .errors import CensoredArealError, ConfigError
from .graph import adjacency_matrix, read_edge_list, write_edge_list
from .inference import ModelConfig, RunConfig, gibbs_fit, model_hash, read_chain, summarize, write_chain
from .prediction import PredictionTask, predictive_draws, write_predictions
from .stochastics import RngStream
from .study import (PRESETS, StudyDesign, beijing_check, preset, run_study, simulate_dataset,
                    write_beijing_standin)

log = logging.getLogger("censored_areal")

BUNDLED = {
    "toy": ("toy.csv", "toy_graph.txt"),
    "beijing": ("beijing_standin.csv", "beijing_graph.txt"),
}
FIT_CONFIG_KEYS = {"data", "model", "run", "preprocess"}
PREPROCESS_KEYS = {"center_covariates", "log_response", "holdout_last"}


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def bundled_paths(name: str) -> tuple[Path, Path]:
    if name not in BUNDLED:
        raise ConfigError(f"unknown bundled dataset {name!r}; choose from {sorted(BUNDLED)}")
    root = resources.files("censored_areal") / "datasets"
    data, graph = BUNDLED[name]
    return Path(str(root / data)), Path(str(root / graph))


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


# ----------------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------------

def resolve_fit_config(args) -> dict:
    """Merge the JSON config with command-line overrides and validate it."""
    cfg = _read_config(args.config)
    unknown = set(cfg) - FIT_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    data = dict(cfg.get("data", {}))
    model = dict(cfg.get("model", {}))
    run = dict(cfg.get("run", {}))
    pre = dict(cfg.get("preprocess", {}))
    bad = set(pre) - PREPROCESS_KEYS
    if bad:
        raise ConfigError(f"unknown preprocess options {sorted(bad)}")
    if args.covariates is not None:
        data["covariates"] = [c for c in args.covariates.split(",") if c]
    if args.no_intercept:
        data["intercept"] = False
    if args.model is not None:
        model["kind"] = args.model
    if args.p is not None:
        model["p"] = args.p
    if args.backend is not None:
        model["backend"] = args.backend
    if args.proposal is not None:
        model["proposal"] = {**model.get("proposal", {}), "kind": args.proposal}
    for name in ("chains", "iters", "burnin", "thin", "seed"):
        v = getattr(args, name)
        if v is not None:
            run[name] = v
    run["threads"] = args.threads or run.get("threads") or _default_threads()
    run["store_imputations"] = True
    if args.center_covariates:
        pre["center_covariates"] = True
    if args.log_response:
        pre["log_response"] = True
    if args.holdout_last is not None:
        pre["holdout_last"] = args.holdout_last
    model_cfg = ModelConfig.from_dict(model)
    run_cfg = RunConfig.from_dict(run)
    hold = int(pre.get("holdout_last", 0) or 0)
    if hold < 0:
        raise ConfigError("holdout_last must be >= 0")
    return {
        "data": data,
        "model": model_cfg.to_dict(),
        "run": asdict(run_cfg),
        "preprocess": {"center_covariates": bool(pre.get("center_covariates", False)),
                       "log_response": bool(pre.get("log_response", False)),
                       "holdout_last": hold},
    }


def prepare_fit_data(ds: CensoredDataset, pre: dict):
    """Apply log transform, holdout split and centring (in that order)."""
    if pre["log_response"]:
        ds = log_response(ds)
    test = None
    if pre["holdout_last"]:
        ds, test = split_holdout(ds, pre["holdout_last"])
    means = None
    if pre["center_covariates"]:
        ds, means = center_covariates(ds)
        if test is not None:
            test, _ = center_covariates(test, means)
    return ds, test, means


def cmd_fit(args) -> int:
    cfg = resolve_fit_config(args)
    if args.bundled:
        data_path, graph_path = bundled_paths(args.bundled)
    elif args.data and args.graph:
        data_path, graph_path = Path(args.data), Path(args.graph)
    else:
        raise ConfigError("fit needs --data and --graph, or --bundled")
    ds, g = load_dataset(data_path, graph_path, cfg["data"])
    train, test, means = prepare_fit_data(ds, cfg["preprocess"])
    model_cfg = ModelConfig.from_dict(cfg["model"])
    run_cfg = RunConfig.from_dict(cfg["run"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chains = gibbs_fit(train, g, model_cfg, run_cfg)
    # the fit directory is self-contained: predict / diagnose read only from it
    write_edge_list(g, out / "graph.txt")
    write_dataset(train, out / "train.csv")
    if test is not None:
        write_dataset(test, out / "test.csv")
    echo = {"config": cfg, "model_hash": model_hash(train, model_cfg)}
    labels = [f"{train.site_labels[i]}@{train.time_labels[t]}"
              for i, t in zip(*train.site_time(chains[0].cen_idx))]
    files = []
    for c, ch in enumerate(chains, start=1):
        imp = out / f"imputations_{c}.csv" if (args.save_imputations and ch.cen_idx.size) else None
        write_chain(ch, out / f"chain_{c}.csv", echo, labels, imp)
        files.append(f"chain_{c}.csv")
    summary = summarize(chains)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("param,mean,q025,q975,sd\n")
        for r in summary:
            fh.write(f"{r['param']},{r['mean']!r},{r['q025']!r},{r['q975']!r},{r['sd']!r}\n")
    _dump({
        **echo,
        "inputs": {"data": str(data_path), "graph": str(graph_path)},
        "chains": files,
        "accept_rate": [float(ch.accept_rate) for ch in chains],
        "covariate_names": list(train.covariate_names),
        "centering_means": None if means is None else [float(v) for v in means],
        "shape": {"n": train.n, "T_train": train.T, "train_cells": train.N,
                  "test_cells": 0 if test is None else test.N,
                  "censored": int(train.n_censored - train.count(Status.MISSING)), "missing": int(train.count(Status.MISSING))},
        "version": __version__,
    }, out / "fit.json")
    for r in summary:
        print(f"{r['param']:>10s}  mean {r['mean']: .4f}  95% [{r['q025']: .4f}, {r['q975']: .4f}]")
    print(f"train cells {train.N}, test cells {0 if test is None else test.N}; wrote {out}")
    return 0


# ----------------------------------------------------------------------------
# loading a fit directory
# ----------------------------------------------------------------------------

class FitDir:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        meta_path = self.path / "fit.json"
        if not meta_path.exists():
            raise ConfigError(f"{self.path} is not a fit directory (no fit.json)")
        self.meta = json.loads(meta_path.read_text(encoding="utf-8"))
        self.graph = read_edge_list(self.path / "graph.txt")
        cov = [c for c in self.meta["covariate_names"] if c != "intercept"]
        intercept = "intercept" in self.meta["covariate_names"]
        self.train = read_dataset_csv(self.path / "train.csv", self.graph, cov, intercept)
        test_path = self.path / "test.csv"
        self.test = read_dataset_csv(test_path, self.graph, cov, intercept) if test_path.exists() else None
        self.model_cfg = ModelConfig.from_dict(self.meta["config"]["model"])
        self.chains = [read_chain(self.path / f) for f in self.meta["chains"]]
        self.seed = int(self.meta["config"]["run"]["seed"])


def _future_design(fd: FitDir, future: str | None):
    if future:
        fut = read_dataset_csv(future, fd.graph, [c for c in fd.train.covariate_names if c != "intercept"],
                               "intercept" in fd.train.covariate_names)
        means = fd.meta.get("centering_means")
        if means is not None:
            fut, _ = center_covariates(fut, np.asarray(means))
        return fut
    if fd.test is None:
        raise ConfigError("the fit has no holdout; pass --future with covariates for the forecast times")
    return fd.test


def cmd_predict(args) -> int:
    fd = FitDir(args.fit)
    fut = _future_design(fd, args.future)
    h = fut.T if args.horizon is None else args.horizon
    if not 1 <= h <= fut.T:
        raise ConfigError(f"horizon must lie in 1..{fut.T}")
    idx = (np.arange(fut.n)[:, None] * fut.T + np.arange(h)[None, :]).reshape(-1)
    task = PredictionTask(h, fut.X[idx])
    rng = RngStream(fd.seed, (0, 3)).generator()
    pred = predictive_draws(fd.chains, task, fd.train, fd.graph, fd.model_cfg, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    observed = fut.y[idx] if fut.count(Status.OBSERVED) else None
    write_predictions(pred, out, fut.site_labels, fut.time_labels[:h], observed)
    side = {"fit": str(fd.path), "horizon": h, "model_hash": fd.meta["model_hash"],
            "config": fd.meta["config"], "draws": int(pred.draws.shape[0])}
    if observed is not None:
        keep = np.isfinite(observed)
        sm = pred.summary
        side["sqrt_mspe"] = float(np.sqrt(np.mean((sm.mean[keep] - observed[keep]) ** 2)))
        side["coverage"] = float(np.mean((sm.q025[keep] <= observed[keep]) & (observed[keep] <= sm.q975[keep])))
        side["elpd"] = elpd_holdout(pred.cond_mean, pred.cond_var, observed)
    _dump(side, out.with_suffix(out.suffix + ".json"))
    print(f"wrote {out} ({idx.size} cells, {pred.draws.shape[0]} draws)")
    return 0


# ----------------------------------------------------------------------------
# diagnose
# ----------------------------------------------------------------------------

def cmd_diagnose(args) -> int:
    fd = FitDir(args.fit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"fit": str(fd.path), "model_hash": fd.meta["model_hash"], "config": fd.meta["config"]}
    conv = convergence_report(fd.chains, args.max_lag)
    report["convergence"] = {"rhat": conv.rhat, "rhat_upper": conv.rhat_upper, "accept_rate": conv.accept_rate}
    crit = deviance_criteria(fd.chains, fd.train, fd.graph, fd.model_cfg)
    report["criteria"] = crit.as_dict()
    if fd.test is not None and fd.test.count(Status.OBSERVED):
        task = PredictionTask(fd.test.T, fd.test.X)
        pred = predictive_draws(fd.chains, task, fd.train, fd.graph, fd.model_cfg,
                                RngStream(fd.seed, (0, 3)).generator())
        report["criteria"]["elpd"] = elpd_holdout(pred.cond_mean, pred.cond_var, fd.test.y)
    # exploratory statistics on the panel completed with posterior-mean imputations
    y = fd.train.y.copy()
    cen = fd.chains[0].cen_idx
    if cen is not None and cen.size and fd.chains[0].y_cen is not None:
        y[cen] = np.vstack([c.y_cen for c in fd.chains]).mean(axis=0)
    panel = y.reshape(fd.train.n, fd.train.T)
    lag = min(args.max_lag, fd.train.T - 1)
    with open(out / "response_acf.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("site,lag,acf,pacf\n")
        if np.all(np.isfinite(panel)):
            for i, label in enumerate(fd.train.site_labels):
                if np.ptp(panel[i]) == 0:
                    continue
                r, pr = acf_pacf(panel[i], lag)
                for k in range(lag):
                    fh.write(f"{label},{k + 1},{float(r[k])!r},{float(pr[k])!r}\n")
    if fd.graph.n >= 3 and np.all(np.isfinite(panel)):
        A = adjacency_matrix(fd.graph)
        rng = np.random.default_rng(fd.seed)
        series = []
        for t, label in enumerate(fd.train.time_labels):
            if np.ptp(panel[:, t]) == 0:
                continue
            stat, p = morans_i(panel[:, t], A, args.permutations, rng)
            series.append((label, stat, p))
        with open(out / "morans_i.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("time_index,morans_i,p_value\n")
            for label, stat, p in series:
                fh.write(f"{label},{stat!r},{p!r}\n")
        if series:
            stats = np.array([v[1] for v in series])
            report["morans_i"] = {"times": len(series), "mean": float(stats.mean()),
                                  "share_p_below_0.05": float(np.mean([v[2] < 0.05 for v in series])),
                                  "permutations": args.permutations}
    _dump(report, out / "diagnostics.json")
    with open(out / "acf.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("param,chain,lag,acf\n")
        for name, per_chain in conv.chain_acf.items():
            for c, vals in enumerate(per_chain, start=1):
                for lag, v in enumerate(vals, start=1):
                    fh.write(f"{name},{c},{lag},{v!r}\n")
    for name, v in conv.rhat.items():
        print(f"{name:>10s}  Rhat {v:.4f}")
    print("DIC {dic:.2f}  EAIC {eaic:.2f}  EBIC {ebic:.2f}".format(**report["criteria"]))
    if report["criteria"].get("elpd") is not None:
        print(f"holdout ELPD {report['criteria']['elpd']:.3f}")
    return 0


# ----------------------------------------------------------------------------
# simulate / study
# ----------------------------------------------------------------------------

def _design_from_args(args) -> StudyDesign:
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.design:
        d = _read_config(args.design)
        d.update(overrides)
        return StudyDesign.from_dict(d)
    if not args.preset:
        raise ConfigError("pass --preset or --design")
    return preset(args.preset, **overrides)


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset == "beijing":
        seed = 7 if args.seed is None else args.seed
        write_beijing_standin(out / "data.csv", out / "graph.txt", seed)
        _dump({"preset": "beijing", "seed": seed}, out / "simulate.json")
        print(f"wrote {out}")
        return 0
    design = _design_from_args(args)
    rep = args.replicate
    sim = simulate_dataset(design, RngStream(design.seed, (rep, 0)).generator())
    write_edge_list(sim.graph, out / "graph.txt")
    write_dataset(sim.dataset, out / "data.csv")
    side = {"design": design.to_dict(), "replicate": rep, "lod": sim.dataset.lod,
            "censored": int(sim.dataset.n_censored - sim.dataset.count(Status.MISSING)), "missing": int(sim.dataset.count(Status.MISSING)),
            "y_true": [float(v) for v in sim.y_true]}
    if sim.y_holdout is not None:
        side["y_holdout"] = [float(v) for v in sim.y_holdout]
        side["X_holdout"] = sim.X_holdout.tolist()
    _dump(side, out / "simulate.json")
    print(f"wrote {out} (N={sim.dataset.N}, censored {side['censored']}, missing {side['missing']})")
    return 0


def cmd_study(args) -> int:
    threads = args.threads or _default_threads()
    out = Path(args.out)
    if args.preset == "beijing":
        seed = 7 if args.seed is None else args.seed
        run = {}
        if args.iters is not None:
            run["iters"] = args.iters
        if args.burnin is not None:
            run["burnin"] = args.burnin
        report = beijing_check(out, seed, run or None, threads=threads)
        for name, ok in report["checks"].items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        return 0
    design = _design_from_args(args)

    def progress(rep):
        log.info("replicate %d / %d done", rep + 1, design.replicates)

    metrics = run_study(design, progress, threads)
    metrics.write(out)
    for name, rows in metrics.tables.items():
        print(f"[{name}]")
        if rows:
            keys = list(rows[0])
            print("  " + "  ".join(f"{k:>12s}" for k in keys))
            for r in rows:
                print("  " + "  ".join(f"{v:12.4f}" if isinstance(v, float) else f"{str(v):>12s}"
                                       for v in r.values()))
    if metrics.failures:
        print(f"{len(metrics.failures)} replicate(s) failed and were excluded")
    return 0


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="censored-areal",
                                 description="Censored spatiotemporal regression on areal graphs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one simulated dataset")
    p.add_argument("--preset", choices=sorted(PRESETS) + ["beijing"])
    p.add_argument("--design", help="study design JSON")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--replicates", type=int, help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler")
    p.add_argument("--data", help="long-format CSV")
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--bundled", choices=sorted(BUNDLED), help="use a dataset shipped with the package")
    p.add_argument("--config", help="JSON with sections data, model, run, preprocess")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all extra columns)")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--model", choices=("dagar", "sar"))
    p.add_argument("--p", type=int, help="AR order")
    p.add_argument("--backend", choices=("kron", "sparse", "dense"))
    p.add_argument("--proposal", choices=("beta", "laplace"),
                   help="independence proposal: fixed Beta laws or Beta laws fitted to a Laplace approximation")
    p.add_argument("--chains", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    p.add_argument("--center-covariates", action="store_true")
    p.add_argument("--log-response", action="store_true")
    p.add_argument("--holdout-last", type=int, help="hold out the final K times of every site")
    p.add_argument("--save-imputations", action=argparse.BooleanOptionalAction, default=True,
                   help="write imputed censored/missing values (needed by predict and diagnose)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecast future times from a fit directory")
    p.add_argument("--fit", required=True)
    p.add_argument("--future", help="CSV with covariates for the forecast times")
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("diagnose", help="diagnostics for a fit directory")
    p.add_argument("--fit", required=True)
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--permutations", type=int, default=999)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("study", help="run a simulation study")
    p.add_argument("--preset", choices=sorted(PRESETS) + ["beijing"])
    p.add_argument("--design", help="study design JSON")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="beijing preset only")
    p.add_argument("--burnin", type=int, help="beijing preset only")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CensoredArealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
