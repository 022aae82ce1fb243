"""Censored / missing spatiotemporal responses on a balanced panel.

Cells are stored site-major (``i * T + t``), matching the Kronecker
ordering used by :mod:`censored_areal.correlation`.

CSV layout (UTF-8, header required)::

    station,time_index,y,status,lower,upper,<covariate columns...>

``status`` is one of ``obs, left, right, interval, missing``. ``lower`` and
``upper`` are read only where the status needs them (``left`` uses
``upper``, ``right`` uses ``lower``, ``interval`` both). ``station`` is a
region label from the graph file or a 1-based region index; ``time_index``
is an integer. (station, time) pairs absent from the file become missing.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DuplicateCell, ParseError, UnknownStation
from .graph import SpatialGraph, read_edge_list

log = logging.getLogger(__name__)

__all__ = [
    "Status",
    "CensorStatus",
    "CensoredDataset",
    "Partition",
    "partition",
    "apply_detection_limit",
    "load_dataset",
    "read_dataset_csv",
    "write_dataset",
    "split_holdout",
    "center_covariates",
    "log_response",
]


class Status(IntEnum):
    OBSERVED = 0
    LEFT = 1
    RIGHT = 2
    INTERVAL = 3
    MISSING = 4


_TOKENS = {"obs": Status.OBSERVED, "left": Status.LEFT, "right": Status.RIGHT,
           "interval": Status.INTERVAL, "missing": Status.MISSING}
_TOKEN_OF = {v: k for k, v in _TOKENS.items()}


@dataclass(frozen=True)
class CensorStatus:
    kind: Status
    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = self.lower, self.upper
        k = self.kind
        if k == Status.OBSERVED:
            ok = lo == hi and math.isfinite(lo)
        elif k == Status.LEFT:
            ok = lo == -math.inf and hi > lo and not math.isnan(hi)
        elif k == Status.RIGHT:
            ok = hi == math.inf and lo < hi and not math.isnan(lo)
        elif k == Status.INTERVAL:
            ok = math.isfinite(lo) and math.isfinite(hi) and lo < hi
        else:
            ok = lo == -math.inf and hi == math.inf
        if not ok:
            raise DataError(f"inconsistent bounds ({lo}, {hi}) for status {_TOKEN_OF[Status(k)]}")

    @classmethod
    def observed(cls, value: float) -> "CensorStatus":
        return cls(Status.OBSERVED, float(value), float(value))

    @classmethod
    def missing(cls) -> "CensorStatus":
        return cls(Status.MISSING, -math.inf, math.inf)


@dataclass(frozen=True, eq=False)
class CensoredDataset:
    """Balanced panel of ``n`` sites by ``T`` times.

    ``y`` holds observed values (NaN elsewhere); ``lower``/``upper`` hold the
    interval each cell is known to lie in (equal to ``y`` when observed).
    """

    n: int
    T: int
    y: np.ndarray
    status: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    X: np.ndarray
    covariate_names: tuple[str, ...]
    site_labels: tuple[str, ...]
    time_labels: tuple[int, ...]
    lod: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.n * self.T
        y = np.asarray(self.y, dtype=float).reshape(-1)
        st = np.asarray(self.status, dtype=np.int8).reshape(-1)
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        for name, arr in (("y", y), ("status", st), ("lower", lo), ("upper", hi)):
            if arr.size != N:
                raise DataError(f"{name} has {arr.size} entries, expected n*T = {N}")
        if X.shape[0] != N:
            raise DataError(f"X has {X.shape[0]} rows, expected {N}")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")
        if len(self.covariate_names) != X.shape[1]:
            raise DataError("one covariate name per column of X")
        if len(self.site_labels) != self.n or len(self.time_labels) != self.T:
            raise DataError("label counts disagree with panel dimensions")
        obs = st == Status.OBSERVED
        if np.any(~np.isfinite(y[obs])):
            raise DataError("observed cells need finite values")
        y = np.where(obs, y, np.nan)
        lo = np.where(obs, y, lo)
        hi = np.where(obs, y, hi)
        bad = ~obs & ~(lo < hi)
        if np.any(bad):
            raise DataError(f"censored cells need lower < upper (first bad cell {int(np.flatnonzero(bad)[0])})")
        for arr in (y, st, lo, hi, X):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "status", st)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "site_labels", tuple(str(s) for s in self.site_labels))
        object.__setattr__(self, "time_labels", tuple(int(t) for t in self.time_labels))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def N(self) -> int:
        return self.n * self.T

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    @property
    def observed_mask(self) -> np.ndarray:
        return self.status == Status.OBSERVED

    @property
    def n_censored(self) -> int:
        return int(np.sum(~self.observed_mask))

    def count(self, kind: Status) -> int:
        return int(np.sum(self.status == kind))

    def cell(self, site: int, time: int) -> int:
        return site * self.T + time

    def cell_status(self, idx: int) -> CensorStatus:
        return CensorStatus(Status(int(self.status[idx])), float(self.lower[idx]), float(self.upper[idx]))

    def site_time(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx)
        return idx // self.T, idx % self.T

    def panel(self, values=None) -> np.ndarray:
        """``values`` (default ``y``) reshaped to ``(n, T)``."""
        v = self.y if values is None else np.asarray(values)
        return v.reshape(self.n, self.T)

    def replace(self, **changes) -> "CensoredDataset":
        return replace(self, **changes)

    def semantically_equal(self, other: "CensoredDataset") -> bool:
        def same(a, b):
            return np.array_equal(a, b, equal_nan=True)
        return (self.n == other.n and self.T == other.T
                and same(self.status, other.status) and same(self.y, other.y)
                and same(self.lower, other.lower) and same(self.upper, other.upper)
                and np.array_equal(self.X, other.X)
                and self.site_labels == other.site_labels and self.time_labels == other.time_labels)


@dataclass(frozen=True)
class Partition:
    """Observed cells first (scan order), then censored / missing cells."""

    obs_idx: np.ndarray
    cen_idx: np.ndarray

    @property
    def order(self) -> np.ndarray:
        return np.concatenate([self.obs_idx, self.cen_idx])

    @property
    def n_obs(self) -> int:
        return self.obs_idx.size

    @property
    def n_cen(self) -> int:
        return self.cen_idx.size


def partition(ds: CensoredDataset) -> Partition:
    obs = ds.observed_mask
    return Partition(np.flatnonzero(obs), np.flatnonzero(~obs))


def apply_detection_limit(ds: CensoredDataset, lod: float, side: str = "left") -> CensoredDataset:
    """Censor observed values at or beyond a detection limit.

    ``side="left"`` turns values ``<= lod`` into ``(-inf, lod]``;
    ``side="right"`` turns values ``>= lod`` into ``[lod, +inf)``. Cells
    that are not observed are left alone.
    """
    if math.isnan(lod):
        raise ConfigError("detection limit must not be NaN")
    st = ds.status.copy()
    lo = ds.lower.copy()
    hi = ds.upper.copy()
    y = ds.y.copy()
    obs = st == Status.OBSERVED
    if side == "left":
        hit = obs & (y <= lod)
        st[hit] = Status.LEFT
        lo[hit] = -np.inf
        hi[hit] = lod
    elif side == "right":
        hit = obs & (y >= lod)
        st[hit] = Status.RIGHT
        lo[hit] = lod
        hi[hit] = np.inf
    else:
        raise ConfigError(f"side must be 'left' or 'right', got {side!r}")
    y[hit] = np.nan
    return ds.replace(y=y, status=st, lower=lo, upper=hi, lod=float(lod))


# ----------------------------------------------------------------------------
# CSV ingestion
# ----------------------------------------------------------------------------

_FIXED_COLUMNS = ("station", "time_index", "y", "status", "lower", "upper")


def _parse_float(text: str, lineno: int, column: str, default: float | None = None) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan"):
        if default is None:
            raise ParseError(f"missing value in column {column!r}", lineno)
        return default
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} in column {column!r}", lineno) from None


def read_dataset_csv(path: str | Path, graph: SpatialGraph, covariates: list[str] | None = None,
                     intercept: bool = True) -> CensoredDataset:
    """Read the long-format CSV into a balanced panel over ``graph``'s regions."""
    names = graph.region_names()
    index_of = {name: i for i, name in enumerate(names)}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        missing_cols = [c for c in _FIXED_COLUMNS if c not in header]
        if missing_cols:
            raise ParseError(f"header lacks columns {missing_cols}", 1)
        col = {h: k for k, h in enumerate(header)}
        extra = [h for h in header if h not in _FIXED_COLUMNS]
        if covariates is None:
            covariates = extra
        unknown = [c for c in covariates if c not in col]
        if unknown:
            raise ConfigError(f"covariate columns not in file: {unknown}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            station = row[col["station"]].strip()
            if station in index_of:
                site = index_of[station]
            else:
                try:
                    site = int(station) - 1
                except ValueError:
                    raise UnknownStation(f"line {lineno}: station {station!r} is not in the graph") from None
                if not 0 <= site < graph.n:
                    raise UnknownStation(f"line {lineno}: station index {station} outside 1..{graph.n}")
            try:
                t = int(row[col["time_index"]].strip())
            except ValueError:
                raise ParseError(f"bad time_index {row[col['time_index']]!r}", lineno) from None
            token = row[col["status"]].strip().lower()
            if token not in _TOKENS:
                raise ParseError(f"unknown status {token!r}", lineno)
            kind = _TOKENS[token]
            y = lo = hi = math.nan
            if kind == Status.OBSERVED:
                y = _parse_float(row[col["y"]], lineno, "y")
                lo = hi = y
            elif kind == Status.LEFT:
                lo, hi = -math.inf, _parse_float(row[col["upper"]], lineno, "upper")
            elif kind == Status.RIGHT:
                lo, hi = _parse_float(row[col["lower"]], lineno, "lower"), math.inf
            elif kind == Status.INTERVAL:
                lo = _parse_float(row[col["lower"]], lineno, "lower")
                hi = _parse_float(row[col["upper"]], lineno, "upper")
            else:
                lo, hi = -math.inf, math.inf
            try:
                CensorStatus(kind, lo, hi)
            except DataError as exc:
                raise ParseError(str(exc), lineno) from None
            xs = [_parse_float(row[col[c]], lineno, c, default=math.nan) for c in covariates]
            records.append((site, t, kind, y, lo, hi, xs, lineno))
    if not records:
        raise ParseError("no data rows")
    t_min = min(r[1] for r in records)
    t_max = max(r[1] for r in records)
    times = list(range(t_min, t_max + 1))
    T = len(times)
    n = graph.n
    N = n * T
    y = np.full(N, np.nan)
    st = np.full(N, int(Status.MISSING), dtype=np.int8)
    lo = np.full(N, -np.inf)
    hi = np.full(N, np.inf)
    Xc = np.full((N, len(covariates)), np.nan)
    seen = np.zeros(N, dtype=bool)
    for site, t, kind, yv, lv, hv, xs, lineno in records:
        k = site * T + (t - t_min)
        if seen[k]:
            raise DuplicateCell(f"line {lineno}: station {names[site]} time {t} appears twice")
        seen[k] = True
        st[k] = kind
        y[k], lo[k], hi[k] = yv, lv, hv
        Xc[k] = xs
    if len(covariates):
        _fill_covariates(Xc, n, T, seen)
    X = np.column_stack([np.ones(N), Xc]) if intercept else Xc
    cov_names = (("intercept",) if intercept else ()) + tuple(covariates)
    if X.shape[1] == 0:
        raise ConfigError("model needs at least one covariate or an intercept")
    n_absent = int(np.sum(~seen))
    if n_absent:
        log.info("%d station/time cells absent from %s marked missing", n_absent, path)
    return CensoredDataset(n, T, y, st, lo, hi, X, cov_names, names, tuple(times))


def _fill_covariates(Xc: np.ndarray, n: int, T: int, seen: np.ndarray) -> None:
    """Fill absent covariate values: same-time mean over sites, else site mean."""
    panel = Xc.reshape(n, T, -1)
    if not np.any(np.isnan(panel)):
        return
    with np.errstate(invalid="ignore"), _quiet_nanmean():
        time_mean = np.nanmean(panel, axis=0)
        site_mean = np.nanmean(panel, axis=1)
        overall = np.nanmean(panel, axis=(0, 1))
    holes = np.argwhere(np.isnan(panel))
    for i, t, c in holes:
        v = time_mean[t, c]
        if np.isnan(v):
            v = site_mean[i, c]
        if np.isnan(v):
            v = overall[c]
        if np.isnan(v):
            raise DataError(f"covariate column {c} has no values at all")
        panel[i, t, c] = v
    log.warning("filled %d absent covariate values by cross-site means", len(holes))


class _quiet_nanmean:
    def __enter__(self):
        import warnings
        self._ctx = warnings.catch_warnings()
        self._ctx.__enter__()
        warnings.simplefilter("ignore", RuntimeWarning)

    def __exit__(self, *exc):
        return self._ctx.__exit__(*exc)


def load_dataset(data_file: str | Path, graph_file: str | Path, config: dict | None = None):
    """Read a graph edge list and a long-format data CSV.

    ``config`` may carry ``covariates`` (list of column names) and
    ``intercept`` (bool, default True).
    """
    config = dict(config or {})
    allowed = {"covariates", "intercept"}
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown dataset options {sorted(unknown)}")
    graph = read_edge_list(graph_file)
    ds = read_dataset_csv(data_file, graph, config.get("covariates"), config.get("intercept", True))
    return ds, graph


def _fmt(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        return ""
    return repr(float(v))


def write_dataset(ds: CensoredDataset, path: str | Path, graph: SpatialGraph | None = None) -> None:
    """Write every cell (including missing ones) in the long CSV layout."""
    has_intercept = ds.covariate_names[:1] == ("intercept",)
    cov_cols = list(range(1, ds.n_coef)) if has_intercept else list(range(ds.n_coef))
    header = list(_FIXED_COLUMNS) + [ds.covariate_names[c] for c in cov_cols]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            for t in range(ds.T):
                k = i * ds.T + t
                kind = Status(int(ds.status[k]))
                row = [ds.site_labels[i], ds.time_labels[t], _fmt(ds.y[k]), _TOKEN_OF[kind],
                       _fmt(ds.lower[k]) if kind in (Status.RIGHT, Status.INTERVAL) else "",
                       _fmt(ds.upper[k]) if kind in (Status.LEFT, Status.INTERVAL) else ""]
                row += [repr(float(ds.X[k, c])) for c in cov_cols]
                w.writerow(row)


# ----------------------------------------------------------------------------
# preprocessing
# ----------------------------------------------------------------------------

def _take_times(ds: CensoredDataset, times: np.ndarray) -> CensoredDataset:
    idx = (np.arange(ds.n)[:, None] * ds.T + times[None, :]).reshape(-1)
    return CensoredDataset(ds.n, times.size, ds.y[idx], ds.status[idx], ds.lower[idx], ds.upper[idx],
                           ds.X[idx], ds.covariate_names, ds.site_labels,
                           tuple(ds.time_labels[t] for t in times), ds.lod, dict(ds.extra))


def split_holdout(ds: CensoredDataset, k: int) -> tuple[CensoredDataset, CensoredDataset]:
    """Reserve the final ``k`` time points of every site as a test panel."""
    if not 0 < k < ds.T:
        raise ConfigError(f"holdout must be between 1 and T-1 = {ds.T - 1}")
    return _take_times(ds, np.arange(ds.T - k)), _take_times(ds, np.arange(ds.T - k, ds.T))


def center_covariates(ds: CensoredDataset, means: np.ndarray | None = None):
    """Subtract column means from every non-intercept covariate.

    Returns the centred dataset and the means used (pass them back in to
    centre a test panel consistently).
    """
    X = ds.X.copy()
    const = np.all(X == X[:1], axis=0)
    if means is None:
        means = np.where(const, 0.0, X.mean(axis=0))
    X = X - means
    return ds.replace(X=X), means


def log_response(ds: CensoredDataset) -> CensoredDataset:
    """Natural-log transform of the response and of every censoring bound."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(ds.y[ds.observed_mask] <= 0):
            raise DataError("log transform needs positive observed responses")
        y = np.log(ds.y)
        lo = np.where(ds.lower > 0, np.log(np.where(ds.lower > 0, ds.lower, 1.0)), -np.inf)
        hi = np.where(ds.upper > 0, np.log(np.where(ds.upper > 0, ds.upper, 1.0)), -np.inf)
    hi = np.where(np.isposinf(ds.upper), np.inf, hi)
    lod = None if ds.lod is None else (math.log(ds.lod) if ds.lod > 0 else -math.inf)
    return ds.replace(y=y, lower=lo, upper=hi, lod=lod)
