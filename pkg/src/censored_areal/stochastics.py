"""Random variate kernels and densities used by the sampler.

All samplers take an explicit ``numpy.random.Generator``; chains obtain
theirs from :class:`RngStream`, which derives non-overlapping PCG64 streams
from a seed and a stream id via ``SeedSequence`` spawn keys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DegenerateRegion, DomainError, NotSPD

__all__ = [
    "RngStream",
    "TruncRegion",
    "rtruncnorm1",
    "rtruncnorm",
    "rtmvn_gibbs",
    "rtmvn_gibbs_precision",
    "rscaled_inv_chisq",
    "rmvn",
    "beta_logpdf",
    "TAIL_THRESHOLD",
]

# standardized bound beyond which the inverse-CDF method gives way to rejection
TAIL_THRESHOLD = 5.0

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class RngStream:
    """Seed plus a stream key; ``stream_id`` may be an int or a tuple of ints."""

    seed: int
    stream_id: int | tuple = 0

    @property
    def key(self) -> tuple[int, ...]:
        sid = self.stream_id
        return tuple(int(v) for v in sid) if isinstance(sid, tuple) else (int(sid),)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        """A sub-stream, e.g. one per replicate inside a study."""
        return RngStream(self.seed, self.key + (int(k),))


@dataclass(frozen=True)
class TruncRegion:
    """Coordinatewise box ``lower < x < upper`` (bounds may be infinite)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise DomainError("lower and upper bounds differ in shape")
        if np.any(~(lo < hi)):
            raise DomainError("every coordinate needs lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, d: int) -> "TruncRegion":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))

    def clamp(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _tail_draw(a: float, b: float, rng: np.random.Generator) -> float:
    """Standard normal restricted to [a, b] with a >= TAIL_THRESHOLD."""
    if b - a < 1.0 / a:
        # narrow slab: uniform proposal, acceptance >= exp(-1)
        while True:
            z = a + (b - a) * rng.random()
            if rng.random() <= math.exp(0.5 * (a * a - z * z)):
                return z
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential() / lam
        if z <= b and rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
            return z


def _std_truncnorm(a: float, b: float, rng: np.random.Generator) -> float:
    """Standard normal restricted to (a, b)."""
    if a >= TAIL_THRESHOLD:
        return _tail_draw(a, b, rng)
    if b <= -TAIL_THRESHOLD:
        return -_tail_draw(-b, -a, rng)
    if a > 0.0:
        # work in the upper tail to keep precision
        pa, pb = _norm_cdf(-a), _norm_cdf(-b)
        if pa - pb <= 0.0:
            raise DegenerateRegion(f"no mass between {a} and {b}")
        u = pb + (pa - pb) * rng.random()
        z = -float(special.ndtri(u))
    else:
        pa, pb = _norm_cdf(a), _norm_cdf(b)
        if pb - pa <= 0.0:
            raise DegenerateRegion(f"no mass between {a} and {b}")
        u = pa + (pb - pa) * rng.random()
        z = float(special.ndtri(u))
    # the inverse CDF can round onto (or marginally past) a bound
    if z < a:
        z = a
    elif z > b:
        z = b
    return z


def rtruncnorm1(mu: float, sd: float, lower: float, upper: float, rng: np.random.Generator) -> float:
    """One draw from N(mu, sd^2) conditioned on (lower, upper)."""
    if not sd > 0:
        raise DomainError("sd must be positive")
    if not lower < upper:
        raise DomainError("need lower < upper")
    a = (lower - mu) / sd
    b = (upper - mu) / sd
    if not a < b:
        raise DegenerateRegion("truncation interval vanishes at this scale")
    x = mu + sd * _std_truncnorm(a, b, rng)
    if x < lower:
        x = lower
    elif x > upper:
        x = upper
    return x


def rtruncnorm(mu, sd, lower, upper, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Vector of independent truncated normal draws (broadcasting scalars)."""
    mu, sd, lower, upper = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, sd, lower, upper)))
    if size is not None:
        shape = (size,) + mu.shape if mu.ndim else (size,)
        mu, sd, lower, upper = (np.broadcast_to(v, shape) for v in (mu, sd, lower, upper))
    out = np.empty(mu.shape)
    for idx in np.ndindex(mu.shape):
        out[idx] = rtruncnorm1(mu[idx], sd[idx], lower[idx], upper[idx], rng)
    return out


def rtmvn_gibbs_precision(mu, P, lower, upper, x0, sweeps: int, rng: np.random.Generator,
                          Pr=None) -> np.ndarray:
    """Coordinate Gibbs scans for a truncated MVN given its precision matrix.

    Coordinate ``j`` is redrawn from ``N(x_j - (P (x - mu))_j / P_jj, 1 / P_jj)``
    truncated to ``(lower_j, upper_j)``. ``x0`` must lie inside the box.

    ``Pr`` may supply ``P (x0 - mu)`` directly. When the block is the
    censored part of a larger Gaussian vector, passing the censored rows of
    the full precision times the full residual makes the scan target the
    conditional law given the remaining coordinates (``mu`` is then unused).
    """
    P = np.ascontiguousarray(P, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    x = np.array(x0, dtype=float)
    d = x.size
    if Pr is None:
        Pr = P @ (x - np.asarray(mu, dtype=float))
    else:
        Pr = np.array(Pr, dtype=float)
    diag = np.diag(P).copy()
    if np.any(diag <= 0):
        raise NotSPD("precision has a non-positive diagonal")
    sd = 1.0 / np.sqrt(diag)
    for _ in range(sweeps):
        for j in range(d):
            xold = x[j]
            cm = xold - Pr[j] / diag[j]
            xj = rtruncnorm1(cm, sd[j], lo[j], hi[j], rng)
            delta = xj - xold
            if delta != 0.0:
                # P is symmetric, so row j doubles as column j
                Pr += P[j] * delta
            x[j] = xj
    return x


def _precision_from_cov(Sigma: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("covariance is not positive definite") from exc
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def rtmvn_gibbs(mu, Sigma, region: TruncRegion, sweeps: int, rng: np.random.Generator, init=None) -> np.ndarray:
    """State after ``sweeps`` Gibbs scans targeting TN(mu, Sigma, region).

    Starts from ``init`` when given, otherwise from ``mu`` clamped into the
    box (nudged off infinite-precision edges).
    """
    mu = np.asarray(mu, dtype=float)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    P = _precision_from_cov(Sigma)
    if init is None:
        x0 = region.clamp(mu)
    else:
        x0 = np.asarray(init, dtype=float)
        if not region.contains(x0):
            raise DomainError("initial point lies outside the truncation region")
    return rtmvn_gibbs_precision(mu, P, region.lower, region.upper, x0, sweeps, rng)


def rscaled_inv_chisq(df: float, scale: float, rng: np.random.Generator) -> float:
    """Scaled inverse chi-square draw ``df * scale / chi2(df)``."""
    if not (df > 0 and scale > 0):
        raise DomainError("df and scale must be positive")
    return df * scale / rng.chisquare(df)


def rmvn(mu, rng: np.random.Generator, Sigma=None, chol=None) -> np.ndarray:
    """Multivariate normal draw from a covariance or its lower Cholesky factor."""
    mu = np.asarray(mu, dtype=float)
    if chol is None:
        if Sigma is None:
            raise DomainError("need Sigma or chol")
        try:
            chol = np.linalg.cholesky(np.atleast_2d(Sigma))
        except np.linalg.LinAlgError as exc:
            raise NotSPD("covariance is not positive definite") from exc
    return mu + chol @ rng.standard_normal(mu.size)


def beta_logpdf(x: float, a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError("Beta shape parameters must be positive")
    if not 0.0 < x < 1.0:
        raise DomainError(f"Beta density evaluated outside (0, 1): {x}")
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - float(special.betaln(a, b))
