"""Spatial (SAR / DAGAR) and temporal (AR(p)) correlation structures.

Both are carried in innovation form: a coefficient matrix ``B`` and a
diagonal precision ``F`` such that the correlation matrix is
``inv((I - B).T @ diag(F) @ (I - B))``.  The spatiotemporal precision of
``sigma2 * kron(Gamma, Phi)`` is assembled from the two pairs without ever
forming a Kronecker product of dense covariances.

Vectors over the panel are ordered site-major: cell ``(i, t)`` sits at
``i * T + t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DimensionMismatch, NonStationary, NotSPD, RhoOutOfRange
from .graph import Ordering, SpatialGraph, adjacency_matrix, directed_neighbors, row_stochastic

__all__ = [
    "SpatialSpec",
    "TemporalSpec",
    "InnovationPair",
    "PrecisionFactors",
    "SpatialStructure",
    "check_stationary",
    "is_stationary",
    "ar_autocorrelation",
    "ar_correlation",
    "ar_innovation",
    "sar_innovation",
    "dagar_innovation",
    "spatial_innovation",
    "assemble_precision",
    "st_coefficients",
    "coefficients_to_matrix",
]


@dataclass(frozen=True)
class SpatialSpec:
    """Spatial model choice.

    ``kind`` is ``"sar"`` or ``"dagar"``. For SAR, ``rho`` multiplies the
    row-stochastic adjacency and must lie in (-1, 1); with
    ``raw_adjacency=True`` it multiplies the 0/1 adjacency instead and must
    lie between the reciprocals of its extreme eigenvalues. For DAGAR,
    ``rho`` lies in [0, 1). ``kappa`` is fixed at 1.
    """

    kind: str
    rho: float
    raw_adjacency: bool = False
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sar", "dagar"):
            raise ConfigError(f"unknown spatial kind {self.kind!r}")
        if self.kappa != 1.0:
            raise ConfigError("kappa is fixed at 1")


@dataclass(frozen=True)
class TemporalSpec:
    gamma: tuple[float, ...]
    T: int

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in np.atleast_1d(self.gamma)))
        if self.T < 1:
            raise ConfigError("T must be >= 1")

    @property
    def p(self) -> int:
        return len(self.gamma)


@dataclass(frozen=True, eq=False)
class InnovationPair:
    """``B`` (dense, zero diagonal) and the diagonal of ``F``.

    ``logdet_I_minus_B`` is ``log|det(I - B)|``; it is zero whenever ``B`` is
    strictly triangular under some ordering.
    """

    B: np.ndarray
    F: np.ndarray
    logdet_I_minus_B: float = 0.0

    @property
    def size(self) -> int:
        return self.B.shape[0]

    def precision(self) -> np.ndarray:
        IB = np.eye(self.size) - self.B
        return IB.T @ (self.F[:, None] * IB)

    def covariance(self) -> np.ndarray:
        """Dense inverse of :meth:`precision`."""
        IB = np.eye(self.size) - self.B
        # inv((I-B)^T F (I-B)) = inv(I-B) F^-1 inv(I-B)^T
        M = sla.solve(IB, np.diag(1.0 / np.sqrt(self.F)))
        return M @ M.T

    def logdet_precision(self) -> float:
        return float(np.sum(np.log(self.F)) + 2.0 * self.logdet_I_minus_B)


# ----------------------------------------------------------------------------
# temporal AR(p)
# ----------------------------------------------------------------------------

def _step_down(gamma: np.ndarray) -> np.ndarray:
    """Partial autocorrelations implied by AR coefficients (reverse Levinson)."""
    a = np.array(gamma, dtype=float)
    p = a.size
    kappa = np.zeros(p)
    for k in range(p, 0, -1):
        kk = a[k - 1]
        kappa[k - 1] = kk
        if abs(kk) >= 1.0:
            return kappa
        if k > 1:
            a = (a[: k - 1] + kk * a[k - 2 :: -1][: k - 1]) / (1.0 - kk * kk)
    return kappa


def is_stationary(gamma) -> bool:
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.size == 0:
        return True
    if not np.all(np.isfinite(gamma)):
        return False
    return bool(np.all(np.abs(_step_down(gamma)) < 1.0))


def check_stationary(gamma) -> None:
    """Raise :class:`NonStationary` unless every root of 1 - sum g_k z^k lies outside the unit circle."""
    if not is_stationary(gamma):
        raise NonStationary(f"AR coefficients {tuple(np.atleast_1d(gamma))} are not stationary")


def ar_autocorrelation(gamma, max_lag: int) -> np.ndarray:
    """Autocorrelations ``phi_0..phi_max_lag`` of a stationary AR(p) process.

    The first ``p`` lags solve the Yule-Walker system; later lags follow the
    recursion ``phi_k = sum_j gamma_j phi_{k-j}``.
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    check_stationary(gamma)
    p = gamma.size
    phi = np.zeros(max(max_lag, p) + 1)
    phi[0] = 1.0
    if p:
        # unknowns phi_1..phi_p; phi_k - sum_j g_j phi_{|k-j|} = 0 with phi_0 = 1
        M = np.eye(p)
        rhs = np.zeros(p)
        for k in range(1, p + 1):
            for j in range(1, p + 1):
                lag = abs(k - j)
                if lag == 0:
                    rhs[k - 1] += gamma[j - 1]
                else:
                    M[k - 1, lag - 1] -= gamma[j - 1]
        phi[1 : p + 1] = np.linalg.solve(M, rhs)
        for k in range(p + 1, phi.size):
            phi[k] = gamma @ phi[k - p : k][::-1]
    return phi[: max_lag + 1]


def ar_correlation(spec: TemporalSpec) -> np.ndarray:
    """Toeplitz correlation matrix of ``T`` consecutive AR(p) values."""
    return sla.toeplitz(ar_autocorrelation(spec.gamma, spec.T - 1))


def _durbin_levinson(phi: np.ndarray, order: int):
    """Prediction coefficients and error variances for orders 0..order.

    Returns ``coefs`` (list; ``coefs[m]`` has length ``m``) and ``v`` with
    ``v[m]`` the one-step prediction error variance using ``m`` lags.
    """
    coefs = [np.zeros(0)]
    v = np.zeros(order + 1)
    v[0] = phi[0]
    for m in range(1, order + 1):
        prev = coefs[-1]
        k = (phi[m] - prev @ phi[m - 1 : 0 : -1][: m - 1]) / v[m - 1] if m > 1 else phi[1] / v[0]
        cur = np.empty(m)
        cur[: m - 1] = prev - k * prev[::-1]
        cur[m - 1] = k
        coefs.append(cur)
        v[m] = v[m - 1] * (1.0 - k * k)
    return coefs, v


def ar_innovation(spec: TemporalSpec) -> InnovationPair:
    """Exact innovation pair of the stationary AR(p) correlation matrix.

    For ``t >= p`` the row of ``B`` holds ``gamma_1..gamma_p`` on the first
    ``p`` sub-diagonals and the innovation variance is ``1 - sum gamma_k phi_k``.
    The first ``p`` rows use the shorter-order predictors of the same process,
    so that the inverse of ``(I-B)^T F (I-B)`` is exactly the Toeplitz
    correlation (unit diagonal).
    """
    T, p = spec.T, spec.p
    gamma = np.asarray(spec.gamma)
    phi = ar_autocorrelation(gamma, max(p, 1))
    coefs, v = _durbin_levinson(phi, p)
    B = np.zeros((T, T))
    var = np.empty(T)
    for t in range(T):
        m = min(t, p)
        c = gamma if m == p else coefs[m]
        for k in range(1, m + 1):
            B[t, t - k] = c[k - 1]
        var[t] = v[m]
    if np.any(var <= 0):
        raise NonStationary("AR innovation variance is not positive")
    return InnovationPair(B, 1.0 / var, 0.0)


# ----------------------------------------------------------------------------
# spatial SAR / DAGAR
# ----------------------------------------------------------------------------

class SpatialStructure:
    """Per-graph cache: adjacency, row-stochastic weights, eigenvalues, DAG.

    Builds innovation pairs for many values of the spatial parameter without
    recomputing graph quantities.
    """

    def __init__(self, graph: SpatialGraph, kind: str, ordering: Ordering | None = None,
                 raw_adjacency: bool = False):
        if kind not in ("sar", "dagar"):
            raise ConfigError(f"unknown spatial kind {kind!r}")
        self.graph = graph
        self.kind = kind
        self.raw_adjacency = raw_adjacency
        self.ordering = ordering if ordering is not None else Ordering.natural(graph.n)
        self.A = adjacency_matrix(graph)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.A if self.raw_adjacency else row_stochastic(self.A)

    @cached_property
    def weight_eigenvalues(self) -> np.ndarray:
        # row-stochastic W is similar to the symmetric D^-1/2 A D^-1/2
        if self.raw_adjacency:
            return np.linalg.eigvalsh(self.A)
        d = self.A.sum(axis=1)
        s = 1.0 / np.sqrt(d)
        return np.linalg.eigvalsh(s[:, None] * self.A * s[None, :])

    @cached_property
    def neighborhoods(self):
        return directed_neighbors(self.graph, self.ordering)

    @property
    def n(self) -> int:
        return self.graph.n

    def rho_bounds(self) -> tuple[float, float]:
        """Open interval of admissible spatial parameters."""
        if self.kind == "dagar":
            return (0.0, 1.0)
        if not self.raw_adjacency:
            return (-1.0, 1.0)
        lam = self.weight_eigenvalues
        return (1.0 / lam[0], 1.0 / lam[-1])

    def innovation(self, rho: float) -> InnovationPair:
        if self.kind == "sar":
            return self._sar(rho)
        return self._dagar(rho)

    def _sar(self, rho: float) -> InnovationPair:
        lo, hi = self.rho_bounds()
        if not (lo < rho < hi):
            raise RhoOutOfRange(f"SAR parameter {rho} outside ({lo:.4g}, {hi:.4g})")
        W = self.weights  # raises IsolatedRegion for the row-stochastic variant
        B = rho * W
        logdet = float(np.sum(np.log(np.abs(1.0 - rho * self.weight_eigenvalues))))
        return InnovationPair(B, np.ones(self.n), logdet)

    def _dagar(self, rho: float) -> InnovationPair:
        # rho = 0 is admitted as the exact independence limit
        if not (0.0 <= rho < 1.0):
            raise RhoOutOfRange(f"DAGAR parameter {rho} outside [0, 1)")
        n = self.n
        B = np.zeros((n, n))
        F = np.ones(n)
        r2 = rho * rho
        for i, parents in enumerate(self.neighborhoods.parents):
            m = len(parents)
            if m == 0:
                continue
            denom = 1.0 + (m - 1) * r2
            B[i, list(parents)] = rho / denom
            F[i] = denom / (1.0 - r2)
        return InnovationPair(B, F, 0.0)

    def correlation(self, rho: float) -> np.ndarray:
        return self.innovation(rho).covariance()


def sar_innovation(g: SpatialGraph, spec: SpatialSpec) -> InnovationPair:
    if spec.kind != "sar":
        raise ConfigError("sar_innovation needs kind='sar'")
    return SpatialStructure(g, "sar", raw_adjacency=spec.raw_adjacency).innovation(spec.rho)


def dagar_innovation(g: SpatialGraph, ordering: Ordering | None, spec: SpatialSpec) -> InnovationPair:
    if spec.kind != "dagar":
        raise ConfigError("dagar_innovation needs kind='dagar'")
    return SpatialStructure(g, "dagar", ordering).innovation(spec.rho)


def spatial_innovation(g: SpatialGraph, spec: SpatialSpec, ordering: Ordering | None = None) -> InnovationPair:
    if spec.kind == "sar":
        return sar_innovation(g, spec)
    return dagar_innovation(g, ordering, spec)


# ----------------------------------------------------------------------------
# spatiotemporal assembly
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PrecisionFactors:
    """Innovation pair and sparse precision of ``sigma2 * kron(Gamma, Phi)``."""

    B: sp.csr_matrix
    F: np.ndarray
    Q: sp.csc_matrix
    logdet_Q: float
    n: int
    T: int
    _lu: dict = field(default_factory=dict, repr=False)

    def factor(self):
        if "lu" not in self._lu:
            # fill-reducing column ordering; Q is SPD so no pivoting is needed
            self._lu["lu"] = spla.splu(self.Q, permc_spec="MMD_AT_PLUS_A",
                                       diag_pivot_thresh=0.0,
                                       options={"SymmetricMode": True})
        return self._lu["lu"]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.factor().solve(np.asarray(b, dtype=float))

    def factor_logdet(self) -> float:
        """Log-determinant from the sparse factorization (cross-check of ``logdet_Q``)."""
        U = self.factor().U
        return float(np.sum(np.log(np.abs(U.diagonal()))))

    def check_spd(self) -> None:
        Qd = self.Q.toarray()
        if not np.allclose(Qd, Qd.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Qd).max())):
            raise NotSPD("assembled precision is not symmetric")
        try:
            np.linalg.cholesky(Qd)
        except np.linalg.LinAlgError as exc:
            raise NotSPD("assembled precision is not positive definite") from exc

    def dense(self) -> np.ndarray:
        return self.Q.toarray()


def _spatiotemporal_B(spatial: InnovationPair, temporal: InnovationPair) -> sp.csr_matrix:
    Bn = sp.csr_matrix(spatial.B)
    BT = sp.csr_matrix(temporal.B)
    In = sp.identity(spatial.size, format="csr")
    IT = sp.identity(temporal.size, format="csr")
    B = sp.kron(In, BT) + sp.kron(Bn, IT) - sp.kron(Bn, BT)
    B = sp.csr_matrix(B)
    B.eliminate_zeros()
    return B


def assemble_precision(spatial: InnovationPair, temporal: InnovationPair, sigma2: float) -> PrecisionFactors:
    """Precision of ``sigma2 * kron(Gamma, Phi)`` in spatiotemporal innovation form.

    ``B_nT = I_n (x) B_T + B_n (x) I_T - B_n (x) B_T`` and
    ``F_nT = F_n (x) F_T / sigma2``.
    """
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    if spatial.B.shape != (spatial.F.size, spatial.F.size) or temporal.B.shape != (temporal.F.size, temporal.F.size):
        raise DimensionMismatch("innovation pair B and F sizes disagree")
    n, T = spatial.size, temporal.size
    B = _spatiotemporal_B(spatial, temporal)
    F = np.kron(spatial.F, temporal.F) / sigma2
    IB = sp.identity(n * T, format="csr") - B
    Q = sp.csc_matrix(IB.T @ sp.diags(F) @ IB)
    # det(I - B_nT) = det(I-B_n)^T det(I-B_T)^n
    logdet = float(np.sum(np.log(F)) + 2.0 * (T * spatial.logdet_I_minus_B + n * temporal.logdet_I_minus_B))
    return PrecisionFactors(B, F, Q, logdet, n, T)


@dataclass(frozen=True)
class CoefficientTable:
    """Nonzero spatiotemporal coefficients ``b_(ik, jl)``.

    ``row_site, row_time`` locate the cell being regressed, ``col_site,
    col_time`` its regressor; ``klass`` is ``"A"`` (same site, earlier time),
    ``"B"`` (same time, other site) or ``"C"`` (other site, earlier time).
    """

    row_site: np.ndarray
    row_time: np.ndarray
    col_site: np.ndarray
    col_time: np.ndarray
    value: np.ndarray
    klass: np.ndarray
    n: int
    T: int

    def select(self, klass: str) -> np.ndarray:
        return self.value[self.klass == klass]


def st_coefficients(spatial: InnovationPair, temporal: InnovationPair) -> CoefficientTable:
    """Expand ``B_nT`` entrywise and label each coefficient by its class."""
    n, T = spatial.size, temporal.size
    rows = {k: [] for k in ("rs", "rt", "cs", "ct", "v", "c")}

    def add(i, j, k, l, v, c):
        rows["rs"].append(i)
        rows["rt"].append(j)
        rows["cs"].append(k)
        rows["ct"].append(l)
        rows["v"].append(v)
        rows["c"].append(c)

    Bn, BT = spatial.B, temporal.B
    tnz = [np.flatnonzero(BT[j]) for j in range(T)]
    snz = [np.flatnonzero(Bn[i]) for i in range(n)]
    for i in range(n):
        for j in range(T):
            for l in tnz[j]:
                add(i, j, i, l, BT[j, l], "A")
            for k in snz[i]:
                add(i, j, k, j, Bn[i, k], "B")
                for l in tnz[j]:
                    add(i, j, k, l, -Bn[i, k] * BT[j, l], "C")
    return CoefficientTable(
        np.array(rows["rs"], dtype=int), np.array(rows["rt"], dtype=int),
        np.array(rows["cs"], dtype=int), np.array(rows["ct"], dtype=int),
        np.array(rows["v"], dtype=float), np.array(rows["c"], dtype=object), n, T,
    )


def coefficients_to_matrix(table: CoefficientTable) -> np.ndarray:
    T = table.T
    B = np.zeros((table.n * T, table.n * T))
    np.add.at(B, (table.row_site * T + table.row_time, table.col_site * T + table.col_time), table.value)
    return B
