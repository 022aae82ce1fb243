"""Linear algebra for the unit-scale covariance ``S = kron(Gamma, Phi) + psi * I``.

Three interchangeable operators expose ``logdet``, ``solve`` and
``inverse_block``:

``KronOperator``
    eigenpairs of both factors; ``S = W diag(l_s (x) l_t + psi) W^T`` with
    ``W = U_s (x) U_t``, so every solve is a pair of small matrix products.
``SparseOperator``
    ``inv(S) = Q inv(I + psi Q)`` and ``log|S| = log|I + psi Q| - log|Q|``
    from the sparse spatiotemporal precision ``Q`` (unit scale).
``DenseOperator``
    plain Cholesky of the dense matrix; a reference for small panels.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .correlation import SpatialStructure, TemporalSpec, ar_correlation, ar_innovation, assemble_precision
from .errors import ConfigError, NotSPD, NumericalFailure

__all__ = [
    "KronOperator",
    "SparseOperator",
    "DenseOperator",
    "SeparableModel",
    "BACKENDS",
]

BACKENDS = ("kron", "sparse", "dense")


def _as_columns(V):
    V = np.asarray(V, dtype=float)
    return (V[:, None], True) if V.ndim == 1 else (V, False)


class KronOperator:
    def __init__(self, lam_s, U_s, lam_t, U_t, psi: float):
        self.lam_s, self.U_s = lam_s, U_s
        self.lam_t, self.U_t = lam_t, U_t
        self.psi = float(psi)
        self.n, self.T = lam_s.size, lam_t.size
        self.N = self.n * self.T
        self.eig = np.outer(lam_s, lam_t) + psi
        if not np.all(self.eig > 0):
            raise NotSPD("covariance has non-positive eigenvalues")
        self.logdet = float(np.sum(np.log(self.eig)))

    def _apply_spectrum(self, V, fn):
        # W^T v per column as (n, T) panels, rescale, rotate back
        V, flat = _as_columns(V)
        m = V.shape[1]
        M = self.U_s.T @ V.T.reshape(m, self.n, self.T) @ self.U_t
        out = (self.U_s @ fn(M) @ self.U_t.T).reshape(m, self.N).T
        return out[:, 0] if flat else out

    def solve(self, V):
        return self._apply_spectrum(V, lambda M: M / self.eig)

    def matvec(self, V):
        return self._apply_spectrum(V, lambda M: M * self.eig)

    def sqrt_matvec(self, V):
        """``S^{1/2} v`` (symmetric square root); used to simulate."""
        return self._apply_spectrum(V, lambda M: M * np.sqrt(self.eig))

    def _rows(self, idx):
        idx = np.asarray(idx)
        i, t = idx // self.T, idx % self.T
        return (self.U_s[i][:, :, None] * self.U_t[t][:, None, :]).reshape(idx.size, self.N)

    def inverse_block(self, idx) -> np.ndarray:
        Wc = self._rows(idx)
        return (Wc / self.eig.reshape(-1)) @ Wc.T

    def dense(self) -> np.ndarray:
        W = np.kron(self.U_s, self.U_t)
        return (W * self.eig.reshape(-1)) @ W.T


class SparseOperator:
    def __init__(self, Q: sp.spmatrix, logdet_Q: float, psi: float):
        self.Q = sp.csc_matrix(Q)
        self.N = self.Q.shape[0]
        self.psi = float(psi)
        M = sp.csc_matrix(sp.identity(self.N) + psi * self.Q)
        try:
            self._lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NumericalFailure(f"sparse factorization failed: {exc}") from exc
        d = self._lu.U.diagonal()
        if np.any(d <= 0):
            raise NotSPD("I + psi Q is not positive definite")
        self.logdet = float(np.sum(np.log(d)) - logdet_Q)

    def solve(self, V):
        V = np.asarray(V, dtype=float)
        return self.Q @ self._lu.solve(V)

    def matvec(self, V):
        # S = inv(Q) + psi I
        V = np.asarray(V, dtype=float)
        return spla.spsolve(self.Q, V).reshape(V.shape) + self.psi * V

    def inverse_block(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        E = np.zeros((self.N, idx.size))
        E[idx, np.arange(idx.size)] = 1.0
        return self.solve(E)[idx]

    def dense(self) -> np.ndarray:
        return np.linalg.inv(self.Q.toarray()) + self.psi * np.eye(self.N)


class DenseOperator:
    def __init__(self, S: np.ndarray):
        self.S = np.asarray(S, dtype=float)
        self.N = self.S.shape[0]
        try:
            self._cf = sla.cho_factor(self.S, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotSPD("covariance is not positive definite") from exc
        self.logdet = float(2.0 * np.sum(np.log(np.diag(self._cf[0]))))

    def solve(self, V):
        return sla.cho_solve(self._cf, np.asarray(V, dtype=float))

    def matvec(self, V):
        return self.S @ np.asarray(V, dtype=float)

    def inverse_block(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        E = np.zeros((self.N, idx.size))
        E[idx, np.arange(idx.size)] = 1.0
        return self.solve(E)[idx]

    def dense(self) -> np.ndarray:
        return self.S


class _LRU(OrderedDict):
    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def get_or(self, key, make):
        if key in self:
            self.move_to_end(key)
            return self[key]
        value = make()
        self[key] = value
        if len(self) > self.size:
            self.popitem(last=False)
        return value


class SeparableModel:
    """Spatial structure plus AR order over a panel of ``T`` times.

    Maps ``(rho, gamma)`` to factor eigenpairs (memoized) and builds the
    requested covariance operator for any ``psi``.
    """

    def __init__(self, spatial: SpatialStructure, p: int, T: int, backend: str = "kron", cache: int = 64):
        if backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if p < 0:
            raise ConfigError("AR order must be >= 0")
        self.spatial = spatial
        self.p = int(p)
        self.T = int(T)
        self.n = spatial.n
        self.N = self.n * self.T
        self.backend = backend
        self._s_cache = _LRU(cache)
        self._t_cache = _LRU(cache)

    def with_T(self, T: int) -> "SeparableModel":
        return SeparableModel(self.spatial, self.p, T, self.backend)

    def spatial_correlation(self, rho: float) -> np.ndarray:
        return self.spatial.correlation(rho)

    def temporal_correlation(self, gamma, T: int | None = None) -> np.ndarray:
        T = self.T if T is None else T
        if self.p == 0:
            return np.eye(T)
        return ar_correlation(TemporalSpec(tuple(gamma), T))

    def spatial_eigen(self, rho: float):
        def make():
            Qs = self.spatial.innovation(rho).precision()
            mu, U = np.linalg.eigh(Qs)
            if mu[0] <= 0:
                raise NotSPD("spatial precision is not positive definite")
            return 1.0 / mu, U
        return self._s_cache.get_or(float(rho), make)

    def temporal_eigen(self, gamma):
        key = tuple(float(g) for g in np.atleast_1d(gamma)) if self.p else ()
        def make():
            lam, U = np.linalg.eigh(self.temporal_correlation(key))
            if lam[0] <= 0:
                raise NotSPD("temporal correlation is not positive definite")
            return lam, U
        return self._t_cache.get_or(key, make)

    def unit_precision(self, rho: float, gamma):
        """Sparse precision of ``kron(Gamma, Phi)``."""
        temporal = ar_innovation(TemporalSpec(tuple(gamma) if self.p else (0.0,), self.T))
        return assemble_precision(self.spatial.innovation(rho), temporal, 1.0)

    def operator(self, rho: float, psi: float, gamma, backend: str | None = None):
        backend = backend or self.backend
        if not psi > 0:
            raise ConfigError("psi must be positive")
        if backend == "kron":
            ls, Us = self.spatial_eigen(rho)
            lt, Ut = self.temporal_eigen(gamma)
            return KronOperator(ls, Us, lt, Ut, psi)
        if backend == "sparse":
            pf = self.unit_precision(rho, gamma)
            return SparseOperator(pf.Q, pf.logdet_Q, psi)
        G = self.spatial_correlation(rho)
        P = self.temporal_correlation(gamma)
        return DenseOperator(np.kron(G, P) + psi * np.eye(self.N))
