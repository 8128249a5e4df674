"""SPD and correlation matrices, Cholesky machinery and unconstraining transforms.

Covariance matrices are held by their lower Cholesky factor. Two smooth
bijections map unconstrained real vectors onto matrices:

* :func:`spd_constrain` fills a lower-triangular factor row by row and
  exponentiates its diagonal;
* :func:`corr_constrain` maps each coordinate through ``tanh`` to a canonical
  partial correlation and assembles a Cholesky factor with unit-norm rows.

Both have a generic kernel (``*_chol``) written against :mod:`covprior.autodiff`
so the samplers can differentiate through them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import autodiff as ad
from .errors import DomainError, NotPositiveDefinite

SYMMETRY_RTOL = 1e-10


def tri_size(d):
    return d * (d + 1) // 2


def corr_size(d):
    return d * (d - 1) // 2


def dim_from_tri_size(m):
    d = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if tri_size(d) != m:
        raise DomainError(f"{m} is not a triangular number")
    return d


def dim_from_corr_size(m):
    d = int(round((1 + np.sqrt(8 * m + 1)) / 2))
    if corr_size(d) != m:
        raise DomainError(f"{m} is not a valid correlation vector length")
    return d


def _symmetrized(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise DomainError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def cholesky(m):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    The input is symmetrized by averaging first; asymmetry beyond a relative
    1e-10 is rejected.
    """
    m = _symmetrized(m)
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diagonal(L) > 0) or not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("non-positive pivot")
    return L


@dataclass(frozen=True, eq=False)
class SPDMatrix:
    """Symmetric positive-definite matrix stored as ``chol @ chol.T``."""

    chol: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.chol, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise DomainError(f"Cholesky factor must be square, got {L.shape}")
        if not np.all(np.isfinite(L)):
            raise NotPositiveDefinite("Cholesky factor has non-finite entries")
        if not np.all(np.diagonal(L) > 0):
            raise NotPositiveDefinite("Cholesky factor needs a positive diagonal")
        L = np.tril(L)
        L.flags.writeable = False
        object.__setattr__(self, "chol", L)

    @classmethod
    def from_dense(cls, m):
        return cls(cholesky(m))

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    @property
    def dim(self):
        return self.chol.shape[0]

    @property
    def dense(self):
        m = self.chol @ self.chol.T
        return 0.5 * (m + m.T)

    @cached_property
    def half_logdet(self):
        return float(np.sum(np.log(np.diagonal(self.chol))))

    def logdet(self):
        return 2.0 * self.half_logdet

    def inverse(self):
        Linv = ad.tri_inv(self.chol)
        return Linv.T @ Linv

    def __eq__(self, other):
        return isinstance(other, SPDMatrix) and np.array_equal(self.chol, other.chol)

    def __repr__(self):
        return f"SPDMatrix(dim={self.dim}, dense={self.dense.tolist()!r})"

    # serialization --------------------------------------------------------

    def to_json(self):
        rows, cols = np.tril_indices(self.dim)
        return json.dumps({"dim": self.dim, "lower_chol": [float(x) for x in self.chol[rows, cols]]})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        d = int(obj["dim"])
        vals = np.asarray(obj["lower_chol"], dtype=float)
        if vals.size != tri_size(d):
            raise DomainError(f"lower_chol needs {tri_size(d)} entries, got {vals.size}")
        return cls(ad.fill_tril(vals, d))

    def to_csv(self):
        return "\n".join(",".join(f"{x:.17g}" for x in row) for row in self.dense) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [line for line in text.strip().splitlines() if line.strip() and not line.startswith("#")]
        m = np.array([[float(x) for x in line.split(",")] for line in rows])
        return cls.from_dense(m)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    entries: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.entries, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DomainError(f"correlation matrix must be square, got {R.shape}")
        R = _symmetrized(R)
        if not np.allclose(np.diagonal(R), 1.0, rtol=0, atol=1e-10):
            raise DomainError("correlation matrix needs a unit diagonal")
        np.fill_diagonal(R, 1.0)
        off = R[~np.eye(R.shape[0], dtype=bool)]
        if np.any(np.abs(off) >= 1):
            raise NotPositiveDefinite("correlations must lie in (-1, 1)")
        cholesky(R)
        R.flags.writeable = False
        object.__setattr__(self, "entries", R)

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    @property
    def dim(self):
        return self.entries.shape[0]

    def upper(self):
        """Off-diagonal entries in row-major upper-triangle order (rho_12, rho_13, ...)."""
        return self.entries[np.triu_indices(self.dim, k=1)]


@dataclass(frozen=True)
class CovDecomposition:
    """Standard deviations and correlation matrix of a covariance."""

    sigma: np.ndarray
    corr: CorrelationMatrix

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float).reshape(-1)
        if not np.all(np.isfinite(s)) or not np.all(s > 0):
            raise DomainError("standard deviations must be positive and finite")
        if s.size != self.corr.dim:
            raise DomainError("sigma length does not match the correlation matrix")
        s.flags.writeable = False
        object.__setattr__(self, "sigma", s)


def decompose(sigma_mat: SPDMatrix) -> CovDecomposition:
    L = sigma_mat.chol
    sd = np.sqrt(np.sum(L * L, axis=1))
    Lr = L / sd[:, None]
    R = Lr @ Lr.T
    np.fill_diagonal(R, 1.0)
    return CovDecomposition(sd, CorrelationMatrix(R))


def compose(dec: CovDecomposition) -> SPDMatrix:
    Lr = cholesky(dec.corr.entries)
    return SPDMatrix(dec.sigma[:, None] * Lr)


# unconstrained parameterizations ------------------------------------------


def spd_chol(v, d):
    """Cholesky factor of the SPD matrix for unconstrained ``v``.

    Generic over duals. Returns ``(L, log_jacobian, log_diag)``; the
    log-Jacobian is that of ``v`` to the d(d+1)/2 independent (lower-triangle)
    entries of ``L @ L.T``, and ``log_diag`` holds ``log L_ii``.
    """
    L = ad.fill_tril(v, d, exp_diagonal=True)
    log_diag = v[_diag_positions(d)]
    # v -> L contributes sum(log L_ii); L -> L L^T contributes d log 2 + sum (d - i) log L_ii
    logjac = ad.wsum(log_diag, _spd_jacobian_weights(d)) + d * np.log(2.0)
    return L, logjac, log_diag


@lru_cache(maxsize=None)
def _diag_positions(d):
    """Indices of the diagonal entries in a row-wise lower-triangle vector."""
    i = np.arange(d)
    return i * (i + 1) // 2 + i


@lru_cache(maxsize=None)
def _spd_jacobian_weights(d):
    return d + 1.0 - np.arange(d)


def spd_constrain(v):
    """Map an unconstrained vector of length d(d+1)/2 to ``(SPDMatrix, log_jacobian)``."""
    v = np.asarray(v, dtype=float)
    d = dim_from_tri_size(v.size)
    L, lj, _ = spd_chol(v, d)
    return SPDMatrix(L), float(lj)


def spd_unconstrain(m) -> np.ndarray:
    L = m.chol if isinstance(m, SPDMatrix) else cholesky(m)
    L = L.copy()
    d = L.shape[0]
    idx = np.arange(d)
    L[idx, idx] = np.log(L[idx, idx])
    return L[np.tril_indices(d)]


def corr_chol(v, d):
    """Cholesky factor of the correlation matrix for unconstrained ``v``.

    Returns ``(L, log_jacobian, log_diag)`` where ``log_diag`` holds
    ``log L_ii`` (so ``log|R| = 2 * sum(log_diag)``). Generic over duals.

    Row ``i`` is built from canonical partial correlations ``z_ij = tanh(v_ij)``
    as ``L_ij = z_ij * prod_{k<j} sqrt(1 - z_ik^2)``, which keeps every row at
    unit norm. The log-Jacobian is that of ``v`` to the strictly-lower entries
    of ``R = L @ L.T``.
    """
    if d == 1:
        return np.ones((1, 1)), 0.0, np.zeros(1)
    Z = ad.fill_tril(ad.tanh(v), d, strict=True)
    # log(1 - z^2) = -2 log cosh v, stable for large |v|
    W = ad.fill_tril(-2.0 * ad.logcosh(v), d, strict=True)
    C = ad.cumsum(W, axis=1) - W
    L = (Z + _eye(d)) * ad.exp(0.5 * C)
    log_diag = 0.5 * ad.diagonal(C)
    # tanh contributes log(1 - z^2); cpc -> R contributes (d - j - 2)/2 * log(1 - z^2)
    logjac = ad.wsum(W, _corr_jacobian_weights(d))
    return L, logjac, log_diag


@lru_cache(maxsize=None)
def _corr_jacobian_weights(d):
    cols = np.arange(d)[None, :]
    return np.tri(d, k=-1) * (d - cols) / 2.0


@lru_cache(maxsize=None)
def _eye(d):
    return np.eye(d)


def corr_constrain(v):
    """Map an unconstrained vector of length d(d-1)/2 to ``(CorrelationMatrix, log_jacobian)``."""
    v = np.asarray(v, dtype=float)
    d = dim_from_corr_size(v.size)
    L, lj, _ = corr_chol(v, d)
    R = L @ L.T
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R), float(lj)


def corr_unconstrain(R) -> np.ndarray:
    entries = R.entries if isinstance(R, CorrelationMatrix) else np.asarray(R, dtype=float)
    L = cholesky(entries)
    d = L.shape[0]
    out = []
    for i in range(1, d):
        remaining = 1.0
        for j in range(i):
            z = L[i, j] / np.sqrt(remaining)
            out.append(np.arctanh(np.clip(z, -1.0, 1.0)))
            remaining -= L[i, j] ** 2
    return np.array(out)
