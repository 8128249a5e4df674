"""Multivariate normal sampling model: data, sufficient statistics, likelihood."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .distributions import LOG_2PI, as_generator
from .errors import DomainError, ZeroVariance
from .matrix import SPDMatrix, cholesky


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations of a ``d``-vector, one per row."""

    rows: np.ndarray

    def __post_init__(self):
        r = np.array(self.rows, dtype=float)
        if r.ndim != 2:
            raise DomainError(f"dataset rows must be 2-d, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise DomainError("dataset has non-finite entries")
        r.flags.writeable = False
        object.__setattr__(self, "rows", r)

    @classmethod
    def empty(cls, d):
        return cls(np.zeros((0, d)))

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    def __eq__(self, other):
        return isinstance(other, Dataset) and np.array_equal(self.rows, other.rows)

    def to_csv(self, header=None):
        buf = io.StringIO()
        if header:
            buf.write(",".join(header) + "\n")
        for row in self.rows:
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, header=False):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if header:
            lines = lines[1:]
        if not lines:
            raise DomainError("no data rows")
        return cls(np.array([[float(x) for x in ln.split(",")] for ln in lines]))


def suff_stats(data: Dataset, mu=None) -> np.ndarray:
    """Scatter matrix ``sum_i (y_i - mu)(y_i - mu)^T`` with compensated summation."""
    d = data.d
    mu = np.zeros(d) if mu is None else np.asarray(mu, dtype=float)
    if mu.shape != (d,):
        raise DomainError(f"mu needs length {d}")
    total = np.zeros((d, d))
    comp = np.zeros((d, d))
    # Neumaier summation over observations, elementwise
    for y in data.rows - mu:
        term = np.outer(y, y)
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    S = total + comp
    return 0.5 * (S + S.T)


def scatter_factor(s_mu) -> np.ndarray:
    """A matrix ``F`` with ``F @ F.T == s_mu`` for positive semidefinite ``s_mu``."""
    s_mu = np.asarray(s_mu, dtype=float)
    try:
        return cholesky(s_mu)
    except (ValueError, np.linalg.LinAlgError):
        w, V = np.linalg.eigh(0.5 * (s_mu + s_mu.T))
        return V * np.sqrt(np.clip(w, 0.0, None))


def loglik_terms(Linv, half_logdet, s_factor, n):
    """Normal log likelihood from ``L^-1`` and ``log|Sigma| / 2`` given ``S = F @ F.T``.

    Generic over duals.
    """
    d = ad.ad_shape(Linv)[0]
    return -0.5 * n * d * LOG_2PI - n * half_logdet - 0.5 * ad.sq_norm_matmul(Linv, s_factor)


def loglik_chol(L, s_factor, n):
    """Normal log likelihood at ``Sigma = L @ L.T`` given ``S = F @ F.T``."""
    return loglik_terms(ad.tri_inv(L), ad.sum(ad.log(ad.diagonal(L))), s_factor, n)


def log_likelihood(sigma_mat: SPDMatrix, s_mu, n, d=None) -> float:
    """``-(nd/2) log 2pi - (n/2) log|Sigma| - tr(Sigma^-1 S)/2``."""
    if not isinstance(sigma_mat, SPDMatrix):
        sigma_mat = SPDMatrix.from_dense(sigma_mat)
    if d is not None and d != sigma_mat.dim:
        raise DomainError("dimension mismatch")
    return float(loglik_chol(sigma_mat.chol, scatter_factor(s_mu), n))


def simulate_mvn(n, mu, sigma_mat: SPDMatrix, rng) -> Dataset:
    d = sigma_mat.dim
    mu = np.zeros(d) if mu is None else np.asarray(mu, dtype=float)
    z = as_generator(rng).standard_normal((n, d))
    return Dataset(mu + z @ sigma_mat.chol.T)


def rescale(data: Dataset, factor) -> Dataset:
    if not factor > 0:
        raise DomainError(f"rescale factor must be positive, got {factor}")
    return Dataset(data.rows * factor)


def standardize(data: Dataset):
    """Divide each column by its sample standard deviation.

    Returns ``(standardized, factors)`` with ``standardized.rows * factors``
    reproducing the input.
    """
    sd = np.std(data.rows, axis=0, ddof=1) if data.n > 1 else np.zeros(data.d)
    for j, s in enumerate(sd):
        if not s > 0:
            raise ZeroVariance(f"column {j} has zero sample variance", index=j)
    return Dataset(data.rows / sd), sd


def center(data: Dataset) -> Dataset:
    return Dataset(data.rows - data.rows.mean(axis=0))
