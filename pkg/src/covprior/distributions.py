"""Random streams, base samplers and normalized log-densities.

Samplers draw from a :class:`numpy.random.Generator`; :class:`RngStream`
builds reproducible, non-overlapping generators from ``(seed, stream_id)``
using the counter-based Philox bit generator.

The ``*_logx`` helpers and :func:`iw_logpdf_chol` are written against
:mod:`covprior.autodiff` and are shared with the prior densities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import autodiff as ad
from .errors import DomainError, InvalidDegreesOfFreedom
from .matrix import SPDMatrix, cholesky

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible random stream.

    ``key`` records the path of parent streams so that nested splitting
    (master seed -> replicate -> chain) stays collision free.
    """

    seed: int
    stream_id: int = 0
    key: tuple = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.key):
            if not 0 <= int(v) < 2**64:
                raise DomainError("seed and stream ids must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(k) for k in self.key) + (int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def split(self, stream_id) -> "RngStream":
        """Child stream, independent of this one and of its other children."""
        return RngStream(self.seed, int(stream_id), self.key + (self.stream_id,))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected a Generator or RngStream, got {type(rng).__name__}")


def _check_dof(nu, d):
    if not nu > d - 1:
        raise InvalidDegreesOfFreedom(f"need nu > d - 1 = {d - 1}, got {nu}")


def _bartlett(nu, d, rng, size):
    """Lower-triangular Bartlett factors A with A @ A.T ~ Wishart(nu, I)."""
    A = np.zeros((size, d, d))
    rows, cols = np.tril_indices(d, k=-1)
    # chi-square with nu - i degrees of freedom as 2 * Gamma((nu - i) / 2)
    chi2 = 2.0 * rng.standard_gamma((nu - np.arange(d)) / 2.0, size=(size, d))
    idx = np.arange(d)
    A[:, idx, idx] = np.sqrt(chi2)
    A[:, rows, cols] = rng.standard_normal((size, rows.size))
    return A


def _as_chol(m):
    if isinstance(m, SPDMatrix):
        return m.chol
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return cholesky(m)


def sample_wishart(nu, scale, rng, size=None):
    """Wishart draw(s) by the Bartlett decomposition.

    Returns an :class:`SPDMatrix`, or a ``(size, d, d)`` array of dense
    matrices when ``size`` is given.
    """
    L = _as_chol(scale)
    d = L.shape[0]
    _check_dof(nu, d)
    rng = as_generator(rng)
    A = _bartlett(nu, d, rng, 1 if size is None else size)
    F = L @ A
    if size is None:
        return SPDMatrix(cholesky(F[0] @ F[0].T))
    W = F @ np.swapaxes(F, 1, 2)
    return 0.5 * (W + np.swapaxes(W, 1, 2))


def sample_inverse_wishart(nu, lambda_mat, rng, size=None):
    """Inverse-Wishart draw(s): inverse of Wishart(nu, Lambda^-1)."""
    L = _as_chol(lambda_mat)
    d = L.shape[0]
    _check_dof(nu, d)
    rng = as_generator(rng)
    A = _bartlett(nu, d, rng, 1 if size is None else size)
    # W = B A A^T B^T with B B^T = Lambda^-1, B = L^-T; so W^-1 = (L A^-T)(L A^-T)^T
    F = L @ np.swapaxes(np.linalg.inv(A), 1, 2)
    S = F @ np.swapaxes(F, 1, 2)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    if size is None:
        return SPDMatrix(cholesky(S[0]))
    return S


def iw_logpdf_terms(half_logdet, trace, lam_half_logdet, nu, d):
    """Normalized inverse-Wishart log density from its sufficient pieces.

    ``half_logdet`` is ``log|Sigma| / 2``, ``trace`` is ``tr(Lambda Sigma^-1)``
    and ``lam_half_logdet`` is ``log|Lambda| / 2``. Generic over duals.
    """
    return -(nu + d + 1) * half_logdet - 0.5 * trace + nu * lam_half_logdet + _iw_const(float(nu), int(d))


@lru_cache(maxsize=256)
def _iw_const(nu, d):
    return -0.5 * nu * d * np.log(2.0) - special.multigammaln(0.5 * nu, d)


def iw_logpdf_chol(L, nu, lam_chol, Linv=None):
    """Normalized inverse-Wishart log density at ``L @ L.T`` with scale
    ``lam_chol @ lam_chol.T``. Generic over duals in both factors."""
    d = ad.ad_shape(L)[0]
    if Linv is None:
        Linv = ad.tri_inv(L)
    M = ad.matmul(Linv, lam_chol)
    return iw_logpdf_terms(
        ad.sum(ad.log(ad.diagonal(L))),
        ad.sum(M * M),
        ad.sum(ad.log(ad.diagonal(lam_chol))),
        nu,
        d,
    )


def logpdf_inverse_wishart(sigma_mat, nu, lambda_mat):
    L = _as_chol(sigma_mat)
    C = _as_chol(lambda_mat)
    _check_dof(nu, L.shape[0])
    if C.shape != L.shape:
        raise DomainError("dimension mismatch between matrix and scale")
    return float(iw_logpdf_chol(L, nu, C))


def logpdf_scaled_inv_chi2(x, nu, s2):
    """Log density of the scaled inverse chi-square inv-chi2(nu, s2)."""
    if not (x > 0 and nu > 0 and s2 > 0):
        raise DomainError("scaled inverse chi-square needs x, nu, s2 > 0")
    h = 0.5 * nu
    return float(h * np.log(h) - special.gammaln(h) + h * np.log(s2) - (h + 1.0) * np.log(x) - nu * s2 / (2.0 * x))


def normal_logpdf(x, mean, sd):
    """Normal log density, elementwise (generic over duals in ``x``)."""
    z = (x - mean) * (1.0 / sd)
    return -0.5 * (z * z) - (np.log(sd) + 0.5 * LOG_2PI)


def lognormal_logpdf_logx(logx, b, xi):
    """Log-normal log density evaluated through ``log x`` (generic over duals)."""
    return normal_logpdf(logx, b, xi) - logx


def logpdf_lognormal(x, b, xi):
    if not (x > 0 and xi > 0):
        raise DomainError("log-normal needs x > 0 and xi > 0")
    return float(lognormal_logpdf_logx(np.log(x), b, xi))


def sample_lognormal(b, xi, rng, size=None):
    if not xi > 0:
        raise DomainError("log-normal needs xi > 0")
    return np.exp(b + xi * as_generator(rng).standard_normal(size))


def gamma_logpdf_logx(logx, shape, rate):
    """Gamma(shape, rate) log density evaluated through ``log x`` (generic over duals)."""
    return (shape - 1.0) * logx - rate * ad.exp(logx) + (shape * np.log(rate) - special.gammaln(shape))


def logpdf_gamma(x, shape, rate):
    if not (x > 0 and shape > 0 and rate > 0):
        raise DomainError("gamma needs x, shape, rate > 0")
    return float(gamma_logpdf_logx(np.log(x), shape, rate))


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draw(s) with mean ``shape / rate``."""
    if not (np.all(np.asarray(shape) > 0) and rate > 0):
        raise DomainError("gamma needs shape, rate > 0")
    return as_generator(rng).standard_gamma(shape, size=size) / rate


def logpdf_half_t(x, nu, scale):
    """Log density of the half-t with ``nu`` degrees of freedom, location 0."""
    if not (x >= 0 and nu > 0 and scale > 0):
        raise DomainError("half-t needs x >= 0, nu > 0, scale > 0")
    u = x / scale
    logt = (
        special.gammaln(0.5 * (nu + 1))
        - special.gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi)
        - 0.5 * (nu + 1) * np.log1p(u * u / nu)
    )
    return float(np.log(2.0) + logt - np.log(scale))


def logpdf_corr_marginal(rho, exponent):
    """Normalized log density of p(rho) proportional to (1 - rho^2)^exponent on (-1, 1)."""
    if not abs(rho) < 1:
        raise DomainError("correlation must lie in (-1, 1)")
    if not exponent > -1:
        raise DomainError("exponent must exceed -1 for a proper density")
    a = exponent + 1.0
    # integral of (1 - r^2)^e over (-1, 1) is 2^(2e+1) B(e+1, e+1)
    lognorm = (2.0 * exponent + 1.0) * np.log(2.0) + special.betaln(a, a)
    return float(exponent * np.log1p(-rho * rho) - lognorm)
