"""The four covariance priors: hyperparameters, direct sampling and
unconstrained log densities.

Each prior is a frozen dataclass; ``kind`` is its short tag. The unconstrained
parameter layouts are

======  =====================================================================
iw      spd vector of Sigma (length d(d+1)/2)
siw     spd vector of Q, then log(delta) (length d(d+1)/2 + d)
hiwht   spd vector of Sigma, then log(lambda) (length d(d+1)/2 + d)
bmmmu   log(sigma), then correlation vector of R (length d + d(d-1)/2)
======  =====================================================================

where "spd vector" is the lower Cholesky factor filled row-wise with a
log-transformed diagonal (see :func:`covprior.matrix.spd_chol`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Union

import numpy as np
from scipy import special

from . import autodiff as ad
from .distributions import (
    as_generator,
    iw_logpdf_terms,
    LOG_2PI,
    sample_inverse_wishart,
)
from .errors import DomainError, InvalidDegreesOfFreedom, LayoutMismatch
from .matrix import CorrelationMatrix, CovDecomposition, SPDMatrix, corr_chol, corr_size, decompose, spd_chol, tri_size

KINDS = ("iw", "siw", "hiwht", "bmmmu")
ALIASES = {"hiw": "hiwht", "bmm": "bmmmu", "ss": "bmmmu"}
PRIOR_STUDY = "prior_study"
POSTERIOR_INFERENCE = "posterior_inference"


def canonical_kind(kind: str) -> str:
    k = kind.strip().lower()
    k = ALIASES.get(k, k)
    if k not in KINDS:
        raise DomainError(f"unknown prior kind {kind!r}; expected one of {', '.join(KINDS)}")
    return k


def _vec(x, d, name):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 1 and d > 1:
        x = np.full(d, float(x[0]))
    if x.size != d:
        raise DomainError(f"{name} needs length {d}, got {x.size}")
    return x


def _spd(m):
    if isinstance(m, SPDMatrix):
        return m
    return SPDMatrix.from_dense(np.atleast_2d(np.asarray(m, dtype=float)))


@dataclass(frozen=True)
class IW:
    """Inverse Wishart prior ``Sigma ~ IW(nu, Lambda)``."""

    nu: float
    lambda_mat: SPDMatrix
    kind = "iw"

    def __post_init__(self):
        object.__setattr__(self, "lambda_mat", _spd(self.lambda_mat))
        if not self.nu > self.dim - 1:
            raise InvalidDegreesOfFreedom(f"IW needs nu > d - 1, got {self.nu}")

    @property
    def dim(self):
        return self.lambda_mat.dim

    @property
    def param_dim(self):
        return tri_size(self.dim)


@dataclass(frozen=True)
class SIW:
    """Scaled inverse Wishart: ``Sigma = Delta Q Delta``, ``Q ~ IW(nu, Lambda)``,
    ``log(delta_i) ~ N(b_i, xi_i^2)``."""

    nu: float
    lambda_mat: SPDMatrix
    b: np.ndarray
    xi: np.ndarray
    kind = "siw"

    def __post_init__(self):
        object.__setattr__(self, "lambda_mat", _spd(self.lambda_mat))
        d = self.dim
        object.__setattr__(self, "b", _vec(self.b, d, "b"))
        object.__setattr__(self, "xi", _vec(self.xi, d, "xi"))
        if not self.nu > d - 1:
            raise InvalidDegreesOfFreedom(f"SIW needs nu > d - 1, got {self.nu}")
        if not np.all(self.xi > 0):
            raise DomainError("xi must be positive")

    @property
    def dim(self):
        return self.lambda_mat.dim

    @property
    def param_dim(self):
        return tri_size(self.dim) + self.dim


@dataclass(frozen=True)
class HIWht:
    """Hierarchical half-t prior: ``Sigma ~ IW(nu + d - 1, 2 nu diag(lambda))``,
    ``lambda_i ~ Gamma(1/2, rate=1/xi_i^2)``."""

    nu: float
    xi: np.ndarray
    kind = "hiwht"

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        object.__setattr__(self, "xi", xi)
        if not self.nu > 0:
            raise InvalidDegreesOfFreedom(f"HIWht needs nu > 0, got {self.nu}")
        if not np.all(xi > 0):
            raise DomainError("xi must be positive")

    @property
    def dim(self):
        return self.xi.size

    @cached_property
    def gamma_shift(self):
        # normalizing constant of sum_i log Ga(lambda_i | 1/2, rate_i) + log lambda_i
        return float(0.5 * np.sum(np.log(1.0 / self.xi**2)) - self.dim * special.gammaln(0.5))

    @property
    def param_dim(self):
        return tri_size(self.dim) + self.dim


@dataclass(frozen=True)
class BMMmu:
    """Separation strategy: ``log(sigma_i) ~ N(b_i, xi_i^2)`` and ``R`` the
    correlation matrix of an ``IW(nu, I)`` draw."""

    nu: float
    b: np.ndarray
    xi: np.ndarray
    kind = "bmmmu"

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1)
        d = b.size
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "xi", _vec(self.xi, d, "xi"))
        if not self.nu > d - 1:
            raise InvalidDegreesOfFreedom(f"BMMmu needs nu > d - 1, got {self.nu}")
        if not np.all(self.xi > 0):
            raise DomainError("xi must be positive")

    @property
    def dim(self):
        return self.b.size

    @property
    def param_dim(self):
        return self.dim + corr_size(self.dim)


PriorSpec = Union[IW, SIW, HIWht, BMMmu]


@dataclass(frozen=True)
class ParamVector:
    prior_kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "prior_kind", canonical_kind(self.prior_kind))
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DomainError("parameter vector has non-finite entries")
        object.__setattr__(self, "values", v)


def default_spec(kind, d, mode=POSTERIOR_INFERENCE) -> PriorSpec:
    """Hyperparameters used in the simulation study, for prior sampling or posterior inference."""
    kind = canonical_kind(kind)
    if d < 2:
        raise DomainError("default specs are defined for d >= 2")
    if mode not in (PRIOR_STUDY, POSTERIOR_INFERENCE):
        raise DomainError(f"unknown mode {mode!r}")
    prior = mode == PRIOR_STUDY
    eye = SPDMatrix.identity(d)
    if kind == "iw":
        return IW(d + 1, eye)
    if kind == "siw":
        if prior:
            return SIW(d + 1, SPDMatrix(np.sqrt(0.8) * np.eye(d)), np.zeros(d), np.ones(d))
        return SIW(d + 1, eye, np.zeros(d), np.full(d, 100.0))
    if kind == "hiwht":
        return HIWht(2.0, np.full(d, 1.04 if prior else np.sqrt(1000.0)))
    if prior:
        return BMMmu(d + 1, np.full(d, np.log(0.72) / 2.0), np.ones(d))
    return BMMmu(d + 1, np.zeros(d), np.full(d, 100.0))


# direct sampling ----------------------------------------------------------


def prior_sample_dense(spec: PriorSpec, rng, size):
    """``size`` prior draws of Sigma as a ``(size, d, d)`` array."""
    rng = as_generator(rng)
    d = spec.dim
    if spec.kind == "iw":
        return sample_inverse_wishart(spec.nu, spec.lambda_mat, rng, size=size)
    if spec.kind == "siw":
        Q = sample_inverse_wishart(spec.nu, spec.lambda_mat, rng, size=size)
        delta = np.exp(spec.b + spec.xi * rng.standard_normal((size, d)))
        return delta[:, :, None] * Q * delta[:, None, :]
    if spec.kind == "hiwht":
        lam = rng.standard_gamma(0.5, size=(size, d)) * spec.xi**2
        # IW(nu + d - 1, I) draws rescaled by the diagonal scale sqrt(2 nu lambda)
        S = sample_inverse_wishart(spec.nu + d - 1, SPDMatrix.identity(d), rng, size=size)
        c = np.sqrt(2.0 * spec.nu * lam)
        return c[:, :, None] * S * c[:, None, :]
    Q = sample_inverse_wishart(spec.nu, SPDMatrix.identity(d), rng, size=size)
    q = np.sqrt(np.diagonal(Q, axis1=1, axis2=2))
    R = Q / (q[:, :, None] * q[:, None, :])
    sigma = np.exp(spec.b + spec.xi * rng.standard_normal((size, d)))
    return sigma[:, :, None] * R * sigma[:, None, :]


def _unit(Q):
    q = np.sqrt(np.diagonal(Q, axis1=1, axis2=2))
    return q, Q / (q[:, :, None] * q[:, None, :])


def prior_sample_marginals(spec: PriorSpec, rng, size):
    """``(sigma, R)`` for ``size`` prior draws, consuming ``rng`` exactly like :func:`prior_sample_dense`.

    Correlations come straight from the unscaled draw, so they stay finite
    when a very diffuse scale prior overflows ``sigma``.
    """
    rng = as_generator(rng)
    d = spec.dim
    if spec.kind == "iw":
        return _unit(sample_inverse_wishart(spec.nu, spec.lambda_mat, rng, size=size))
    if spec.kind == "siw":
        q, R = _unit(sample_inverse_wishart(spec.nu, spec.lambda_mat, rng, size=size))
        with np.errstate(over="ignore"):
            return np.exp(spec.b + spec.xi * rng.standard_normal((size, d))) * q, R
    if spec.kind == "hiwht":
        lam = rng.standard_gamma(0.5, size=(size, d)) * spec.xi**2
        q, R = _unit(sample_inverse_wishart(spec.nu + d - 1, SPDMatrix.identity(d), rng, size=size))
        return np.sqrt(2.0 * spec.nu * lam) * q, R
    _, R = _unit(sample_inverse_wishart(spec.nu, SPDMatrix.identity(d), rng, size=size))
    with np.errstate(over="ignore"):
        return np.exp(spec.b + spec.xi * rng.standard_normal((size, d))), R


def prior_sample(spec: PriorSpec, rng):
    """One prior draw as ``(SPDMatrix, CovDecomposition)``."""
    S = prior_sample_dense(spec, rng, 1)[0]
    m = SPDMatrix.from_dense(S)
    return m, decompose(m)


# unconstrained densities --------------------------------------------------


def _layout(spec, x):
    n = ad.ad_shape(x)
    if len(n) != 1 or n[0] != spec.param_dim:
        raise LayoutMismatch(f"{spec.kind} with d={spec.dim} needs {spec.param_dim} parameters, got shape {n}")


class CholTerms(NamedTuple):
    """Pieces of ``Sigma`` shared between the prior and the likelihood."""

    L: object
    Linv: object
    half_logdet: object


def _normal_sum(x, mean, sd):
    """Sum of independent normal log densities (generic over duals in ``x``)."""
    z = (x - mean) * (1.0 / sd)
    return -0.5 * ad.dot(z, z) - float(np.sum(np.log(sd) + 0.5 * LOG_2PI))


def chol_and_logprior(spec: PriorSpec, x):
    """Factor terms of Sigma and the unconstrained log prior at ``x``.

    Generic over duals; this is the kernel behind :func:`logprior_unconstrained`
    and :func:`params_to_cov` and the posterior targets. Returns
    ``(CholTerms, logprior)``.
    """
    _layout(spec, x)
    d = spec.dim
    m = tri_size(d)
    if spec.kind == "iw":
        L, lj, logdiag = spd_chol(x, d)
        Linv = ad.tri_inv(L)
        half_logdet = ad.sum(logdiag)
        trace = ad.sq_norm_matmul(Linv, spec.lambda_mat.chol)
        lp = iw_logpdf_terms(half_logdet, trace, _half_logdet(spec.lambda_mat), spec.nu, d) + lj
        return CholTerms(L, Linv, half_logdet), lp
    if spec.kind == "siw":
        Lq, lj, logdiag = spd_chol(x[:m], d)
        logdelta = x[m:]
        Lqinv = ad.tri_inv(Lq)
        half_logdet_q = ad.sum(logdiag)
        trace = ad.sq_norm_matmul(Lqinv, spec.lambda_mat.chol)
        lp = iw_logpdf_terms(half_logdet_q, trace, _half_logdet(spec.lambda_mat), spec.nu, d) + lj
        # log-normal density of delta times the delta Jacobian is normal in log(delta)
        lp = lp + _normal_sum(logdelta, spec.b, spec.xi)
        terms = CholTerms(
            ad.exp(logdelta)[:, None] * Lq,
            Lqinv * ad.exp(-logdelta)[None, :],
            half_logdet_q + ad.sum(logdelta),
        )
        return terms, lp
    if spec.kind == "hiwht":
        L, lj, logdiag = spd_chol(x[:m], d)
        loglam = x[m:]
        Linv = ad.tri_inv(L)
        half_logdet = ad.sum(logdiag)
        lam = ad.exp(loglam)
        sum_loglam = ad.sum(loglam)
        # scale matrix 2 nu diag(lambda): tr = sum_i 2 nu lambda_i (Sigma^-1)_ii
        trace = (2.0 * spec.nu) * ad.dot(ad.col_sq_sums(Linv), lam)
        lam_half_logdet = 0.5 * sum_loglam + 0.5 * d * np.log(2.0 * spec.nu)
        lp = iw_logpdf_terms(half_logdet, trace, lam_half_logdet, spec.nu + d - 1, d) + lj
        # Ga(1/2, rate) density of lambda plus the log(lambda) Jacobian is
        # 0.5 * log(lambda) - rate * lambda up to gamma_shift
        lp = lp + 0.5 * sum_loglam - ad.dot(lam, 1.0 / spec.xi**2) + spec.gamma_shift
        return CholTerms(L, Linv, half_logdet), lp
    logsigma = x[:d]
    Lr, lj, logdiag_r = corr_chol(x[d:], d)
    Lrinv = ad.tri_inv(Lr)
    half_logdet_r = ad.sum(logdiag_r)
    # p(R) up to a constant: -(nu + d + 1)/2 log|R| - (nu/2) sum_i log (R^-1)_ii
    rinv_diag = ad.col_sq_sums(Lrinv)
    lp_r = -(spec.nu + d + 1) * half_logdet_r - 0.5 * spec.nu * ad.sum(ad.log(rinv_diag))
    lp = lp_r + lj + _normal_sum(logsigma, spec.b, spec.xi)
    terms = CholTerms(
        ad.exp(logsigma)[:, None] * Lr,
        Lrinv * ad.exp(-logsigma)[None, :],
        half_logdet_r + ad.sum(logsigma),
    )
    return terms, lp


def _half_logdet(m: SPDMatrix):
    return m.half_logdet


def _values(spec, p):
    if isinstance(p, ParamVector):
        if p.prior_kind != spec.kind:
            raise LayoutMismatch(f"parameter vector for {p.prior_kind} used with a {spec.kind} prior")
        return p.values
    return p


def _degenerate(L):
    Lv = ad.value_of(L)
    return not (np.all(np.diagonal(Lv) > 0) and np.all(np.isfinite(Lv)))


def logprior_unconstrained(spec: PriorSpec, p):
    """Log prior of the constrained quantities plus all transform log-Jacobians.

    Returns ``-inf`` if the constrained covariance degenerates numerically.
    """
    x = _values(spec, p)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms, lp = chol_and_logprior(spec, x)
    if _degenerate(terms.L):
        return -np.inf
    return lp if ad.is_dual(lp) else float(lp)


def params_to_cov(spec: PriorSpec, p):
    """Deterministic map from unconstrained parameters to ``(Sigma, (sigma, rho))``."""
    x = np.asarray(_values(spec, p), dtype=float)
    _layout(spec, x)
    d = spec.dim
    m = tri_size(d)
    if spec.kind in ("iw", "hiwht"):
        L, _, _ = spd_chol(x[:m], d)
    elif spec.kind == "siw":
        Lq, _, _ = spd_chol(x[:m], d)
        L = np.exp(x[m:])[:, None] * Lq
    else:
        Lr, _, _ = corr_chol(x[d:], d)
        L = np.exp(x[:d])[:, None] * Lr
    sigma_mat = SPDMatrix(L)
    return sigma_mat, decompose(sigma_mat)


# serialization ------------------------------------------------------------


def spec_to_dict(spec: PriorSpec) -> dict:
    out = {"kind": spec.kind, "nu": float(spec.nu)}
    if spec.kind in ("iw", "siw"):
        out["lambda"] = spec.lambda_mat.dense.tolist()
    if spec.kind in ("siw", "bmmmu"):
        out["b"] = spec.b.tolist()
    if spec.kind != "iw":
        out["xi"] = spec.xi.tolist()
    return out


def spec_from_dict(obj: dict) -> PriorSpec:
    allowed = {"kind", "nu", "lambda", "b", "xi"}
    unknown = set(obj) - allowed
    if unknown:
        raise DomainError(f"unknown prior fields: {sorted(unknown)}")
    kind = canonical_kind(obj["kind"])
    nu = float(obj["nu"])
    if kind == "iw":
        return IW(nu, np.asarray(obj["lambda"], dtype=float))
    if kind == "siw":
        return SIW(nu, np.asarray(obj["lambda"], dtype=float), obj["b"], obj["xi"])
    if kind == "hiwht":
        return HIWht(nu, obj["xi"])
    return BMMmu(nu, obj["b"], obj["xi"])


def spec_to_json(spec: PriorSpec) -> str:
    return json.dumps(spec_to_dict(spec))


def spec_from_json(text: str) -> PriorSpec:
    return spec_from_dict(json.loads(text))
