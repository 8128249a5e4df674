"""Log posterior targets in the unconstrained parameterization."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .. import kernels
from ..distributions import LOG_2PI, _iw_const
from ..errors import DomainError
from ..likelihood import loglik_terms, scatter_factor
from ..priors import PriorSpec, chol_and_logprior

BACKENDS = ("compiled", "dual")


class Posterior:
    """Log posterior of Sigma under ``spec`` given a zero-mean scatter matrix.

    ``backend="compiled"`` evaluates value and gradient with the compiled
    forward-mode kernels; ``backend="dual"`` uses the generic dual-number
    path. Both compute the same function.
    """

    def __init__(self, spec: PriorSpec, scatter, n, backend="compiled"):
        if backend not in BACKENDS:
            raise DomainError(f"unknown backend {backend!r}; choose from {BACKENDS}")
        self.spec = spec
        self.n = int(n)
        self.d = spec.dim
        self.scatter = np.asarray(scatter, dtype=float)
        if self.scatter.shape != (self.d, self.d):
            raise DomainError(f"scatter matrix must be {self.d} x {self.d}")
        if self.n == 0:
            # prior-only target: an empty factor skips the trace term entirely
            self.factor = np.zeros((self.d, 0))
        else:
            self.factor = np.ascontiguousarray(scatter_factor(self.scatter))
        self.backend = backend
        self.dim = spec.param_dim
        self._lik_const = -0.5 * self.n * self.d * LOG_2PI
        self._args = self._kernel_args()

    def _kernel_args(self):
        s, d = self.spec, self.d
        tail = (self.factor, float(self.n), self._lik_const)
        if s.kind == "iw":
            const = s.nu * s.lambda_mat.half_logdet + _iw_const(float(s.nu), d)
            return kernels.iw_kernel, (d, float(s.nu), s.lambda_mat.chol.copy(), const) + tail
        if s.kind == "siw":
            const = s.nu * s.lambda_mat.half_logdet + _iw_const(float(s.nu), d) + _normal_const(s.xi)
            args = (d, float(s.nu), s.lambda_mat.chol.copy(), s.b.copy(), s.xi.copy(), const)
            return kernels.siw_kernel, args + tail
        if s.kind == "hiwht":
            nu_iw = s.nu + d - 1
            const = 0.5 * nu_iw * d * np.log(2.0 * s.nu) + _iw_const(float(nu_iw), d) + s.gamma_shift
            return kernels.hiwht_kernel, (d, float(s.nu), 1.0 / s.xi**2, const) + tail
        const = _normal_const(s.xi)
        return kernels.bmmmu_kernel, (d, float(s.nu), s.b.copy(), s.xi.copy(), const) + tail

    def _generic(self, x):
        terms, lp = chol_and_logprior(self.spec, x)
        return lp + loglik_terms(terms.Linv, terms.half_logdet, self.factor, self.n)

    def logp(self, x) -> float:
        return float(ad.value_of(self._generic(np.asarray(x, dtype=float))))

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.backend == "dual":
            return ad.gradient(self._generic, x)
        fn, args = self._args
        lp, g = fn(x, *args)
        return float(lp), g

    __call__ = value_and_grad

    @property
    def fast(self):
        """``value_and_grad`` without argument coercion, for the sampler's inner loop."""
        if self.backend == "dual":
            return self.value_and_grad
        fn, args = self._args
        return lambda x: fn(x, *args)


def _normal_const(xi):
    return -float(np.sum(np.log(xi) + 0.5 * LOG_2PI))
