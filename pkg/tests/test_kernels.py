"""The compiled forward-mode kernels must compute the same function as the dual-number path."""

import numpy as np
import pytest

from covprior.checks import central_difference, gradient_error
from covprior.distributions import RngStream
from covprior.errors import DomainError
from covprior.likelihood import simulate_mvn, suff_stats
from covprior.priors import KINDS, POSTERIOR_INFERENCE, PRIOR_STUDY, default_spec
from covprior.samplers.posterior import Posterior
from covprior.simulation import equicorrelation


def _pair(kind, d, mode, n, seed):
    spec = default_spec(kind, d, mode)
    if n:
        data = simulate_mvn(n, None, equicorrelation(d, 0.3, 2.0), RngStream(seed))
        S = suff_stats(data)
    else:
        S = np.zeros((d, d))
    return Posterior(spec, S, n), Posterior(spec, S, n, backend="dual")


@pytest.mark.parametrize("n", [0, 15])
@pytest.mark.parametrize("mode", [PRIOR_STUDY, POSTERIOR_INFERENCE])
@pytest.mark.parametrize("d", [2, 3, 10])
@pytest.mark.parametrize("kind", KINDS)
def test_compiled_matches_dual(kind, d, mode, n):
    fast, ref = _pair(kind, d, mode, n, seed=d)
    gen = np.random.default_rng(d * 7 + n)
    for _ in range(5 if d == 10 else 20):
        x = gen.uniform(-2, 2, fast.dim)
        v1, g1 = fast(x)
        v2, g2 = ref(x)
        assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-10)
        assert np.allclose(g1, g2, rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_compiled_matches_fd(kind):
    fast, _ = _pair(kind, 3, POSTERIOR_INFERENCE, 20, seed=1)
    gen = np.random.default_rng(2)
    for _ in range(10):
        x = gen.uniform(-1, 1, fast.dim)
        _, g = fast(x)
        assert gradient_error(g, central_difference(fast.logp, x)) < 1e-5


def test_fast_property_skips_coercion():
    fast, _ = _pair("iw", 2, POSTERIOR_INFERENCE, 10, seed=3)
    x = np.array([0.1, -0.2, 0.3])
    v, g = fast.fast(x)
    assert v == fast(x)[0] and np.array_equal(g, fast(x)[1])


def test_backend_validation():
    with pytest.raises(DomainError):
        Posterior(default_spec("iw", 2), np.zeros((2, 2)), 0, backend="reverse")
    with pytest.raises(DomainError):
        Posterior(default_spec("iw", 2), np.zeros((3, 3)), 0)
