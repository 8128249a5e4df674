import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_spd
from covprior import autodiff as ad
from covprior.autodiff import Dual
from covprior.checks import central_difference, gradient_error
from covprior.errors import DomainError, NonFiniteGradient

E0 = np.array([1.0, 0.0, 0.0])


def test_exp_log_seeds():
    y = ad.exp(Dual(0.0, E0.copy()))
    assert y.value == 1.0 and np.array_equal(y.partials, E0)
    y = ad.log(Dual(1.0, E0.copy()))
    assert y.value == 0.0 and np.array_equal(y.partials, E0)


def test_composite_tanh_log():
    _, g = ad.gradient(lambda v: ad.tanh(ad.log(v[0])), np.array([2.0]))
    h = 1e-5
    fd = (np.tanh(np.log(2 + h)) - np.tanh(np.log(2 - h))) / (2 * h)
    assert abs(g[0] - fd) < 1e-8


@pytest.mark.parametrize(
    "f, x",
    [
        (lambda v: ad.sqrt(v[0] * v[1]) / (1.0 + v[0]), [1.3, 0.7]),
        (lambda v: ad.atanh(v[0] * 0.5) - v[1] ** 3, [0.4, -1.1]),
        (lambda v: 2.0 / v[0] - v[1] * 3.0 + 1.0 - v[0], [0.8, 0.2]),
        (lambda v: ad.log1p(ad.square(v[0])) + ad.logcosh(v[1]) + ad.abs(v[1]), [0.3, -2.5]),
        (lambda v: ad.sum(ad.cumsum(ad.exp(v), axis=0) * np.array([1.0, -2.0])), [0.1, 0.2]),
    ],
)
def test_scalar_ops_match_fd(f, x):
    x = np.asarray(x)
    _, g = ad.gradient(f, x)
    fd = central_difference(lambda v: float(ad.value_of(f(v))), x)
    assert np.allclose(g, fd, rtol=1e-7, atol=1e-9)


def test_gradient_examples():
    val, g = ad.gradient(lambda v: ad.sum(v * v), np.array([1.0, 2.0]))
    assert val == 5.0 and np.array_equal(g, [2.0, 4.0])
    val, g = ad.gradient(lambda v: 3.5, np.array([1.0, 2.0]))
    assert val == 3.5 and np.array_equal(g, [0.0, 0.0])


def test_domain_errors():
    with pytest.raises(DomainError):
        ad.log(Dual(-1.0, E0.copy()))
    with pytest.raises(DomainError):
        ad.sqrt(Dual(-1.0, E0.copy()))
    with pytest.raises(DomainError):
        ad.atanh(Dual(1.0, E0.copy()))


def test_nonfinite_gradient():
    # sqrt at 0: finite value, infinite slope
    with pytest.raises(NonFiniteGradient):
        ad.gradient(lambda v: ad.sqrt(v[0]), np.array([0.0]))



@pytest.mark.parametrize("d", [2, 4])
def test_matrix_ops_match_fd(gen, d):
    m = d * (d + 1) // 2
    B = random_spd(gen, d)

    def f(v):
        L = ad.fill_tril(v, d, exp_diagonal=True)
        Linv = ad.tri_inv(L)
        M = ad.matmul(Linv, B)
        return (
            ad.sum(M * M)
            + ad.sq_norm_matmul(Linv, B)
            + ad.dot(ad.col_sq_sums(L), np.arange(1.0, d + 1))
            + ad.wsum(ad.diagonal(L), np.linspace(0.5, 1.5, d))
            + ad.sum(ad.exp_diag(ad.fill_tril(v, d)))
            + ad.sum(ad.concatenate([v[:1], np.ones(2)]))
        )

    for _ in range(5):
        x = gen.uniform(-1, 1, m)
        _, g = ad.gradient(f, x)
        fd = central_difference(lambda v: float(ad.value_of(f(v))), x)
        assert gradient_error(g, fd) < 1e-7


def test_tri_inv_value(gen):
    L = np.linalg.cholesky(random_spd(gen, 5))
    assert np.allclose(ad.tri_inv(L) @ L, np.eye(5), atol=1e-12)


@given(arrays(float, 3, elements=st.floats(-2, 2)))
def test_linear_combination_gradient_property(x):
    w = np.array([0.5, -1.0, 2.0])
    _, g = ad.gradient(lambda v: ad.dot(v, w) + ad.sum(ad.exp(v)), x)
    assert np.allclose(g, w + np.exp(x), rtol=1e-12)


def test_cost_scales_with_partials(gen):
    # smoke check only: 4x the partials should not cost more than ~10x
    import time

    def f(v):
        u = v[:8]
        return ad.sum(ad.exp(u) * ad.tanh(u))

    def timed(k):
        x = gen.standard_normal(k)
        t = time.perf_counter()
        for _ in range(200):
            ad.gradient(f, x)
        return time.perf_counter() - t

    timed(16)
    assert timed(256) < 10 * timed(64) + 0.05
