import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from conftest import random_spd
from covprior.distributions import RngStream
from covprior.errors import DomainError, ZeroVariance
from covprior.likelihood import (
    Dataset,
    center,
    log_likelihood,
    rescale,
    simulate_mvn,
    standardize,
    suff_stats,
)
from covprior.matrix import SPDMatrix


def test_suff_stats_examples():
    assert np.array_equal(suff_stats(Dataset([[1.0, 0.0], [0.0, 1.0]])), np.eye(2))
    y = np.array([[0.3, -1.2]])
    assert np.array_equal(suff_stats(Dataset(y), mu=y[0]), np.zeros((2, 2)))


def test_suff_stats_naive_loop(gen):
    rows = gen.standard_normal((50, 10)) * 3 + 1
    mu = gen.standard_normal(10)
    naive = np.zeros((10, 10))
    for r in rows:
        for i in range(10):
            for j in range(10):
                naive[i, j] += (r[i] - mu[i]) * (r[j] - mu[j])
    assert np.max(np.abs(suff_stats(Dataset(rows), mu) - naive)) < 1e-10


def test_suff_stats_compensated_large_offset():
    # values near 1e8 with tiny spread: plain summation loses the small terms
    rows = np.array([[1e8, 1.0], [1.0, 1e-8], [-1e8, 1.0]])
    S = suff_stats(Dataset(rows))
    naive = sum(np.outer(r, r) for r in rows)
    assert naive[0, 1] != 1e-8
    assert S[0, 1] == 1e-8


def test_loglik_examples():
    assert log_likelihood(SPDMatrix.identity(2), np.zeros((2, 2)), 1) == pytest.approx(-np.log(2 * np.pi), abs=1e-15)
    assert -np.log(2 * np.pi) == pytest.approx(-1.837877, abs=1e-6)


def test_loglik_scalar_reduction(gen):
    y = gen.standard_normal(7) * 1.7
    S = suff_stats(Dataset(y[:, None]))
    assert log_likelihood(np.array([[2.3]]), S, 7) == pytest.approx(stats.norm(0, np.sqrt(2.3)).logpdf(y).sum(), abs=1e-12)


def test_loglik_per_row_oracle(gen):
    for d in (2, 5, 10):
        sigma = random_spd(gen, d)
        rows = gen.standard_normal((30, d))
        expected = stats.multivariate_normal(np.zeros(d), sigma).logpdf(rows).sum()
        assert log_likelihood(sigma, suff_stats(Dataset(rows)), 30) == pytest.approx(expected, abs=1e-8)


def test_loglik_maximized_at_mle(gen):
    rows = simulate_mvn(40, None, SPDMatrix.from_dense([[1.0, 0.6], [0.6, 2.0]]), gen).rows
    S = suff_stats(Dataset(rows))
    best = log_likelihood(S / 40, S, 40)
    for _ in range(100):
        E = gen.standard_normal((2, 2)) * 0.05
        cand = S / 40 + 0.5 * (E + E.T)
        if np.all(np.linalg.eigvalsh(cand) > 0):
            assert log_likelihood(cand, S, 40) <= best


def test_simulate_mvn():
    sigma = SPDMatrix.from_dense([[1.0, 0.99], [0.99, 1.0]])
    data = simulate_mvn(100_000, None, sigma, RngStream(1))
    emp = np.cov(data.rows.T, bias=True)
    assert emp[0, 1] / np.sqrt(emp[0, 0] * emp[1, 1]) == pytest.approx(0.99, abs=1e-3)
    # entrywise 3 MC SE using the fourth-moment variance of y_i y_j
    prods = data.rows[:, :, None] * data.rows[:, None, :]
    se = prods.std(axis=0) / np.sqrt(data.n)
    assert np.all(np.abs(prods.mean(axis=0) - sigma.dense) < 3 * se)
    iid = simulate_mvn(100_000, None, SPDMatrix.identity(2), RngStream(2))
    assert abs(np.corrcoef(iid.rows.T)[0, 1]) < 0.01
    assert simulate_mvn(5, None, sigma, RngStream(3)) == simulate_mvn(5, None, sigma, RngStream(3))


def test_empirical_covariance_rate():
    sigma = SPDMatrix.from_dense([[1.0, 0.5], [0.5, 1.0]])
    ns = [100, 400, 1600]
    errs = []
    for n in ns:
        e = [
            np.linalg.norm(suff_stats(simulate_mvn(n, None, sigma, RngStream(4).split(n).split(k))) / n - sigma.dense)
            for k in range(150)
        ]
        errs.append(np.sqrt(np.mean(np.square(e))))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope + 0.5) < 0.1


def test_rescale():
    data = simulate_mvn(50, None, SPDMatrix.identity(2), RngStream(5))
    assert rescale(data, 1.0) == data
    small = rescale(data, 0.01)
    assert np.allclose(small.rows.std(axis=0, ddof=1), 0.01 * data.rows.std(axis=0, ddof=1), rtol=1e-14)
    a = np.corrcoef(data.rows.T)[0, 1]
    b = np.corrcoef(small.rows.T)[0, 1]
    assert abs(a - b) <= 1e-15
    with pytest.raises(DomainError):
        rescale(data, 0.0)


@given(arrays(float, (12, 3), elements=st.floats(-50, 50)), st.sampled_from([0.01, 0.1, 10.0, 100.0]))
def test_suff_stats_scale_property(rows, c):
    S = suff_stats(Dataset(rows))
    S2 = suff_stats(rescale(Dataset(rows), c))
    assert np.allclose(S2, c * c * S, rtol=1e-12, atol=1e-12 * c * c * max(1.0, np.max(np.abs(S))))


def test_standardize():
    rng = np.random.default_rng(6)
    base = rng.standard_normal((40, 3))
    base = base / base.std(axis=0, ddof=1)
    out, f = standardize(Dataset(base))
    assert np.allclose(f, 1.0, rtol=1e-14)
    scaled = base.copy()
    scaled[:, 1] *= 100
    out2, f2 = standardize(Dataset(scaled))
    assert f2[1] == pytest.approx(100.0, rel=1e-14)
    assert np.allclose(out2.rows, out.rows, rtol=1e-14, atol=1e-15)
    assert np.allclose(out2.rows * f2, scaled, rtol=1e-14)
    assert np.max(np.abs(np.corrcoef(out2.rows.T) - np.corrcoef(scaled.T))) <= 2e-15


def test_standardize_zero_variance():
    rows = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
    with pytest.raises(ZeroVariance) as exc:
        standardize(Dataset(rows))
    assert exc.value.index == 1


def test_center():
    out = center(Dataset([[1.0, 2.0], [3.0, 6.0]]))
    assert np.array_equal(out.rows, [[-1.0, -2.0], [1.0, 2.0]])


def test_dataset_csv_roundtrip(gen):
    data = Dataset(gen.standard_normal((4, 3)))
    assert Dataset.from_csv(data.to_csv()) == data
    assert Dataset.from_csv(data.to_csv(header=["a", "b", "c"]), header=True) == data
    with pytest.raises(DomainError):
        Dataset([[1.0, np.inf]])
