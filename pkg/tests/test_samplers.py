import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covprior.distributions import RngStream
from covprior.errors import ConfigError, DomainError, ZeroVariance
from covprior.likelihood import Dataset, simulate_mvn, suff_stats
from covprior.matrix import SPDMatrix
from covprior.priors import default_spec
from covprior.samplers import (
    ChainConfig,
    ChainDraws,
    conjugate_posterior,
    effective_sample_size,
    gibbs_iw_fit,
    mcse_mean,
    nuts_fit,
    run_chain,
    split_rhat,
    summarize,
)
from covprior.samplers.diagnostics import summarize_values
from covprior.samplers.fit import rho_label
from covprior.samplers.nuts import NutsSettings, adaptation_windows
from covprior.simulation import equicorrelation

QUICK = ChainConfig(warmup_iters=300, sample_iters=300, seed=11)


# diagnostics ---------------------------------------------------------------


def test_split_rhat_iid_chains():
    g = np.random.default_rng(0)
    r = split_rhat(g.standard_normal((2, 5000)))
    assert 0.99 <= r <= 1.05


def test_split_rhat_separated_means():
    g = np.random.default_rng(1)
    chains = g.standard_normal((2, 1000)) + np.array([[0.0], [5.0]])
    assert split_rhat(chains) > 1.5


def test_split_rhat_oracle():
    # direct evaluation of the half-chain formula
    g = np.random.default_rng(2)
    x = g.standard_normal((3, 101)) + g.standard_normal((3, 1))
    halves = [c[:50] for c in x] + [c[-50:] for c in x]
    m = 50
    means = [np.mean(h) for h in halves]
    W = np.mean([np.var(h, ddof=1) for h in halves])
    B = m * np.var(means, ddof=1)
    expected = np.sqrt(((m - 1) / m * W + B / m) / W)
    assert split_rhat(x) == pytest.approx(expected, rel=1e-13)


def test_split_rhat_errors():
    with pytest.raises(ZeroVariance):
        split_rhat(np.full((2, 10), 3.0))
    with pytest.raises(DomainError):
        split_rhat(np.zeros((1, 10)))
    with pytest.raises(DomainError):
        split_rhat([np.zeros(10), np.zeros(9)])
    with pytest.raises(DomainError):
        split_rhat(np.ones((2, 3)))


def test_ess_and_mcse():
    g = np.random.default_rng(3)
    iid = g.standard_normal((4, 2000))
    assert 6000 < effective_sample_size(iid) < 10000
    # AR(1) with phi = 0.9 has ESS near n (1 - phi) / (1 + phi)
    ar = np.zeros((4, 4000))
    e = g.standard_normal((4, 4000))
    for t in range(1, 4000):
        ar[:, t] = 0.9 * ar[:, t - 1] + e[:, t]
    ess = effective_sample_size(ar)
    assert 0.6 * 16000 / 19 < ess < 1.5 * 16000 / 19
    assert mcse_mean(iid) == pytest.approx(iid.std(ddof=1) / np.sqrt(effective_sample_size(iid)))


def test_summarize_values_examples():
    s = summarize_values([2.5])
    assert s.mean == 2.5 and s.q025 == 2.5 and s.q975 == 2.5
    assert summarize_values([-1.7, 1.7]).mean == 0.0
    with pytest.raises(DomainError):
        summarize_values([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60))
def test_summarize_values_naive_oracle(vals):
    s = summarize_values(vals)
    v = sorted(vals)

    def q(p):
        h = (len(v) - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, len(v) - 1)
        return v[lo] + (h - lo) * (v[hi] - v[lo])

    assert s.mean == pytest.approx(sum(vals) / len(vals), abs=1e-9)
    for got, p in ((s.q025, 0.025), (s.q500, 0.5), (s.q975, 0.975)):
        assert got == pytest.approx(q(p), abs=1e-9)


def _draws(mats):
    mats = np.asarray(mats)
    shape = mats.shape[:2]
    return ChainDraws(mats, np.zeros(shape), np.zeros(shape, bool), np.zeros(shape, int))


def test_summarize_quantities():
    mats = np.array([[[[4.0, 3.0], [3.0, 9.0]]] * 2] * 2)
    out = summarize(_draws(mats))
    assert set(out) == {"sigma[1]", "sigma[2]", "rho[1,2]", "Sigma[1,1]", "Sigma[1,2]", "Sigma[2,2]"}
    assert out["sigma[2]"].mean == 3.0
    assert out["rho[1,2]"].mean == pytest.approx(0.5)


def test_rho_label():
    assert rho_label(0, 1) == "rho12" and rho_label(7, 8) == "rho89" and rho_label(0, 9) == "rho1_10"


# adaptation windows ----------------------------------------------------------


def test_adaptation_windows_default():
    assert adaptation_windows(1000) == [(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]


@given(st.integers(0, 5000))
def test_adaptation_windows_property(w):
    win = adaptation_windows(w)
    if w < 20:
        assert win == []
        return
    assert all(a < b for a, b in win)
    assert all(win[i][1] == win[i + 1][0] for i in range(len(win) - 1))
    assert win[-1][1] <= w and win[0][0] >= 0


# samplers --------------------------------------------------------------------


def test_nuts_standard_normal():
    def target(x):
        return -0.5 * float(x @ x), -x

    res = [run_chain(target, 2, 500, 4000, RngStream(5).split(c).generator()) for c in range(4)]
    pos = np.stack([r.positions for r in res])
    for k in range(2):
        x = pos[:, :, k]
        assert abs(x.mean()) < 3 * mcse_mean(x)
        # variance of x^2 draws: mean should be 1 within 3 MC SE
        assert abs((x**2).mean() - 1.0) < 3 * mcse_mean(x**2)
    assert not any(r.divergent.any() for r in res)


def test_nuts_deterministic():
    def target(x):
        return -0.5 * float(x @ x) - float(np.sum(x)) ** 2 / 4, -x - np.sum(x) / 2

    a = run_chain(target, 3, 100, 50, RngStream(6).generator())
    b = run_chain(target, 3, 100, 50, RngStream(6).generator())
    assert np.array_equal(a.positions, b.positions) and a.step_size == b.step_size


def test_gibbs_iw_example():
    # S = I with n = 10: E[Sigma | y] = (I + I) / (13 - 3) = 0.2 I
    data = Dataset(np.vstack([np.sqrt(5.0) * np.eye(2), np.zeros((8, 2))]))
    assert np.allclose(suff_stats(data), 10 * np.eye(2) / 2)
    post = conjugate_posterior(3.0, np.eye(2), Dataset(np.vstack([np.eye(2), np.zeros((8, 2))])))
    assert post.nu == 13 and np.allclose(post.lambda_mat.dense, 2 * np.eye(2))
    rep = gibbs_iw_fit(3.0, np.eye(2), Dataset(np.vstack([np.eye(2), np.zeros((8, 2))])),
                       ChainConfig(num_chains=2, sample_iters=25_000, seed=1))
    q = rep.draws.quantities()
    for name, exact in (("Sigma[1,1]", 0.2), ("Sigma[1,2]", 0.0), ("Sigma[2,2]", 0.2)):
        assert abs(q[name].mean() - exact) < 3 * mcse_mean(q[name])
    assert rep.reruns_performed == 0 and rep.method == "gibbs"


def test_nuts_matches_conjugate_iw():
    data = simulate_mvn(50, None, equicorrelation(2, 0.5), RngStream(7))
    exact = conjugate_posterior(3.0, np.eye(2), data).lambda_mat.dense / (53 - 3)
    rep = nuts_fit(default_spec("iw", 2), data, ChainConfig(seed=3))
    q = rep.draws.quantities()
    for name, (i, j) in (("Sigma[1,1]", (0, 0)), ("Sigma[1,2]", (0, 1)), ("Sigma[2,2]", (1, 1))):
        assert abs(q[name].mean() - exact[i, j]) < 3 * mcse_mean(q[name])
    assert rep.rhat_max <= 1.1


def test_nuts_fit_determinism_and_report():
    data = simulate_mvn(20, None, equicorrelation(2, 0.3), RngStream(8))
    a = nuts_fit(default_spec("bmmmu", 2), data, QUICK)
    b = nuts_fit(default_spec("bmmmu", 2), data, QUICK)
    assert np.array_equal(a.draws.sigma_mats, b.draws.sigma_mats)
    assert a.to_dict() == b.to_dict()
    obj = json.loads(a.to_json())
    assert obj["method"] == "nuts" and obj["spec"]["kind"] == "bmmmu"
    assert set(obj["summary"]["rho[1,2]"]) == {"mean", "q025", "q500", "q975"}
    assert a.draws.sigma_mats.shape == (3, 300, 2, 2)
    assert all(r >= 0.99 for r in a.rhat.values())


def test_draws_csv_columns():
    data = simulate_mvn(20, None, equicorrelation(3, 0.3), RngStream(9))
    rep = nuts_fit(default_spec("iw", 3), data, ChainConfig(warmup_iters=50, sample_iters=20, seed=1, rerun=False))
    lines = rep.draws.to_csv().splitlines()
    assert lines[0] == "chain,iter,sigma1,sigma2,sigma3,rho12,rho13,rho23,logpost,divergent,depth"
    assert len(lines) == 1 + 3 * 20


def test_nuts_fit_rejects_dim_mismatch():
    with pytest.raises(DomainError):
        nuts_fit(default_spec("iw", 3), Dataset(np.zeros((4, 2))), QUICK)


def test_chain_config_validation():
    with pytest.raises(ConfigError):
        ChainConfig(num_chains=1)
    with pytest.raises(ConfigError):
        ChainConfig(target_accept=1.0)
    with pytest.raises(ConfigError):
        ChainConfig(sample_iters=0)


def test_rerun_rule_triggers():
    # one warmup iteration and tiny runs leave chains unconverged, forcing the rerun
    data = simulate_mvn(10, None, SPDMatrix.from_dense([[1e-4, 9.9e-5], [9.9e-5, 1e-4]]), RngStream(10))
    rep = nuts_fit(default_spec("iw", 2), data, ChainConfig(warmup_iters=0, sample_iters=8, seed=2))
    if rep.reruns_performed:
        assert rep.draws.num_iters == 2000
    else:
        assert rep.rhat_max <= 1.1
