"""Self-checks run by ``covprior check``: gradients, push-forward and conjugacy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import autodiff as ad
from .distributions import RngStream
from .likelihood import simulate_mvn, suff_stats
from .priors import KINDS, POSTERIOR_INFERENCE, PRIOR_STUDY, default_spec, prior_sample_dense
from .samplers.diagnostics import mcse_mean, split_rhat
from .samplers.fit import ChainConfig, conjugate_posterior, constrained_batch, nuts_fit
from .samplers.nuts import NutsSettings, run_chain
from .samplers.posterior import Posterior
from .simulation import equicorrelation


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def central_difference(f, x, rel_step=1e-5):
    """Central-difference gradient with steps scaled to ``max(1, |x_k|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def gradient_error(g, fd, abs_floor=1e-8):
    """Max relative error, with an absolute floor guarding near-zero components."""
    diff = np.abs(np.asarray(g) - fd)
    scale = np.abs(fd)
    rel = np.where(diff > abs_floor, diff / np.where(scale > 0, scale, 1.0), 0.0)
    return float(np.max(rel))


def check_gradients(kind, d, points, seed, scale=1.0) -> CheckResult:
    """Dual-number gradient of the log posterior vs central differences at random points."""
    gen = RngStream(seed).split(d).split(KINDS.index(kind)).generator()
    data = simulate_mvn(20, None, equicorrelation(d, 0.5), gen)
    post = Posterior(default_spec(kind, d, POSTERIOR_INFERENCE), suff_stats(data), data.n, backend="dual")
    worst = 0.0
    for _ in range(points):
        x = scale * gen.uniform(-1.0, 1.0, size=post.dim)
        _, g = ad.gradient(post._generic, x)
        worst = max(worst, gradient_error(g, central_difference(post.logp, x)))
    return CheckResult(f"gradient {kind} d={d}", worst < 1e-5, f"max relative error {worst:.2e} over {points} points")


# Thinning per (prior, d) for the push-forward runs: ceil(1 / ESS per draw) of
# the slower of sigma1 and rho12 from pilot chains (scripts/pilot_thinning.py,
# seed 1), capped at 10 at d=10 to bound runtime.
PUSHFORWARD_THIN = {
    ("iw", 2): 14, ("siw", 2): 3, ("hiwht", 2): 9, ("bmmmu", 2): 1,
    ("iw", 10): 10, ("siw", 10): 3, ("hiwht", 10): 10, ("bmmmu", 10): 5,
}


@dataclass
class PushforwardRun:
    kind: str
    d: int
    mcmc: tuple
    direct: tuple
    thin: int
    divergences: int
    transitions: int
    rhat_max: float


def _marginals(S):
    s = np.sqrt(np.diagonal(S, axis1=-2, axis2=-1))
    return s[..., 0], S[..., 0, 1] / (s[..., 0] * s[..., 1])


def pushforward_draws(kind, d, draws, seed, warmup=1000, thin=None, chains=4) -> PushforwardRun:
    """NUTS draws of (sigma1, rho12) from the prior-only target and matching direct prior draws."""
    spec = default_spec(kind, d, PRIOR_STUDY)
    thin = thin or PUSHFORWARD_THIN.get((kind, d), 5)
    stream = RngStream(seed).split(3).split(d).split(KINDS.index(kind))
    post = Posterior(spec, np.zeros((d, d)), 0)
    per_chain = -(-draws // chains)
    mats, div = [], 0
    for c in range(chains):
        res = run_chain(post, post.dim, warmup, per_chain * thin, stream.split(c).generator(), NutsSettings())
        mats.append(constrained_batch(spec, res.positions[thin - 1::thin]))
        div += int(np.sum(res.divergent))
    sig, rho = _marginals(np.stack(mats))
    rhat = max(split_rhat(np.log(sig)), split_rhat(rho))
    direct = prior_sample_dense(spec, stream.split(chains).generator(), draws)
    return PushforwardRun(
        kind, d, (sig.reshape(-1)[:draws], rho.reshape(-1)[:draws]), _marginals(direct),
        thin, div, chains * per_chain * thin, float(rhat),
    )


def check_pushforward(kind, d, draws, seed, alpha=0.01, **kw) -> CheckResult:
    run = pushforward_draws(kind, d, draws, seed, **kw)
    (s_m, r_m), (s_d, r_d) = run.mcmc, run.direct
    p_s = stats.ks_2samp(s_m, s_d).pvalue
    p_r = stats.ks_2samp(r_m, r_d).pvalue
    return CheckResult(
        f"push-forward {kind} d={d}",
        p_s > alpha and p_r > alpha,
        f"KS p-values sigma1={p_s:.3f} rho12={p_r:.3f} ({draws} vs {draws}, thin {run.thin})",
    )


def check_conjugacy(datasets, seed, cfg: ChainConfig | None = None) -> CheckResult:
    """NUTS under IW vs the exact conjugate posterior mean, per Sigma component."""
    cfg = cfg or ChainConfig(seed=seed)
    worst = 0.0
    for k in range(datasets):
        gen = RngStream(seed).split(4).split(k).generator()
        data = simulate_mvn(50, None, equicorrelation(2, gen.uniform(-0.8, 0.8)), gen)
        exact = conjugate_posterior(3.0, np.eye(2), data).lambda_mat.dense / (50 + 3 - 2 - 1)
        rep = nuts_fit(default_spec("iw", 2), data, cfg, RngStream(seed).split(5).split(k))
        q = rep.draws.quantities()
        for name, (i, j) in (("Sigma[1,1]", (0, 0)), ("Sigma[1,2]", (0, 1)), ("Sigma[2,2]", (1, 1))):
            z = abs(q[name].mean() - exact[i, j]) / mcse_mean(q[name])
            worst = max(worst, z)
    return CheckResult("conjugacy IW", worst < 3.0, f"max |z| = {worst:.2f} over {datasets} datasets")


def run_checks(seed=0, quick=True, progress=None) -> list:
    """The gradient, push-forward and conjugacy checks; ``quick`` uses smaller sizes."""
    out = []

    def add(r):
        out.append(r)
        if progress:
            progress(r)

    points = (10, 2) if quick else (100, 10)
    for kind in KINDS:
        add(check_gradients(kind, 2, points[0], seed))
        add(check_gradients(kind, 10, points[1], seed))
    draws = 1000 if quick else 5000
    for kind in KINDS:
        add(check_pushforward(kind, 2, draws, seed))
    add(check_conjugacy(2 if quick else 20, seed))
    return out
