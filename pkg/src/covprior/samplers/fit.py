"""Posterior fits: NUTS for every prior and exact draws under the conjugate IW prior."""

from __future__ import annotations

import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..distributions import RngStream, logpdf_inverse_wishart, sample_inverse_wishart
from ..errors import ConfigError, DomainError, ZeroVariance
from ..likelihood import Dataset, suff_stats
from ..matrix import SPDMatrix, corr_chol, spd_chol, tri_size
from ..priors import IW, PriorSpec, spec_to_dict
from .diagnostics import split_rhat, summarize
from .nuts import NutsSettings, run_chain
from .posterior import Posterior

RHAT_THRESHOLD = 1.1
RERUN_SAMPLES = 2000


def rho_label(i, j) -> str:
    """Column label for the correlation of 0-based components ``i < j``: rho12, ..., rho9_10."""
    return f"rho{i + 1}{j + 1}" if j < 9 else f"rho{i + 1}_{j + 1}"


@dataclass(frozen=True)
class ChainConfig:
    num_chains: int = 3
    warmup_iters: int = 1000
    sample_iters: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10
    rerun: bool = True
    backend: str = "compiled"

    def __post_init__(self):
        if self.num_chains < 2:
            raise ConfigError("num_chains must be at least 2 for R-hat")
        if self.sample_iters < 1 or self.warmup_iters < 0:
            raise ConfigError("sample_iters must be >= 1 and warmup_iters >= 0")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ConfigError("max_tree_depth must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def nuts_settings(self) -> NutsSettings:
        return NutsSettings(target_accept=self.target_accept, max_tree_depth=self.max_tree_depth)


@dataclass
class ChainDraws:
    """Constrained draws, indexed ``[chain, iteration, ...]``."""

    sigma_mats: np.ndarray
    logpost: np.ndarray
    divergent: np.ndarray
    depth: np.ndarray

    @property
    def num_chains(self):
        return self.sigma_mats.shape[0]

    @property
    def num_iters(self):
        return self.sigma_mats.shape[1]

    @property
    def d(self):
        return self.sigma_mats.shape[-1]

    @property
    def sigma(self):
        return np.sqrt(np.diagonal(self.sigma_mats, axis1=-2, axis2=-1))

    @property
    def rho(self):
        """Correlations ``rho_ij`` for ``i < j`` in row-major order."""
        s = self.sigma
        R = self.sigma_mats / (s[..., :, None] * s[..., None, :])
        i, j = np.triu_indices(self.d, k=1)
        return R[..., i, j]

    def sigma_matrix(self, chain, it) -> SPDMatrix:
        return SPDMatrix.from_dense(self.sigma_mats[chain, it])

    def quantities(self) -> dict:
        """Name -> ``(chains, iters)`` array for sigma[i], rho[i,j], Sigma[i,j]."""
        d = self.d
        out = {}
        sig = self.sigma
        for i in range(d):
            out[f"sigma[{i + 1}]"] = sig[..., i]
        rho = self.rho
        for k, (i, j) in enumerate(zip(*np.triu_indices(d, k=1))):
            out[f"rho[{i + 1},{j + 1}]"] = rho[..., k]
        for i, j in zip(*np.triu_indices(d)):
            out[f"Sigma[{i + 1},{j + 1}]"] = self.sigma_mats[..., i, j]
        return out

    def to_csv(self) -> str:
        d = self.d
        cols = ["chain", "iter"] + [f"sigma{i + 1}" for i in range(d)]
        cols += [rho_label(i, j) for i, j in zip(*np.triu_indices(d, k=1))]
        cols += ["logpost", "divergent", "depth"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        sig, rho = self.sigma, self.rho
        for c in range(self.num_chains):
            for t in range(self.num_iters):
                vals = [f"{x:.17g}" for x in sig[c, t]] + [f"{x:.17g}" for x in rho[c, t]]
                row = [str(c), str(t)] + vals
                row += [f"{self.logpost[c, t]:.17g}", str(int(self.divergent[c, t])), str(int(self.depth[c, t]))]
                buf.write(",".join(row) + "\n")
        return buf.getvalue()


@dataclass
class FitReport:
    draws: ChainDraws
    rhat: dict
    summary: dict
    reruns_performed: int
    method: str
    spec: dict
    config: dict
    step_sizes: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def posterior_mean(self) -> dict:
        return {k: s.mean for k, s in self.summary.items()}

    @property
    def quantiles(self) -> dict:
        return {k: (s.q025, s.q500, s.q975) for k, s in self.summary.items()}

    @property
    def rhat_max(self) -> float:
        vals = [v for v in self.rhat.values() if np.isfinite(v)]
        return max(vals) if vals else float("nan")

    @property
    def divergences(self) -> int:
        return int(self.draws.divergent.sum())

    @property
    def divergence_rate(self) -> float:
        return float(self.draws.divergent.mean())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "spec": self.spec,
            "config": self.config,
            "reruns_performed": self.reruns_performed,
            "rhat": self.rhat,
            "rhat_max": self.rhat_max,
            "divergences": self.divergences,
            "step_sizes": self.step_sizes,
            "summary": {k: asdict(s) for k, s in self.summary.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _rhats(draws: ChainDraws) -> dict:
    out = {}
    for name, vals in draws.quantities().items():
        try:
            out[name] = split_rhat(vals)
        except ZeroVariance:
            # constant quantities such as rho in a 1-d fit carry no information
            out[name] = float("nan")
    return out


def constrained_batch(spec: PriorSpec, positions) -> np.ndarray:
    """Sigma for each row of unconstrained ``positions``, as a ``(N, d, d)`` array."""
    positions = np.asarray(positions, dtype=float)
    d = spec.dim
    m = tri_size(d)
    Ls = np.empty((positions.shape[0], d, d))
    for t, x in enumerate(positions):
        if spec.kind in ("iw", "hiwht"):
            L = spd_chol(x[:m], d)[0]
        elif spec.kind == "siw":
            L = np.exp(x[m:])[:, None] * spd_chol(x[:m], d)[0]
        else:
            L = np.exp(x[:d])[:, None] * corr_chol(x[d:], d)[0]
        Ls[t] = L
    S = Ls @ np.swapaxes(Ls, 1, 2)
    return 0.5 * (S + np.swapaxes(S, 1, 2))


def _nuts_draws(post: Posterior, cfg: ChainConfig, samples, stream: RngStream):
    settings = cfg.nuts_settings()
    mats, lps, divs, depths, eps = [], [], [], [], []
    for c in range(cfg.num_chains):
        rng = stream.split(c).generator()
        res = run_chain(post, post.dim, cfg.warmup_iters, samples, rng, settings)
        mats.append(constrained_batch(post.spec, res.positions))
        lps.append(res.logp)
        divs.append(res.divergent)
        depths.append(res.depth)
        eps.append(res.step_size)
    draws = ChainDraws(np.stack(mats), np.stack(lps), np.stack(divs), np.stack(depths))
    return draws, eps


def _check_data(spec, data: Dataset):
    if data.d != spec.dim:
        raise DomainError(f"data has d={data.d} but the prior has d={spec.dim}")


def nuts_fit(spec: PriorSpec, data: Dataset, cfg: ChainConfig = ChainConfig(), stream: RngStream | None = None) -> FitReport:
    """NUTS fit of the zero-mean normal model under ``spec``.

    Chain ``c`` draws from ``stream.split(attempt).split(c)``. If any R-hat
    exceeds 1.1 the fit is repeated once with 2000 draws per chain on the
    next attempt stream.
    """
    _check_data(spec, data)
    t0 = time.perf_counter()
    stream = stream or RngStream(cfg.seed)
    post = Posterior(spec, suff_stats(data), data.n, backend=cfg.backend)
    draws, eps = _nuts_draws(post, cfg, cfg.sample_iters, stream.split(0))
    rhat = _rhats(draws)
    reruns = 0
    if cfg.rerun and max((v for v in rhat.values() if not np.isnan(v)), default=1.0) > RHAT_THRESHOLD:
        draws, eps = _nuts_draws(post, cfg, RERUN_SAMPLES, stream.split(1))
        rhat = _rhats(draws)
        reruns = 1
    return FitReport(
        draws=draws,
        rhat=rhat,
        summary=summarize(draws),
        reruns_performed=reruns,
        method="nuts",
        spec=spec_to_dict(spec),
        config=asdict(cfg),
        step_sizes=[float(e) for e in eps],
        runtime_s=time.perf_counter() - t0,
    )


def conjugate_posterior(nu0, lambda0, data: Dataset) -> IW:
    """The exact posterior IW(n + nu0, Lambda0 + S) under a zero mean."""
    lam = lambda0.dense if isinstance(lambda0, SPDMatrix) else np.asarray(lambda0, dtype=float)
    return IW(nu0 + data.n, lam + suff_stats(data))


def gibbs_iw_fit(nu0, lambda0, data: Dataset, cfg: ChainConfig = ChainConfig(), stream: RngStream | None = None) -> FitReport:
    """Independent draws from the conjugate posterior, arranged as chains."""
    t0 = time.perf_counter()
    post = conjugate_posterior(nu0, lambda0, data)
    _check_data(post, data)
    stream = stream or RngStream(cfg.seed)
    mats = np.stack([
        sample_inverse_wishart(post.nu, post.lambda_mat, stream.split(c).generator(), size=cfg.sample_iters)
        for c in range(cfg.num_chains)
    ])
    # normalized log density of the exact posterior at each draw
    logpost = np.array([[logpdf_inverse_wishart(m, post.nu, post.lambda_mat) for m in chain] for chain in mats])
    draws = ChainDraws(mats, logpost, np.zeros(logpost.shape, dtype=bool), np.zeros(logpost.shape, dtype=int))
    return FitReport(
        draws=draws,
        rhat=_rhats(draws),
        summary=summarize(draws),
        reruns_performed=0,
        method="gibbs",
        spec=spec_to_dict(IW(nu0, lambda0)),
        config=asdict(cfg),
        runtime_s=time.perf_counter() - t0,
    )

