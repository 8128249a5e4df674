"""Factorial simulation study: scenario data, per-cell fits and bias tables.

For every replicate one base dataset is drawn at unit standard deviation
and every sigma scenario reuses it, scaled by sigma, so scale effects are
not confounded with sampling noise.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import RngStream
from .errors import CovPriorError, DomainError
from .likelihood import rescale, simulate_mvn, standardize
from .matrix import SPDMatrix
from .priors import KINDS, POSTERIOR_INFERENCE, canonical_kind, default_spec
from .samplers.fit import ChainConfig, nuts_fit, rho_label

IWSC = "iwsc"
STUDY_PRIORS = KINDS + (IWSC,)

RESULT_COLUMNS = (
    "d", "n", "sigma", "rho", "replicate", "prior", "param", "true_value",
    "post_mean", "post_q025", "post_q500", "post_q975", "rhat_max", "runtime_s",
)


@dataclass(frozen=True)
class DimGrid:
    n: tuple
    sigma: tuple
    rho: tuple
    replicates: int = 5


@dataclass(frozen=True)
class ScenarioGrid:
    dims: dict
    priors: tuple = KINDS

    def __post_init__(self):
        priors = tuple(study_prior(p) for p in self.priors)
        if not priors:
            raise DomainError("grid needs at least one prior")
        object.__setattr__(self, "priors", priors)
        for d, g in self.dims.items():
            if g.replicates < 1:
                raise DomainError("replicates must be >= 1")
            for rho in g.rho:
                _check_rho(d, rho)
            if any(not s > 0 for s in g.sigma) or any(int(n) < 1 for n in g.n):
                raise DomainError("sigma must be positive and n at least 1")

    def cells(self):
        """Every ``(d, n, sigma, rho, replicate, prior)`` in sorted order."""
        out = []
        for d in sorted(self.dims):
            g = self.dims[d]
            for n in g.n:
                for sigma in g.sigma:
                    for rho in g.rho:
                        for r in range(g.replicates):
                            for p in self.priors:
                                out.append((d, n, sigma, rho, r, p))
        return sorted(out, key=_cell_key)


def study_prior(kind: str) -> str:
    k = kind.strip().lower()
    return IWSC if k == IWSC else canonical_kind(k)


def default_grid(full=False, priors=KINDS) -> ScenarioGrid:
    """The bivariate scenarios with 5 replicates; ``full`` adds the 10-d cells with 2 replicates."""
    dims = {2: DimGrid((10, 50, 250), (0.01, 0.1, 1.0, 10.0, 100.0), (0.0, 0.25, 0.5, 0.75, 0.99), 5)}
    if full:
        dims[10] = DimGrid((10, 50), (0.1, 1.0, 100.0), (0.0, 0.99), 2)
    return ScenarioGrid(dims, tuple(priors))


def _check_rho(d, rho):
    if not (-1.0 / (d - 1) < rho < 1.0):
        raise DomainError(f"rho={rho} is not a valid equicorrelation for d={d}")


def equicorrelation(d, rho, sigma=1.0) -> SPDMatrix:
    _check_rho(d, rho)
    return SPDMatrix.from_dense(sigma**2 * ((1.0 - rho) * np.eye(d) + rho * np.ones((d, d))))


def _key(x) -> int:
    # stable integer key for grid values such as 0.01 or 0.99
    return int(round(float(x) * 10000))


def data_stream(master_seed, d, n, rho, replicate) -> RngStream:
    return RngStream(master_seed).split(0).split(d).split(n).split(_key(rho)).split(replicate)


def fit_stream(master_seed, d, n, sigma, rho, replicate, prior) -> RngStream:
    base = RngStream(master_seed).split(1).split(d).split(n).split(_key(sigma)).split(_key(rho))
    return base.split(replicate).split(STUDY_PRIORS.index(prior))


def generate_scenario_data(d, n, rho, replicate_seed, sigmas=()):
    """Base dataset drawn at sigma = 1, plus ``{sigma: rescaled copy}`` for each requested sigma."""
    _check_rho(d, rho)
    stream = replicate_seed if isinstance(replicate_seed, RngStream) else RngStream(int(replicate_seed))
    base = simulate_mvn(n, None, equicorrelation(d, rho), stream.generator())
    return base, {s: rescale(base, s) for s in sigmas}


@dataclass
class CellResult:
    d: int
    n: int
    sigma: float
    rho: float
    replicate: int
    prior: str
    params: dict = field(default_factory=dict)  # name -> (true, mean, q025, q500, q975)
    rhat_max: float = float("nan")
    runtime_s: float = 0.0
    divergences: int = 0
    reruns: int = 0
    error: str | None = None

    @property
    def key(self):
        return _cell_key((self.d, self.n, self.sigma, self.rho, self.replicate, self.prior))

    def post_mean(self, name):
        return self.params[name][1]

    def true_value(self, name):
        return self.params[name][0]


def _cell_key(c):
    d, n, sigma, rho, r, p = c
    return (d, n, sigma, rho, r, STUDY_PRIORS.index(p))


def fit_cell(d, n, sigma, rho, replicate, prior, cfg: ChainConfig, master_seed=None) -> CellResult:
    """Fit one scenario cell; failures are captured in ``CellResult.error``."""
    seed = cfg.seed if master_seed is None else master_seed
    res = CellResult(d, n, sigma, rho, replicate, prior)
    t0 = time.perf_counter()
    try:
        _, scaled = generate_scenario_data(d, n, rho, data_stream(seed, d, n, rho, replicate), (sigma,))
        data = scaled[sigma]
        kind = "iw" if prior == IWSC else prior
        factors = np.ones(d)
        if prior == IWSC:
            data, factors = standardize(data)
        report = nuts_fit(default_spec(kind, d, POSTERIOR_INFERENCE), data, cfg, fit_stream(seed, d, n, sigma, rho, replicate, prior))
        # draws on the original scale; for IWsc this undoes the standardization
        mats = report.draws.sigma_mats * (factors[:, None] * factors[None, :])
        sig = np.sqrt(np.diagonal(mats, axis1=-2, axis2=-1))
        R = mats / (sig[..., :, None] * sig[..., None, :])
        res.params["sigma1"] = (sigma, *_summ(sig[..., 0]))
        for i, j in zip(*np.triu_indices(d, k=1)):
            res.params[rho_label(i, j)] = (rho, *_summ(R[..., i, j]))
        res.params["Sigma12"] = (rho * sigma**2, *_summ(mats[..., 0, 1]))
        res.rhat_max = report.rhat_max
        res.divergences = report.divergences
        res.reruns = report.reruns_performed
    except (CovPriorError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    res.runtime_s = time.perf_counter() - t0
    return res


def _summ(x):
    x = np.asarray(x).reshape(-1)
    q = np.quantile(x, (0.025, 0.5, 0.975))
    return float(x.mean()), float(q[0]), float(q[1]), float(q[2])


def _fit_task(args):
    return fit_cell(*args)


def resolve_jobs(jobs=None) -> int:
    if jobs is None:
        jobs = os.environ.get("COVPRIOR_JOBS", "1")
    try:
        jobs = int(jobs)
    except ValueError as exc:
        raise DomainError(f"jobs must be an integer, got {jobs!r}") from exc
    if jobs < 1:
        raise DomainError("jobs must be >= 1")
    return jobs


def run_grid(grid: ScenarioGrid, cfg: ChainConfig = ChainConfig(), jobs=1, progress=None) -> list:
    """Fit every cell of ``grid``; returns results sorted by cell coordinates.

    ``progress``, if given, is called with each finished :class:`CellResult`.
    """
    tasks = [c + (cfg, cfg.seed) for c in grid.cells()]
    results = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r in pool.map(_fit_task, tasks):
                results.append(r)
                if progress:
                    progress(r)
    else:
        for t in tasks:
            r = _fit_task(t)
            results.append(r)
            if progress:
                progress(r)
    return sorted(results, key=lambda r: r.key)


@dataclass(frozen=True)
class BiasRow:
    d: int
    n: int
    sigma: float
    rho: float
    prior: str
    replicates: int
    rho_bias: float
    sigma_bias: float
    cov_bias: float


def bias_summary(results) -> list:
    """Mean over replicates of (posterior mean - truth) for rho12, sigma1 and Sigma12, per cell and prior."""
    groups = {}
    for r in results:
        if r.error is not None:
            continue
        groups.setdefault((r.d, r.n, r.sigma, r.rho, r.prior), []).append(r)
    if not groups:
        raise DomainError("no successful results to summarize")
    rows = []
    for key in sorted(groups, key=lambda k: k[:4] + (STUDY_PRIORS.index(k[4]),)):
        rs = groups[key]

        def bias(name):
            return float(np.mean([x.post_mean(name) - x.true_value(name) for x in rs]))

        rows.append(BiasRow(*key, len(rs), bias("rho12"), bias("sigma1"), bias("Sigma12")))
    return rows


def write_results_csv(results, out, params=("sigma1", "rho12"), comment=None):
    """Write the long-format results table to a text stream.

    For 10-d cells every correlation is written in addition to ``params``.
    """
    if comment:
        out.write(f"# {comment}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        if r.error is not None:
            continue
        names = [p for p in r.params if p in params or (r.d > 2 and p.startswith("rho"))]
        for name in names:
            true, mean, q025, q500, q975 = r.params[name]
            w.writerow([
                r.d, r.n, _fmt(r.sigma), _fmt(r.rho), r.replicate, r.prior, name, _fmt(true),
                _fmt(mean), _fmt(q025), _fmt(q500), _fmt(q975), _fmt(r.rhat_max), f"{r.runtime_s:.3f}",
            ])


def results_csv(results, **kw) -> str:
    buf = io.StringIO()
    write_results_csv(results, buf, **kw)
    return buf.getvalue()


def _fmt(x):
    return f"{x:.10g}"
