"""Convergence diagnostics and posterior summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ZeroVariance

QUANTILES = (0.025, 0.5, 0.975)


def _as_chains(chains):
    arrs = [np.asarray(c, dtype=float).reshape(-1) for c in chains]
    if len(arrs) < 2:
        raise DomainError("need at least 2 chains")
    n = arrs[0].size
    if any(a.size != n for a in arrs):
        raise DomainError("chains must have equal length")
    if n < 4:
        raise DomainError("chains need at least 4 draws")
    return np.stack(arrs)


def split_rhat(chains) -> float:
    """Split potential scale reduction factor.

    Each chain is cut into two halves (a middle draw is dropped for odd
    lengths) and the classic between/within comparison is made across the
    half-chains, with ``B`` scaled by the half-chain length ``m``.
    """
    x = _as_chains(chains)
    if np.all(x == x.flat[0]):
        raise ZeroVariance("all draws are identical")
    m = x.shape[1] // 2
    halves = np.concatenate([x[:, :m], x[:, -m:]])
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    B = m * means.var(ddof=1)
    if W == 0:
        return float("inf")
    var_plus = (m - 1) / m * W + B / m
    return float(np.sqrt(var_plus / W))


def _autocorr(x):
    """Autocorrelation of each row of ``x`` via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n
    return acov


def effective_sample_size(chains) -> float:
    """Multi-chain effective sample size with Geyer's initial monotone sequence."""
    x = _as_chains(chains)
    M, n = x.shape
    acov = _autocorr(x)
    W = acov[:, 0].mean() * n / (n - 1)
    if W == 0:
        return float(M * n)
    chain_means = x.mean(axis=1)
    var_plus = (n - 1) / n * W + chain_means.var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum adjacent pairs while positive, enforcing monotonicity
    tau = -1.0
    prev = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / np.log10(M * n))
    return float(M * n / tau)


def mcse_mean(chains) -> float:
    """Monte Carlo standard error of the pooled mean."""
    x = _as_chains(chains)
    return float(x.std(ddof=1) / np.sqrt(effective_sample_size(x)))


@dataclass(frozen=True)
class Summary:
    mean: float
    q025: float
    q500: float
    q975: float


def summarize_values(values) -> Summary:
    """Pooled mean and 2.5/50/97.5% quantiles (linear interpolation of order statistics)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise DomainError("no draws to summarize")
    q = np.quantile(v, QUANTILES)
    return Summary(float(v.mean()), float(q[0]), float(q[1]), float(q[2]))


def summarize(draws) -> dict:
    """Summaries of every sigma[i], rho[i,j] and Sigma[i,j] (1-based names), pooled over chains."""
    return {name: summarize_values(vals) for name, vals in draws.quantities().items()}
