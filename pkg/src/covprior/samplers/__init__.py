"""NUTS and conjugate samplers, diagnostics and fit reports."""

from .diagnostics import Summary, effective_sample_size, mcse_mean, split_rhat, summarize
from .fit import ChainConfig, ChainDraws, FitReport, conjugate_posterior, gibbs_iw_fit, nuts_fit
from .nuts import NutsSettings, run_chain
from .posterior import Posterior

__all__ = [
    "ChainConfig",
    "ChainDraws",
    "FitReport",
    "NutsSettings",
    "Posterior",
    "Summary",
    "conjugate_posterior",
    "effective_sample_size",
    "gibbs_iw_fit",
    "mcse_mean",
    "nuts_fit",
    "run_chain",
    "split_rhat",
    "summarize",
]
