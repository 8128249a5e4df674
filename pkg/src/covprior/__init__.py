"""Bayesian covariance priors for the multivariate normal model.

Inverse Wishart, scaled inverse Wishart, hierarchical half-t and
separation-strategy priors, fitted with NUTS (and exact conjugate draws for
the inverse Wishart), plus the simulation study and bird-count application
built on them.
"""

from .errors import CovPriorError
from .matrix import CorrelationMatrix, CovDecomposition, SPDMatrix
from .priors import BMMmu, HIWht, IW, SIW, default_spec
from .likelihood import Dataset

__all__ = [
    "BMMmu",
    "CorrelationMatrix",
    "CovDecomposition",
    "CovPriorError",
    "Dataset",
    "HIWht",
    "IW",
    "SIW",
    "SPDMatrix",
    "default_spec",
]
