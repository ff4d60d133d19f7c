"""Minimal d-bar coupling of two stochastically ordered binary chains.

The coupling is decomposed into a countable mixture of finite-order kernels,
windows of the stationary coupled chain are sampled exactly through
regeneration times, and Monte Carlo reports compare the realized mismatch
rate with ``P(Y_0 = 1) - P(X_0 = 1)``.
"""

from .coupling import (
    CoupledPair,
    OrderedSuffix,
    SymbolPair,
    alpha_global,
    alpha_suffix,
    check_condition2,
    check_condition3,
    coupled_kernel,
    lambda_at,
    lambdas,
    r_lower,
)
from .decomposition import decomposition_identity_check, layout, pk_eval, sample_symbol
from .errors import BacktrackLimitError, DbarError, HardCapError, UndefinedKernelError, UsageError
from .estimator import (
    EstimateReport,
    estimate_dbar,
    marginal_consistency,
    marginal_oracle,
    mk_cost,
    regen_statistics,
)
from .kernel import (
    FiniteMarkov,
    HazardSequence,
    Iid,
    PastSummary,
    Renewal,
    check_order,
    continuity_rate,
    eval_p1,
)
from .regeneration import CoupledPath, backtrack, perfect_sample, regen_marks
from .rng import TimeKeyedRandomness

__version__ = "0.1.0"

__all__ = [
    "BacktrackLimitError", "CoupledPair", "CoupledPath", "DbarError", "EstimateReport",
    "FiniteMarkov", "HardCapError", "HazardSequence", "Iid", "OrderedSuffix", "PastSummary",
    "Renewal", "SymbolPair", "TimeKeyedRandomness", "UndefinedKernelError", "UsageError",
    "alpha_global", "alpha_suffix", "backtrack", "check_condition2", "check_condition3",
    "check_order", "continuity_rate", "coupled_kernel", "decomposition_identity_check",
    "estimate_dbar", "eval_p1", "lambda_at", "lambdas", "layout", "marginal_consistency",
    "marginal_oracle", "mk_cost", "perfect_sample", "pk_eval", "r_lower", "regen_marks",
    "regen_statistics", "sample_symbol",
]
