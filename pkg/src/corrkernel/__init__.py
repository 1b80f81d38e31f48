"""Boundedness verdicts, certificates and numerical checks for multilinear
fractional integrals with correlation kernels prod_{i<j} |x_i - x_j|^{-alpha_ij}."""
from .kernel import (
    KernelSpec, LebesgueProfile, PointConfig, PreconditionError, SpecError,
    subset_alpha_sum, subset_recip_sum,
)
from .conditions import decide_boundedness, check_endpoint, find_admissible_profile
from .linsys import StrictLinearSystem, solve, distribute_and_fold

__version__ = "0.1.0"

__all__ = [
    "KernelSpec", "LebesgueProfile", "PointConfig", "PreconditionError", "SpecError",
    "subset_alpha_sum", "subset_recip_sum", "decide_boundedness", "check_endpoint",
    "find_admissible_profile", "StrictLinearSystem", "solve", "distribute_and_fold",
]
