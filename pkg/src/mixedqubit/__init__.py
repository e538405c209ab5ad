"""Optimal Bayesian estimation of mixed qubit states from N identical copies."""
from .bayes2d import fidelity_2d, optimize_seeds
from .bayes3d import bures_closed_form, fidelity_3d
from .errors import DomainError, NumericalFailure, OptimizationWarning, QuadratureError
from .priors import Prior, bures_prior, parse_prior, step_prior, uniform_prior

__all__ = [
    "DomainError", "NumericalFailure", "OptimizationWarning", "Prior", "QuadratureError",
    "bures_closed_form", "bures_prior", "fidelity_2d", "fidelity_3d", "optimize_seeds",
    "parse_prior", "step_prior", "uniform_prior",
]
__version__ = "0.1.0"
