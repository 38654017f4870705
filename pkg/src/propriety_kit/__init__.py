"""Posterior propriety checks for binomial and Poisson GLMMs.

The exact core (rank, positive-null-vector LP, condition engine) decides
propriety from the design; the numerical side builds the approximate
Jeffreys prior and evaluates marginal likelihoods by quadrature.
"""

from .design import build_binary_star, build_bundle, partition_indices, poisson_domination_constant, poissonize
from .engine import Outcome, Verdict, check_necessary, jeffreys_verdict, verdict
from .glm import GlmFit, fit_glm, fit_model_glm
from .jeffreys import (
    JeffreysPrior,
    approx_conditional_moments,
    build_jeffreys,
    crossover_tau0,
    fisher_info_tau,
    jeffreys_density,
    jeffreys_envelope,
    nk_density,
)
from .kernels import BACKEND
from .linalg import column_rank
from .lp import exists_positive_null
from .model import GlmmModel, PriorBlock, ValidatedModel, load_model_json, model_from_dict, validate
from .oracle import complete_loglik, fisher_fd_oracle, marginal_loglik, truncated_cy

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GlmFit",
    "GlmmModel",
    "JeffreysPrior",
    "Outcome",
    "PriorBlock",
    "ValidatedModel",
    "Verdict",
    "approx_conditional_moments",
    "build_binary_star",
    "build_bundle",
    "build_jeffreys",
    "check_necessary",
    "column_rank",
    "complete_loglik",
    "crossover_tau0",
    "exists_positive_null",
    "fisher_fd_oracle",
    "fisher_info_tau",
    "fit_glm",
    "fit_model_glm",
    "jeffreys_density",
    "jeffreys_envelope",
    "jeffreys_verdict",
    "load_model_json",
    "marginal_loglik",
    "model_from_dict",
    "nk_density",
    "partition_indices",
    "poisson_domination_constant",
    "poissonize",
    "truncated_cy",
    "validate",
    "verdict",
]
