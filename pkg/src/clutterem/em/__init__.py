"""Penalized latent-variable EM under H0, H11, H12 and H13."""

from .model import (Hypothesis, ModelParams, bin_log_mixture, class_log_densities,
                    class_log_density, e_step, log_likelihood, penalties, penalty)
from .mstep import (m_step_h0, m_step_h11, m_step_h12, m_step_h13, m_step_priors,
                    sigma_objective, solve_sigma, weighted_scatter)
from .procedure import Classification, EmConfig, EmTrace, classify, initialize, run_em

__all__ = [
    "Classification", "EmConfig", "EmTrace", "Hypothesis", "ModelParams",
    "bin_log_mixture", "class_log_densities", "class_log_density", "classify",
    "e_step", "initialize", "log_likelihood", "m_step_h0", "m_step_h11",
    "m_step_h12", "m_step_h13", "m_step_priors", "penalties", "penalty",
    "run_em", "sigma_objective", "solve_sigma", "weighted_scatter",
]
