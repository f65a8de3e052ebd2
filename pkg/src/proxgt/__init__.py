"""Decentralized proximal stochastic gradient tracking (exact, SA, SARAH online/empirical)."""

from .algorithm import RunConfig, RunResult, run, theorem_defaults
from .config import ExperimentConfig, parse_config, render_config
from .consensus import chebyshev_mix, consensus_error, mix
from .estimators import EstimatorConfig, GradientEstimator
from .graph import build_topology, metropolis_weights, second_singular_value, validate_weight_matrix
from .metrics import RunRecord, centralized_minibatch_prox_sgd, centralized_prox_gd, samples_to_threshold
from .problems import EmpiricalOracle, PopulationLeastSquares, synthesize_problem
from .prox import PLUS_INF, Regularizer, parse_regularizer, prox_eval

__version__ = "0.1.0"

__all__ = [
    "EmpiricalOracle", "EstimatorConfig", "ExperimentConfig", "GradientEstimator", "PLUS_INF",
    "PopulationLeastSquares", "Regularizer", "RunConfig", "RunRecord", "RunResult",
    "build_topology", "centralized_minibatch_prox_sgd", "centralized_prox_gd", "chebyshev_mix",
    "consensus_error", "metropolis_weights", "mix", "parse_config", "parse_regularizer",
    "prox_eval", "render_config", "run", "samples_to_threshold", "second_singular_value",
    "synthesize_problem", "theorem_defaults", "validate_weight_matrix",
]
