"""Restricted solid-on-solid growth with nonlocal hops: exact, stochastic and mean-field engines."""

__version__ = "0.1.0"

from .distributions import HeightDistribution, total_variation
from .exact_master import (GeneratorMatrix, StateDistribution, build_generator, evolve_forward,
                           evolve_many, marginal_rate_identity, one_site_marginal)
from .kmc import EnsembleStats, Simulation, ensemble, kmc_step, simulate
from .lattice import (HeightConfig, MoveEvent, RateTable, StateSpace, apply_move, count_configs,
                      enumerate_configs, is_restricted, list_moves)
from .mean_field import (MeanFieldParams, bracket, mf_evolve, mf_rhs, solve_lambda,
                         stationary_analysis, stationary_quadratic)
from .report import compare_report
from .scaling import (SelfSimilarParams, barenblatt_f, continuum_coefficient_A, epsilon_refinement,
                      exponent_report, pk_t, self_similar_P)

__all__ = [
    "__version__",
    "HeightDistribution", "total_variation",
    "GeneratorMatrix", "StateDistribution", "build_generator", "evolve_forward", "evolve_many",
    "marginal_rate_identity", "one_site_marginal",
    "EnsembleStats", "Simulation", "ensemble", "kmc_step", "simulate",
    "HeightConfig", "MoveEvent", "RateTable", "StateSpace", "apply_move", "count_configs",
    "enumerate_configs", "is_restricted", "list_moves",
    "MeanFieldParams", "bracket", "mf_evolve", "mf_rhs", "solve_lambda", "stationary_analysis",
    "stationary_quadratic",
    "compare_report",
    "SelfSimilarParams", "barenblatt_f", "continuum_coefficient_A", "epsilon_refinement",
    "exponent_report", "pk_t", "self_similar_P",
]
