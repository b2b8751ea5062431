"""Multifidelity Monte Carlo estimators for expectations, variances and Sobol indices."""

import json

from . import _mfmc
from ._mfmc import (
    BudgetError,
    DegenerateStatsError,
    EvaluationError,
    GaussianProcess1D,
    ModelHierarchy,
    analytic_reference,
    draw_inputs,
    hierarchy,
    philox4x32,
    sobol_single_level,
    variance_reduction_ratio,
    budget_for_tolerance,
)

__all__ = [
    "BudgetError",
    "DegenerateStatsError",
    "EvaluationError",
    "GaussianProcess1D",
    "ModelHierarchy",
    "analytic_reference",
    "budget_for_tolerance",
    "draw_inputs",
    "estimate",
    "hierarchy",
    "make_reference",
    "optimal_allocation",
    "philox4x32",
    "pilot",
    "run_study",
    "sobol_single_level",
    "sweep",
    "variance_reduction_ratio",
]


def optimal_allocation(sigma, rho, costs, budget, min_high_fidelity_samples=1, weights=()):
    """Plan for per-model sigma and rho (K x C arrays) under a cost budget."""
    return json.loads(
        _mfmc.optimal_allocation(sigma, rho, list(costs), budget, min_high_fidelity_samples, list(weights))
    )


def pilot(hierarchy, statistic="expectation", mode="linear", seed=1, pilot_size=100, training_size=0):
    return json.loads(_mfmc.pilot(hierarchy, statistic, mode, seed, pilot_size, training_size))


def estimate(hierarchy, statistic, budget, mode="linear", seed=1, pilot_size=100, training_size=0,
             fold_pilot_cost=False, sobol_cost="per-evaluation"):
    """Pilot, allocate and estimate at an absolute cost budget."""
    return json.loads(
        _mfmc.estimate(hierarchy, statistic, budget, mode, seed, pilot_size, training_size, fold_pilot_cost,
                       sobol_cost)
    )


def run_study(config):
    _mfmc.run_study(json.dumps(config), False)


def sweep(config):
    _mfmc.run_study(json.dumps(config), True)


def make_reference(hierarchy, statistics, samples, seed=1):
    return json.loads(_mfmc.make_reference(hierarchy, list(statistics), samples, seed))
