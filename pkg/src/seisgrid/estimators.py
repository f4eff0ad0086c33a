"""Estimator-style front ends for the risk and retrofit pipelines.

Hyperparameters live in ``__init__`` so ``get_params``/``set_params``/``clone``
work; fitted state carries a trailing underscore.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .retrofit import GaParams, RetrofitProblem, ga_optimize
from .simulation import DEFAULT_SEED, ConvergenceConfig, RiskInputs, ScenarioEngine, assess


class RiskAssessor(BaseEstimator):
    """Convergence-controlled EAFL for a (possibly retrofitted) network.

    ``fit(X)`` accepts an optional retrofit plan (labels or binary vector).
    ``predict(plans)`` scores further plans on the fitted scenario stream.
    """

    def __init__(self, inputs: RiskInputs | None = None, seed: int = DEFAULT_SEED, tau: float = 0.01,
                 delta: float = 0.05, min_samples: int = 100, max_samples: int = 2000,
                 check_interval: int = 25, threads: int = 1):
        self.inputs = inputs
        self.seed = seed
        self.tau = tau
        self.delta = delta
        self.min_samples = min_samples
        self.max_samples = max_samples
        self.check_interval = check_interval
        self.threads = threads

    def _conv(self):
        return ConvergenceConfig(tau=self.tau, delta=self.delta, min_samples=self.min_samples,
                                 max_samples=self.max_samples, check_interval=self.check_interval)

    def fit(self, X=None, y=None):
        inputs = self.inputs or RiskInputs.bundled()
        self.engine_ = ScenarioEngine(inputs, self.seed, threads=self.threads)
        self.risk_, self.stats_ = assess(inputs, self._conv(), self.seed, inputs.component_fragility(X), self.engine_)
        self.eafl_ = self.risk_.eafl
        return self

    def predict(self, plans) -> np.ndarray:
        check_is_fitted(self, "engine_")
        inputs = self.engine_.inputs
        return np.array([assess(inputs, self._conv(), self.seed, inputs.component_fragility(p), self.engine_)[0].eafl
                         for p in plans])


class RetrofitOptimizer(BaseEstimator):
    """Budget-constrained retrofit search; ``fit`` sets ``plan_`` and ``history_``."""

    def __init__(self, budget: float = 5.0, inputs: RiskInputs | None = None, seed: int = DEFAULT_SEED,
                 population_size: int = 40, generations: int = 80, crossover_fraction: float = 0.8,
                 mutation_rate: float = 0.1, elite_count: int = 4, tournament_size: int = 2,
                 penalty_gamma: float = 10.0, seeded_fraction: float = 0.25, stall_generations: int = 15,
                 fitness_samples: int = 100, threads: int = 1):
        self.budget = budget
        self.inputs = inputs
        self.seed = seed
        self.population_size = population_size
        self.generations = generations
        self.crossover_fraction = crossover_fraction
        self.mutation_rate = mutation_rate
        self.elite_count = elite_count
        self.tournament_size = tournament_size
        self.penalty_gamma = penalty_gamma
        self.seeded_fraction = seeded_fraction
        self.stall_generations = stall_generations
        self.fitness_samples = fitness_samples
        self.threads = threads

    def ga_params(self) -> GaParams:
        return GaParams(self.population_size, self.generations, self.crossover_fraction, self.mutation_rate,
                        self.elite_count, self.tournament_size, self.penalty_gamma, self.seeded_fraction,
                        self.stall_generations, self.fitness_samples, self.seed)

    def fit(self, X=None, y=None):
        inputs = self.inputs or RiskInputs.bundled()
        self.problem_ = RetrofitProblem(inputs, ScenarioEngine(inputs, self.seed, threads=self.threads),
                                        self.fitness_samples)
        self.plan_, self.history_ = ga_optimize(self.budget, self.ga_params(), problem=self.problem_)
        return self

    def transform(self, X=None) -> np.ndarray:
        """Binary retrofit vector over the canonical component order."""
        check_is_fitted(self, "plan_")
        return self.plan_.x.copy()
