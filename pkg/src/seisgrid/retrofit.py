"""Sensitivity ranking and budget-constrained retrofit search."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .config_io import COMPONENT_CLASSES, CostTable
from .fragility import ComponentFragility
from .simulation import DEFAULT_SEED, ConvergenceConfig, RiskInputs, ScenarioEngine, assess, eafl_fixed
from .validation import ValidationError, check_binary_vector

COST_TOL = 1e-9


@dataclass
class RetrofitPlan:
    labels: list[str]
    x: np.ndarray
    cost_musd: float
    eafl: float | None = None
    fitness: float | None = None
    budget_musd: float | None = None
    eafl_standard_error: float | None = None

    @property
    def selected(self) -> list[str]:
        return [lb for lb, v in zip(self.labels, self.x) if v]

    def by_class(self) -> dict[str, list[int]]:
        out = {cls: [] for cls in COMPONENT_CLASSES}
        for lb in self.selected:
            cls, cid = lb.split(":", 1)
            out[cls].append(int(cid))
        return out

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "by_class": self.by_class(),
            "cost_musd": round(float(self.cost_musd), 10),
            "budget_musd": self.budget_musd,
            "eafl": self.eafl,
            "eafl_standard_error": self.eafl_standard_error,
            "search_fitness": self.fitness,
        }


@dataclass
class SensitivityRecord:
    component: str
    s_up: float
    s_down: float

    @property
    def magnitude(self) -> float:
        return max(abs(self.s_up), abs(self.s_down))


@dataclass
class GaParams:
    population_size: int = 40
    generations: int = 80
    crossover_fraction: float = 0.8
    mutation_rate: float = 0.1
    elite_count: int = 4
    tournament_size: int = 2
    penalty_gamma: float = 10.0
    seeded_fraction: float = 0.25
    stall_generations: int = 15
    fitness_samples: int = 100
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0 <= self.elite_count < self.population_size:
            raise ValidationError("elite_count must be smaller than population_size")
        for name in ("crossover_fraction", "mutation_rate", "seeded_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.tournament_size < 1 or self.generations < 0 or self.fitness_samples < 2:
            raise ValidationError("invalid GA sizes")


@dataclass
class TradeoffRow:
    budget: float
    eafl: float
    cost: float
    selected: list[str]
    standard_error: float = 0.0
    history: list[float] = field(default_factory=list)


def plan_cost(x, costs: CostTable, labels) -> float:
    """Total retrofit cost (million USD) of binary plan *x* over *labels*."""
    x = check_binary_vector(x, len(labels))
    return float(costs.vector(labels) @ x)


class RetrofitProblem:
    """EAFL of retrofit plans under common random numbers, memoized by plan bits.

    Every plan is scored on the same first ``n_samples`` scenarios per
    magnitude of a shared :class:`ScenarioEngine`.
    """

    def __init__(self, inputs: RiskInputs, engine: ScenarioEngine | None = None, n_samples: int = 100,
                 master_seed: int = DEFAULT_SEED):
        if inputs.costs is None:
            raise ValidationError("retrofit planning needs a cost table")
        self.inputs = inputs
        self.engine = engine or ScenarioEngine(inputs, master_seed)
        self.n_samples = int(n_samples)
        self.labels = self.engine.labels
        if not self.labels:
            raise ValidationError("no candidate components")
        self.costs = inputs.costs.vector(self.labels)
        self._eafl: dict[bytes, float] = {}
        self.evaluations = 0

    def fragility(self, x) -> ComponentFragility:
        return self.inputs.component_fragility(np.asarray(x, dtype=np.int8))

    def estimate(self, fragility: ComponentFragility):
        return eafl_fixed(self.engine, fragility, self.n_samples)[0]

    def eafl(self, x) -> float:
        x = np.asarray(x, dtype=np.int8)
        key = x.tobytes()
        hit = self._eafl.get(key)
        if hit is None:
            self.evaluations += 1
            hit = self.estimate(self.fragility(x)).eafl
            self._eafl[key] = hit
        return hit

    def cost(self, x) -> float:
        return float(self.costs @ np.asarray(x, dtype=float))

    def fitness(self, x, budget: float, gamma: float) -> float:
        excess = max(0.0, self.cost(x) - budget)
        if excess <= COST_TOL * max(1.0, abs(budget)):
            excess = 0.0
        return self.eafl(x) + gamma * excess

    def feasible(self, x, budget: float) -> bool:
        return self.cost(x) <= budget + COST_TOL * max(1.0, abs(budget))


def fitness(x, budget: float, gamma: float, inputs: RiskInputs, seed: int = DEFAULT_SEED,
            problem: RetrofitProblem | None = None) -> float:
    """Penalized EAFL: ``EAFL(x) + gamma * max(0, cost(x) - budget)``."""
    problem = problem or RetrofitProblem(inputs, master_seed=seed)
    return problem.fitness(check_binary_vector(x, len(problem.labels)), budget, gamma)


def oat_sensitivity(component: str, factor: float, inputs: RiskInputs, seed: int = DEFAULT_SEED,
                    problem: RetrofitProblem | None = None) -> SensitivityRecord:
    """EAFL change when one component's four medians are scaled by ``1 + factor`` and ``1 - factor``."""
    if factor < 0 or factor >= 1:
        raise ValidationError(f"perturbation factor must lie in [0, 1), got {factor}")
    problem = problem or RetrofitProblem(inputs, master_seed=seed)
    base_frag = problem.fragility(np.zeros(len(problem.labels), dtype=np.int8))
    base = problem.eafl(np.zeros(len(problem.labels), dtype=np.int8))
    up = problem.estimate(base_frag.with_scaled_medians(component, 1.0 + factor)).eafl
    down = problem.estimate(base_frag.with_scaled_medians(component, 1.0 - factor)).eafl
    return SensitivityRecord(component, up - base, down - base)


def sensitivity_ranking(inputs: RiskInputs, factor: float = 0.5, seed: int = DEFAULT_SEED,
                        problem: RetrofitProblem | None = None) -> list[SensitivityRecord]:
    """OAT records for every component, largest absolute effect first."""
    problem = problem or RetrofitProblem(inputs, master_seed=seed)
    recs = [oat_sensitivity(lb, factor, inputs, seed, problem) for lb in problem.labels]
    return sorted(recs, key=lambda r: (-r.magnitude, problem.labels.index(r.component)))


def category_sensitivity(cls: str | None, inputs: RiskInputs, seed: int = DEFAULT_SEED,
                         problem: RetrofitProblem | None = None) -> float:
    """EAFL with every component of class *cls* retrofitted.

    ``None`` gives the baseline and ``"all"`` retrofits every class.
    """
    problem = problem or RetrofitProblem(inputs, master_seed=seed)
    if cls is not None and cls != "all" and cls not in COMPONENT_CLASSES:
        raise ValidationError(f"unknown component class {cls!r}")
    x = np.array([cls == "all" or lb.split(":", 1)[0] == cls for lb in problem.labels], dtype=np.int8)
    return problem.eafl(x)


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _seeded_individuals(ranking: list[str], problem: RetrofitProblem, budget: float, count: int,
                        seed: int) -> list[np.ndarray]:
    pos = {lb: i for i, lb in enumerate(problem.labels)}
    out = []
    for j in range(count):
        rng = _substream(seed, 0, j)
        x = np.zeros(len(problem.labels), dtype=np.int8)
        spent = 0.0
        for lb in ranking:
            # first individual is the pure greedy walk; later ones skip candidates at random
            if j > 0 and rng.random() < 0.3:
                continue
            c = problem.costs[pos[lb]]
            if spent + c <= budget + COST_TOL:
                x[pos[lb]] = 1
                spent += c
        out.append(x)
    return out


def _tournament(rng, fit: np.ndarray, size: int) -> int:
    picks = rng.integers(0, fit.size, size)
    return int(picks[np.argmin(fit[picks])])


def ga_optimize(budget: float, params: GaParams | None = None, inputs: RiskInputs | None = None, *,
                problem: RetrofitProblem | None = None, ranking: list[str] | None = None,
                final_conv: ConvergenceConfig | None = None, threads: int = 1):
    """Genetic search for the plan minimizing penalized EAFL within *budget*.

    Returns ``(plan, history)`` where *history* is the best fitness per
    generation. The reported plan is the best budget-feasible individual
    seen, re-scored with convergence-controlled sampling on the same scenario
    stream unless *final_conv* is ``False``.
    """
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    params = params or GaParams()
    if problem is None:
        if inputs is None:
            raise ValidationError("either inputs or problem is required")
        engine = ScenarioEngine(inputs, params.seed, threads=threads)
        problem = RetrofitProblem(inputs, engine, params.fitness_samples)
    n = len(problem.labels)
    if ranking is None:
        ranking = [r.component for r in sorted(
            (oat_sensitivity(lb, 0.5, problem.inputs, params.seed, problem) for lb in problem.labels),
            key=lambda r: r.s_up)]
    gamma = params.penalty_gamma

    def score(x):
        return problem.fitness(x, budget, gamma)

    n_seed = int(round(params.seeded_fraction * params.population_size))
    pop = _seeded_individuals(ranking, problem, budget, n_seed, params.seed)
    p_on = min(0.5, budget / problem.costs.sum()) if problem.costs.sum() > 0 else 0.0
    for slot in range(n_seed, params.population_size):
        pop.append((_substream(params.seed, 0, slot).random(n) < p_on).astype(np.int8))
    fit = np.array([score(x) for x in pop])

    best_feasible = None
    best_feasible_fit = math.inf

    def track(xs, fs):
        nonlocal best_feasible, best_feasible_fit
        for x, f in zip(xs, fs):
            if problem.feasible(x, budget) and f < best_feasible_fit:
                best_feasible, best_feasible_fit = x.copy(), f

    track(pop, fit)
    history = [float(fit.min())]
    stall = 0
    n_children = params.population_size - params.elite_count
    n_cross = int(round(params.crossover_fraction * n_children))
    for gen in range(1, params.generations + 1):
        order = np.lexsort((np.arange(fit.size), fit))
        nxt = [pop[i].copy() for i in order[: params.elite_count]]
        for slot in range(n_children):
            rng = _substream(params.seed, gen, slot)
            if slot < n_cross:
                a = pop[_tournament(rng, fit, params.tournament_size)]
                b = pop[_tournament(rng, fit, params.tournament_size)]
                child = np.where(rng.random(n) < 0.5, a, b).astype(np.int8)
            else:
                parent = pop[_tournament(rng, fit, params.tournament_size)]
                child = parent ^ (rng.random(n) < params.mutation_rate).astype(np.int8)
            nxt.append(child)
        pop = nxt
        fit = np.array([score(x) for x in pop])
        track(pop, fit)
        best = float(fit.min())
        stall = stall + 1 if best >= history[-1] else 0
        history.append(min(best, history[-1]))
        if stall >= params.stall_generations:
            break

    if best_feasible is None:
        raise ValidationError("no budget-feasible plan found")
    plan = RetrofitPlan(problem.labels, best_feasible, problem.cost(best_feasible),
                        eafl=problem.eafl(best_feasible), fitness=float(best_feasible_fit), budget_musd=float(budget))
    if final_conv is not False:
        res, _ = assess(problem.inputs, final_conv or ConvergenceConfig(), problem.engine.master_seed,
                        problem.fragility(best_feasible), problem.engine)
        plan.eafl, plan.eafl_standard_error = res.eafl, res.standard_error
    return plan, history


def budget_sweep(budgets, params: GaParams | None = None, inputs: RiskInputs | None = None, *,
                 problem: RetrofitProblem | None = None, ranking=None, final_conv=None,
                 threads: int = 1) -> list[TradeoffRow]:
    """Independent GA runs per budget on a shared scenario stream."""
    budgets = [float(b) for b in budgets]
    if budgets != sorted(budgets):
        raise ValidationError("budgets must be sorted ascending")
    params = params or GaParams()
    if problem is None:
        engine = ScenarioEngine(inputs, params.seed, threads=threads)
        problem = RetrofitProblem(inputs, engine, params.fitness_samples)
    rows = []
    for b in budgets:
        plan, hist = ga_optimize(b, params, problem=problem, ranking=ranking, final_conv=final_conv)
        rows.append(TradeoffRow(b, plan.eafl, plan.cost_musd, plan.selected, plan.eafl_standard_error or 0.0, hist))
    return rows
