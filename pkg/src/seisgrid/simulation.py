"""Monte Carlo scenario evaluation, convergence control and EAFL integration."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from .config_io import CostTable, FragilityTable, HazardConfig, PowerNetworkModel, load_costs, load_fragility, \
    load_hazard, load_network
from .dcopf import assemble_case, solve_with_shedding
from .fragility import DEFAULT_MAPPING, ComponentFragility, alpha_lookup, apply_retrofit, damage_from_draws
from .hazard import FieldSampler, magnitude_bin_rates
from .network import GridIndex, attach_components, designate_slack, find_islands, island_viability, \
    topology_from_alpha
from .validation import ValidationError

DEFAULT_SEED = 7


@dataclass
class RiskInputs:
    network: PowerNetworkModel
    hazard: HazardConfig
    fragility: FragilityTable
    costs: CostTable | None = None
    mapping: dict = field(default_factory=lambda: dict(DEFAULT_MAPPING))

    @classmethod
    def bundled(cls) -> RiskInputs:
        """The RTS-24 case study shipped with the package."""
        return cls(load_network(), load_hazard(), load_fragility(), load_costs())

    def component_fragility(self, plan=None) -> ComponentFragility:
        return apply_retrofit(self.fragility, plan, self.network)


@dataclass(frozen=True)
class ConvergenceConfig:
    tau: float = 0.01
    delta: float = 0.05
    z: float = 1.96
    min_samples: int = 100
    max_samples: int = 2000
    check_interval: int = 25

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValidationError(f"tau must lie in (0, 1], got {self.tau}")
        if not self.delta > 0:
            raise ValidationError("delta must be positive")
        if self.min_samples < 2 or self.max_samples < self.min_samples or self.check_interval < 1:
            raise ValidationError("need 2 <= min_samples <= max_samples and check_interval >= 1")


@dataclass
class MagnitudeStats:
    magnitude: float
    samples: np.ndarray  # served MW per scenario
    baseline_mw: float
    z: float = 1.96
    converged_by: str = "fixed"

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def normalized(self) -> np.ndarray:
        return self.samples / self.baseline_mw

    @property
    def mean_norm(self) -> float:
        return float(self.normalized.mean())

    @property
    def std_norm(self) -> float:
        return float(self.normalized.std(ddof=1)) if self.n_samples > 1 else 0.0

    @property
    def ci_halfwidth(self) -> float:
        return self.z * self.std_norm / math.sqrt(self.n_samples)

    @property
    def ci_lo(self) -> float:
        return self.mean_norm - self.ci_halfwidth

    @property
    def ci_hi(self) -> float:
        return self.mean_norm + self.ci_halfwidth

    @property
    def standard_error(self) -> float:
        return self.std_norm / math.sqrt(self.n_samples)


@dataclass
class RiskResult:
    eafl: float
    magnitudes: np.ndarray
    rates: np.ndarray
    mean_norm: np.ndarray
    standard_error: float = 0.0

    @property
    def contributions(self) -> np.ndarray:
        return self.rates * (1.0 - self.mean_norm)

    def to_dict(self) -> dict:
        return {
            "eafl": float(self.eafl),
            "eafl_standard_error": float(self.standard_error),
            "magnitudes": [float(m) for m in self.magnitudes],
            "annual_rates": [float(v) for v in self.rates],
            "mean_norm_functionality": [float(v) for v in self.mean_norm],
            "contributions": [float(v) for v in self.contributions],
        }


def _magnitude_key(m: float) -> int:
    return int(round(float(m) * 1000))


class ScenarioEngine:
    """Scenario generator and evaluator shared across configurations.

    Scenario ``k`` at magnitude ``M`` draws its PGA field and its damage
    uniforms from an RNG substream keyed by ``(master_seed, M, k)``. Because
    these draws do not depend on the fragility curves, any two configurations
    evaluated on the same engine see common random numbers. Served load is
    memoized per functionality vector and per island problem.
    """

    def __init__(self, inputs: RiskInputs, master_seed: int = DEFAULT_SEED, threads: int = 1,
                 retry_limit: int | None = None):
        self.inputs = inputs
        self.master_seed = int(master_seed)
        self.threads = max(1, int(threads))
        self.retry_limit = retry_limit
        self.index = GridIndex(inputs.network)
        self.labels = self.index.labels
        self.sites = inputs.network.component_sites()
        classes = [lb.split(":", 1)[0] for lb in self.labels]
        self.alpha_table = alpha_lookup(classes, inputs.mapping)
        self._samplers: dict[int, FieldSampler] = {}
        self._pga: dict[int, np.ndarray] = {}
        self._u: dict[int, np.ndarray] = {}
        self._served: dict[bytes, float] = {}
        self._island_served: dict[bytes, float] = {}
        self.baseline_mw = self.functionality(np.ones(self.index.n_components))
        if self.baseline_mw <= 0:
            raise ValidationError("intact network serves no load; baseline functionality is zero")

    # -- hazard draws

    def sampler(self, m: float) -> FieldSampler:
        key = _magnitude_key(m)
        if key not in self._samplers:
            hz = self.inputs.hazard
            self._samplers[key] = FieldSampler(
                m, self.sites, fault_p1=hz.fault_p1, fault_p2=hz.fault_p2, vs30=hz.vs30_mps,
                mechanism=hz.mechanism, coeffs=hz.gmpe, cap_km=hz.correlation_cap_km, site_ids=self.labels)
        return self._samplers[key]

    def rng(self, m: float, k: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.master_seed, spawn_key=(_magnitude_key(m), int(k))))

    def draws(self, m: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        """PGA (g) and damage uniforms for scenarios ``0..n-1``, each ``(n, n_components)``."""
        key = _magnitude_key(m)
        have = self._pga.get(key, np.empty((0, self.index.n_components)))
        if have.shape[0] < n:
            s = self.sampler(m)
            z = np.empty((n - have.shape[0], s.n_unique))
            u = np.empty((n - have.shape[0], self.index.n_components))
            for row, k in enumerate(range(have.shape[0], n)):
                g = self.rng(m, k)
                z[row] = g.standard_normal(s.n_unique)
                u[row] = g.random(self.index.n_components)
            pga = np.exp(s.ln_mean + s.residuals_from_normals(z))
            self._pga[key] = np.vstack([have, pga])
            self._u[key] = np.vstack([self._u.get(key, np.empty((0, self.index.n_components))), u])
        return self._pga[key][:n], self._u[key][:n]

    # -- system evaluation

    def islands(self, alpha: np.ndarray):
        topo = topology_from_alpha(self.index, alpha)
        return topo, attach_components(find_islands(topo), topo, self.index, alpha)

    def _island_mw(self, isl) -> float:
        net = self.inputs.network
        if not island_viability(isl, net):
            return 0.0
        isl.slack = designate_slack(isl, net)
        case = assemble_case(isl, net)
        sig = case.signature()
        hit = self._island_served.get(sig)
        if hit is None:
            res = solve_with_shedding(case, self.retry_limit)
            hit = res.served_mw if res.converged else 0.0
            self._island_served[sig] = hit
        return hit

    def functionality(self, alpha: np.ndarray) -> float:
        """Served load (MW) for a per-component functionality vector."""
        alpha = np.ascontiguousarray(alpha, dtype=float)
        key = alpha.tobytes()
        hit = self._served.get(key)
        if hit is None:
            _, part = self.islands(alpha)
            hit = float(sum(self._island_mw(isl) for isl in part.islands))
            self._served[key] = hit
        return hit

    def damage(self, m: float, n: int, fragility: ComponentFragility, start: int = 0):
        pga, u = self.draws(m, n)
        return damage_from_draws(pga[start:n], u[start:n], fragility, self.alpha_table)

    def samples(self, m: float, n: int, fragility: ComponentFragility, start: int = 0) -> np.ndarray:
        """Served MW for scenarios ``start..n-1`` at magnitude *m*."""
        _, alpha = self.damage(m, n, fragility, start)
        rows = [np.ascontiguousarray(a) for a in alpha]
        missing = {r.tobytes(): r for r in rows if r.tobytes() not in self._served}
        if self.threads > 1 and len(missing) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(self.functionality, missing.values()))
        return np.array([self.functionality(r) for r in rows])

    def scenario_record(self, m: float, k: int, fragility: ComponentFragility) -> dict:
        """Full per-component and per-island account of scenario *k* (JSON-ready)."""
        pga, u = self.draws(m, k + 1)
        ds, alpha = damage_from_draws(pga[k], u[k], fragility, self.alpha_table)
        _, part = self.islands(alpha)
        net = self.inputs.network
        islands = []
        total = 0.0
        for isl in part.islands:
            entry = {"buses": list(isl.buses), "viable": island_viability(isl, net)}
            if entry["viable"]:
                isl.slack = designate_slack(isl, net)
                res = solve_with_shedding(assemble_case(isl, net), self.retry_limit)
                entry["slack_bus"] = isl.slack
                entry["dispatch"] = res.to_dict()
                total += res.served_mw if res.converged else 0.0
            islands.append(entry)
        s = self.sampler(m)
        return {
            "seed": self.master_seed,
            "magnitude": float(m),
            "sample_index": int(k),
            "components": [
                {"id": lb, "ln_mean": float(lm), "sigma": float(sg), "pga_g": float(p), "ds": int(d),
                 "alpha": float(a)}
                for lb, lm, sg, p, d, a in zip(self.labels, s.ln_mean, s.sigma, pga[k], ds, alpha)
            ],
            "islands": islands,
            "functionality_mw": total,
            "baseline_mw": self.baseline_mw,
            "normalized_functionality": total / self.baseline_mw,
        }


def _fragility(inputs: RiskInputs, fragility):
    return fragility if isinstance(fragility, ComponentFragility) else inputs.component_fragility(fragility)


def simulate_scenario(m: float, sample_index: int, master_seed: int, inputs: RiskInputs, fragility=None,
                      engine: ScenarioEngine | None = None) -> float:
    """Served MW of one scenario; deterministic in ``(master_seed, m, sample_index)``."""
    engine = engine or ScenarioEngine(inputs, master_seed)
    frag = _fragility(inputs, fragility)
    return float(engine.samples(m, sample_index + 1, frag, start=sample_index)[0])


def run_mc(m: float, conv: ConvergenceConfig, master_seed: int, inputs: RiskInputs, fragility=None,
           engine: ScenarioEngine | None = None) -> MagnitudeStats:
    """Sample scenarios at magnitude *m* until the mean and the CI width settle.

    Checks run every ``check_interval`` samples once ``min_samples`` are in:
    the relative change of the mean since the previous check must be below
    ``tau`` and the 95% CI width of normalized functionality below ``delta``.
    """
    engine = engine or ScenarioEngine(inputs, master_seed)
    frag = _fragility(inputs, fragility)
    f0 = engine.baseline_mw
    n = conv.min_samples
    values = engine.samples(m, n, frag)
    prev_mean = values[: max(n - conv.check_interval, 1)].mean() / f0
    while True:
        norm = values / f0
        mean = norm.mean()
        if prev_mean == 0:
            change = 0.0 if mean == 0 else math.inf
        else:
            change = abs(mean - prev_mean) / prev_mean
        width = 2 * conv.z * norm.std(ddof=1) / math.sqrt(n)
        if change < conv.tau and width < conv.delta:
            return MagnitudeStats(m, values, f0, conv.z, "converged")
        if n >= conv.max_samples:
            return MagnitudeStats(m, values, f0, conv.z, "max_samples")
        step = min(conv.check_interval, conv.max_samples - n)
        values = np.concatenate([values, engine.samples(m, n + step, frag, start=n)])
        n += step
        prev_mean = mean


def compute_eafl(points, stats: list[MagnitudeStats], rates) -> RiskResult:
    """Rate-weighted sum of normalized functionality shortfall over the grid."""
    points = np.asarray(points, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if len(stats) != points.size or rates.size != points.size:
        raise ValidationError("statistics, rates and magnitude grid differ in length")
    if any(not math.isclose(s.magnitude, m) for s, m in zip(stats, points)):
        raise ValidationError("statistics do not match the magnitude grid")
    mean = np.array([s.mean_norm for s in stats])
    se = math.sqrt(sum((r * s.standard_error) ** 2 for r, s in zip(rates, stats)))
    return RiskResult(float(np.sum(rates * (1.0 - mean))), points, rates, mean, se)


def assess(inputs: RiskInputs, conv: ConvergenceConfig | None = None, master_seed: int = DEFAULT_SEED,
           fragility=None, engine: ScenarioEngine | None = None, points=None):
    """Convergence-controlled EAFL over the hazard's magnitude grid.

    Returns ``(RiskResult, list[MagnitudeStats])``.
    """
    conv = conv or ConvergenceConfig()
    engine = engine or ScenarioEngine(inputs, master_seed)
    frag = _fragility(inputs, fragility)
    hz = inputs.hazard
    points = hz.magnitude_grid.points if points is None else np.asarray(points, dtype=float)
    rates = magnitude_bin_rates(points, hz.gr_a, hz.gr_b)
    stats = [run_mc(m, conv, master_seed, inputs, frag, engine) for m in points]
    return compute_eafl(points, stats, rates), stats


def eafl_fixed(engine: ScenarioEngine, fragility: ComponentFragility, n_per_magnitude: int, points=None):
    """EAFL from the first *n_per_magnitude* scenarios at every grid point (no convergence loop)."""
    hz = engine.inputs.hazard
    points = hz.magnitude_grid.points if points is None else np.asarray(points, dtype=float)
    rates = magnitude_bin_rates(points, hz.gr_a, hz.gr_b)
    stats = [MagnitudeStats(m, engine.samples(m, n_per_magnitude, fragility), engine.baseline_mw)
             for m in points]
    return compute_eafl(points, stats, rates), stats
