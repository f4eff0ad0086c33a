"""Per-island DC optimal power flow with whole-load shedding."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .config_io import PowerNetworkModel
from .network import Island, designate_slack, island_viability
from .validation import ValidationError

FEAS_TOL = 1e-8  # per-unit
MAX_LP_ITER = 200


class SingularNetworkError(RuntimeError):
    """The reduced susceptance matrix of an island could not be inverted."""


@dataclass
class IslandCase:
    """One island's dispatch problem in MW, with all deratings applied."""

    buses: tuple[int, ...]
    slack: int
    line_ids: np.ndarray
    line_from: np.ndarray  # bus ids
    line_to: np.ndarray
    susceptance: np.ndarray  # 1/x, per unit
    limit_mw: np.ndarray
    gen_ids: np.ndarray
    gen_bus: np.ndarray
    pg_min: np.ndarray
    pg_max: np.ndarray
    cost: np.ndarray  # per MWh
    load_ids: np.ndarray
    load_bus: np.ndarray
    demand_mw: np.ndarray
    base_mva: float = 100.0

    def __post_init__(self):
        bset = set(self.buses)
        if self.slack not in bset:
            raise ValidationError(f"slack bus {self.slack} is not in the island")
        for arr, what in ((self.line_from, "line"), (self.line_to, "line"), (self.gen_bus, "generator"),
                          (self.load_bus, "load")):
            if any(int(b) not in bset for b in arr):
                raise ValidationError(f"{what} references a bus outside the island")
        if np.any(self.susceptance <= 0) or np.any(self.limit_mw < 0):
            raise ValidationError("susceptances must be positive and limits non-negative")

    def without_load(self, load_id: int) -> IslandCase:
        keep = self.load_ids != load_id
        return replace(self, load_ids=self.load_ids[keep], load_bus=self.load_bus[keep],
                       demand_mw=self.demand_mw[keep])

    def with_slack(self, bus: int) -> IslandCase:
        return replace(self, slack=bus)

    def signature(self) -> bytes:
        """Hashable identity of the dispatch problem (for memoization)."""
        parts = [np.asarray(self.buses, dtype=np.int64), np.array([self.slack], dtype=np.int64),
                 self.line_ids.astype(np.int64), self.limit_mw, self.gen_ids.astype(np.int64), self.pg_min,
                 self.pg_max, self.load_ids.astype(np.int64), self.demand_mw]
        return b"|".join(np.ascontiguousarray(p).tobytes() for p in parts)


@dataclass
class DispatchResult:
    converged: bool
    pg: dict[int, float] = field(default_factory=dict)
    angles: dict[int, float] = field(default_factory=dict)
    flows: dict[int, float] = field(default_factory=dict)
    served: dict[int, float] = field(default_factory=dict)
    shed_load_ids: list[int] = field(default_factory=list)
    objective_cost: float = 0.0
    status: str = ""

    @property
    def served_mw(self) -> float:
        return float(sum(self.served.values()))

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "served_mw": self.served_mw,
            "objective_cost": self.objective_cost,
            "shed_load_ids": list(self.shed_load_ids),
            "pg_mw": {str(k): v for k, v in self.pg.items()},
            "served_mw_by_load": {str(k): v for k, v in self.served.items()},
            "flows_mw": {str(k): v for k, v in self.flows.items()},
            "angles_rad": {str(k): v for k, v in self.angles.items()},
        }


def assemble_case(island: Island, network: PowerNetworkModel, damage=None) -> IslandCase:
    """Build the island's dispatch problem from its annotated component alphas.

    When the island carries no component annotations, alphas are taken from
    *damage* (a :class:`~seisgrid.fragility.DamageRealization`).
    """
    if damage is not None and not island.generators and not island.loads:
        lookup = dict(zip(damage.labels, damage.alpha))
        buses = set(island.buses)
        island = Island(
            island.buses,
            lines={ln.id: (lookup[f"substation:{ln.substation_id}"] if ln.substation_id is not None else 1.0)
                   for ln in network.lines if ln.from_bus in buses and ln.to_bus in buses},
            generators={g.id: lookup[f"generator:{g.id}"] for g in network.generators if g.bus_id in buses},
            loads={d.id: lookup[f"load:{d.id}"] for d in network.loads if d.bus_id in buses},
            slack=island.slack,
        )
    if not island_viability(island, network):
        raise ValidationError(f"island {island.buses} is not viable")
    slack = island.slack if island.slack is not None else designate_slack(island, network)
    lines = network.line_index
    lids = [lid for lid, a in sorted(island.lines.items()) if a > 0]
    gens = {g.id: g for g in network.generators}
    gids = [gid for gid, a in sorted(island.generators.items()) if a > 0]
    loads = {d.id: d for d in network.loads}
    dids = sorted(island.loads)
    ga = np.array([island.generators[g] for g in gids])
    return IslandCase(
        buses=tuple(island.buses),
        slack=slack,
        line_ids=np.array(lids, dtype=np.int64),
        line_from=np.array([lines[i].from_bus for i in lids], dtype=np.int64),
        line_to=np.array([lines[i].to_bus for i in lids], dtype=np.int64),
        susceptance=np.array([1.0 / lines[i].reactance_pu for i in lids]),
        limit_mw=np.array([island.lines[i] * lines[i].rate_mw for i in lids]),
        gen_ids=np.array(gids, dtype=np.int64),
        gen_bus=np.array([gens[g].bus_id for g in gids], dtype=np.int64),
        pg_min=ga * np.array([gens[g].pmin_mw for g in gids]),
        pg_max=ga * np.array([gens[g].pmax_mw for g in gids]),
        cost=np.array([gens[g].cost_per_mwh for g in gids]),
        load_ids=np.array(dids, dtype=np.int64),
        load_bus=np.array([loads[d].bus_id for d in dids], dtype=np.int64),
        demand_mw=np.array([island.loads[d] * loads[d].demand_mw for d in dids]),
        base_mva=network.base_mva,
    )


def _incidence(case: IslandCase):
    pos = {b: i for i, b in enumerate(case.buses)}
    nb, nl = len(case.buses), len(case.line_ids)
    c = np.zeros((nl, nb))
    rows = np.arange(nl)
    c[rows, [pos[int(b)] for b in case.line_from]] = 1.0
    c[rows, [pos[int(b)] for b in case.line_to]] = -1.0
    gmap = np.zeros((nb, len(case.gen_ids)))
    gmap[[pos[int(b)] for b in case.gen_bus], np.arange(len(case.gen_ids))] = 1.0
    pd = np.zeros(nb)
    np.add.at(pd, [pos[int(b)] for b in case.load_bus], case.demand_mw)
    return pos, c, gmap, pd


def _result(case, pg_mw, theta, c, objective, status):
    flows = case.susceptance * (c @ theta) * case.base_mva
    return DispatchResult(
        converged=True,
        pg={int(g): float(p) for g, p in zip(case.gen_ids, pg_mw)},
        angles={int(b): float(t) for b, t in zip(case.buses, theta)},
        flows={int(lid): float(f) for lid, f in zip(case.line_ids, flows)},
        served={int(d): float(p) for d, p in zip(case.load_ids, case.demand_mw)},
        objective_cost=float(objective),
        status=status,
    )


def _merit_order(case: IslandCase, total: float):
    """Cheapest dispatch ignoring the network, or None if the bounds cannot meet *total*."""
    pg = case.pg_min.copy()
    rest = total - pg.sum()
    if rest < -FEAS_TOL * case.base_mva or case.pg_max.sum() < total - FEAS_TOL * case.base_mva:
        return None
    for k in np.lexsort((case.gen_ids, case.cost)):
        if rest <= 0:
            break
        take = min(case.pg_max[k] - pg[k], rest)
        pg[k] += take
        rest -= take
    return pg


def _angles(case, c, injection_pu, pos):
    nb = len(case.buses)
    bbus = c.T @ (case.susceptance[:, None] * c)
    keep = np.array([i for i in range(nb) if i != pos[case.slack]], dtype=np.intp)
    theta = np.zeros(nb)
    if keep.size:
        try:
            theta[keep] = np.linalg.solve(bbus[np.ix_(keep, keep)], injection_pu[keep])
        except np.linalg.LinAlgError as exc:
            raise SingularNetworkError(f"island {case.buses}: singular susceptance matrix") from exc
    return theta


def solve_island(case: IslandCase) -> DispatchResult:
    """Least-cost dispatch of one island with fixed loads.

    The network-free merit order is tried first; when its DC flows respect
    every line limit it is optimal for the full problem. Otherwise the LP in
    (generation, angle) variables is solved with HiGHS on a per-unit scale.
    """
    if not np.all(np.isfinite(case.susceptance)):
        raise SingularNetworkError(f"island {case.buses}: non-finite susceptance")
    base = case.base_mva
    pos, c, gmap, pd = _incidence(case)
    total = float(case.demand_mw.sum())
    pg = _merit_order(case, total)
    if pg is None:
        return DispatchResult(False, status="generation bounds cannot match demand")
    theta = _angles(case, c, (gmap @ pg - pd) / base, pos)
    flows = case.susceptance * (c @ theta) * base
    if np.all(np.abs(flows) <= case.limit_mw + FEAS_TOL * base):
        return _result(case, pg, theta, c, float(case.cost @ pg), "optimal (unconstrained merit order)")

    ng, nb = len(case.gen_ids), len(case.buses)
    bbus = c.T @ (case.susceptance[:, None] * c)
    bf = case.susceptance[:, None] * c
    a_eq = np.hstack([gmap, -bbus])
    pad = np.zeros((len(bf), ng))
    a_ub = np.vstack([np.hstack([pad, bf]), np.hstack([pad, -bf])])
    b_ub = np.concatenate([case.limit_mw, case.limit_mw]) / base
    bounds = [(lo / base, hi / base) for lo, hi in zip(case.pg_min, case.pg_max)]
    bounds += [(0.0, 0.0) if i == pos[case.slack] else (None, None) for i in range(nb)]
    res = linprog(
        np.concatenate([case.cost * base, np.zeros(nb)]),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=pd / base, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": FEAS_TOL,
                 "maxiter": MAX_LP_ITER * 50},
    )
    if res.status != 0:
        return DispatchResult(False, status=res.message)
    pg_mw = np.clip(res.x[:ng] * base, case.pg_min, case.pg_max)
    return _result(case, pg_mw, res.x[ng:], c, float(case.cost @ pg_mw), "optimal (lp)")


def solve_with_shedding(case: IslandCase, retry_limit: int | None = None) -> DispatchResult:
    """Solve, shedding the smallest remaining load (then smallest id) after each failure.

    Returns a non-converged result with nothing served when the retry limit is
    exhausted or no load is left to serve.
    """
    positive = int(np.count_nonzero(case.demand_mw > 0))
    retry_limit = positive if retry_limit is None else retry_limit
    shed: list[int] = []
    current = case
    for attempt in range(retry_limit + 1):
        if not np.any(current.demand_mw > 0):
            break
        res = solve_island(current)
        if res.converged:
            res.shed_load_ids = shed
            for d in shed:
                res.served[d] = 0.0
            return res
        if attempt == retry_limit:
            break
        live = current.demand_mw > 0
        order = np.lexsort((current.load_ids[live], current.demand_mw[live]))
        victim = int(current.load_ids[live][order[0]])
        shed.append(victim)
        current = current.without_load(victim)
    return DispatchResult(False, served={int(d): 0.0 for d in case.load_ids}, shed_load_ids=shed,
                          status="infeasible after load shedding")


def system_functionality(results) -> float:
    """Total load served (MW) across islands; non-viable (None) and non-converged islands count zero."""
    return float(sum(r.served_mw for r in results if r is not None and r.converged))


def check_dispatch(case: IslandCase, res: DispatchResult, tol: float = 1e-6) -> list[str]:
    """Return the list of violated dispatch invariants (empty when the dispatch is sound)."""
    if not res.converged:
        return []
    problems = []
    base = case.base_mva
    served = np.array([res.served[int(d)] for d in case.load_ids]) if len(case.load_ids) else np.zeros(0)
    for d, s, full in zip(case.load_ids, served, case.demand_mw):
        if not (abs(s) <= 1e-9 or abs(s - full) <= 1e-9):
            problems.append(f"load {d}: partial service {s} of {full}")
    theta = np.array([res.angles[int(b)] for b in case.buses])
    pg = np.array([res.pg[int(g)] for g in case.gen_ids])
    pos, c, gmap, _ = _incidence(case)
    pd = np.zeros(len(case.buses))
    np.add.at(pd, [pos[int(b)] for b in case.load_bus], served)
    mismatch = gmap @ pg - pd - (c.T @ (case.susceptance * (c @ theta))) * base
    if np.any(np.abs(mismatch) > tol * base):
        problems.append(f"nodal balance residual {np.abs(mismatch).max():.3g} MW")
    flows = case.susceptance * (c @ theta) * base
    if np.any(np.abs(flows) > case.limit_mw + tol):
        problems.append("line limit exceeded")
    if np.any(pg < case.pg_min - tol) or np.any(pg > case.pg_max + tol):
        problems.append("generator bound violated")
    if abs(res.angles[case.slack]) > 0:
        problems.append("slack angle is not zero")
    return problems


def dispatch_islands(partition, network: PowerNetworkModel, retry_limit: int | None = None) -> list[DispatchResult | None]:
    """Dispatch every island; non-viable islands map to None (served 0)."""
    out = []
    for isl in partition.islands:
        if not island_viability(isl, network):
            out.append(None)
            continue
        out.append(solve_with_shedding(assemble_case(isl, network), retry_limit))
    return out
