"""Post-damage topology, island detection and island bookkeeping."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config_io import PowerNetworkModel
from .fragility import DamageRealization
from .validation import ValidationError


class GridIndex:
    """Integer-indexed view of a network for fast per-sample evaluation.

    Component positions follow the canonical order of
    :meth:`PowerNetworkModel.components`.
    """

    def __init__(self, net: PowerNetworkModel):
        self.net = net
        self.labels = net.component_labels()
        self.bus_ids = [b.id for b in net.buses]
        self.bus_pos = {b: i for i, b in enumerate(self.bus_ids)}
        self.n_bus = len(net.buses)
        self.gen_off = self.n_bus
        self.load_off = self.gen_off + len(net.generators)
        self.sub_off = self.load_off + len(net.loads)
        self.n_components = self.sub_off + len(net.substations)
        self.line_ids = [ln.id for ln in net.lines]
        self.line_from = np.array([self.bus_pos[ln.from_bus] for ln in net.lines], dtype=np.intp)
        self.line_to = np.array([self.bus_pos[ln.to_bus] for ln in net.lines], dtype=np.intp)
        sub_of_line = {s.line_id: k for k, s in enumerate(net.substations)}
        self.line_sub = np.array([self.sub_off + sub_of_line[ln.id] if ln.id in sub_of_line else -1
                                  for ln in net.lines], dtype=np.intp)
        self.gen_bus = np.array([self.bus_pos[g.bus_id] for g in net.generators], dtype=np.intp)
        self.load_bus = np.array([self.bus_pos[ld.bus_id] for ld in net.loads], dtype=np.intp)
        self.gen_pmax = np.array([g.pmax_mw for g in net.generators])
        self.load_pd = np.array([ld.demand_mw for ld in net.loads])

    def alpha_vector(self, damage: DamageRealization) -> np.ndarray:
        if list(damage.labels) != self.labels:
            lookup = dict(zip(damage.labels, damage.alpha))
            missing = set(self.labels) - set(lookup)
            if missing:
                raise ValidationError(f"damage realization lacks components {sorted(missing)[:5]}")
            return np.array([lookup[lb] for lb in self.labels], dtype=float)
        return np.asarray(damage.alpha, dtype=float)

    def line_alpha(self, alpha: np.ndarray) -> np.ndarray:
        la = np.ones(len(self.line_ids))
        has = self.line_sub >= 0
        la[has] = alpha[self.line_sub[has]]
        return la

    def gen_alpha(self, alpha):
        return alpha[self.gen_off:self.load_off]

    def load_alpha(self, alpha):
        return alpha[self.load_off:self.sub_off]


@dataclass
class TopologyState:
    surviving_buses: tuple[int, ...]
    surviving_lines: dict[int, float]  # line id -> alpha
    adjacency: dict[int, set[int]]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adjacency.get(i, ())


@dataclass
class Island:
    buses: tuple[int, ...]
    lines: dict[int, float] = field(default_factory=dict)  # id -> alpha
    generators: dict[int, float] = field(default_factory=dict)  # id -> alpha
    loads: dict[int, float] = field(default_factory=dict)  # id -> alpha
    slack: int | None = None


@dataclass
class IslandPartition:
    islands: list[Island]

    def __len__(self):
        return len(self.islands)

    def membership(self) -> dict[int, int]:
        return {b: k for k, isl in enumerate(self.islands) for b in isl.buses}


def topology_from_alpha(index: GridIndex, alpha: np.ndarray) -> TopologyState:
    bus_ok = alpha[: index.n_bus] >= 1.0
    la = index.line_alpha(alpha)
    live = bus_ok[index.line_from] & bus_ok[index.line_to] & (la > 0)
    buses = tuple(b for b, ok in zip(index.bus_ids, bus_ok) if ok)
    adj: dict[int, set[int]] = {b: set() for b in buses}
    lines = {}
    for k in np.flatnonzero(live):
        i, j = index.bus_ids[index.line_from[k]], index.bus_ids[index.line_to[k]]
        adj[i].add(j)
        adj[j].add(i)
        lines[index.line_ids[k]] = float(la[k])
    return TopologyState(buses, lines, adj)


def build_topology(network: PowerNetworkModel, damage: DamageRealization, index: GridIndex | None = None) -> TopologyState:
    """Buses survive iff fully functional; a line survives iff both ends do and its alpha > 0."""
    index = index or GridIndex(network)
    return topology_from_alpha(index, index.alpha_vector(damage))


def connected_components(nodes, adjacency) -> list[tuple]:
    """Breadth-first components, each sorted, ordered by smallest member."""
    seen = set()
    comps = []
    for start in sorted(nodes):
        if start in seen:
            continue
        seen.add(start)
        queue = deque([start])
        comp = []
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adjacency.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        comps.append(tuple(sorted(comp)))
    return comps


def find_islands(topology: TopologyState) -> IslandPartition:
    """Partition surviving buses into electrical islands (no component data attached)."""
    return IslandPartition([Island(c) for c in connected_components(topology.surviving_buses, topology.adjacency)])


def attach_components(partition: IslandPartition, topology: TopologyState, index: GridIndex,
                      alpha: np.ndarray) -> IslandPartition:
    """Fill in lines, generator and load alphas for each island in place."""
    member = partition.membership()
    for isl in partition.islands:
        isl.lines, isl.generators, isl.loads = {}, {}, {}
    lines = index.net.line_index
    for lid in sorted(topology.surviving_lines):
        partition.islands[member[lines[lid].from_bus]].lines[lid] = topology.surviving_lines[lid]
    ga, la = index.gen_alpha(alpha), index.load_alpha(alpha)
    for k, g in enumerate(index.net.generators):
        if g.bus_id in member:
            partition.islands[member[g.bus_id]].generators[g.id] = float(ga[k])
    for k, ld in enumerate(index.net.loads):
        if ld.bus_id in member:
            partition.islands[member[ld.bus_id]].loads[ld.id] = float(la[k])
    return partition


def island_viability(island: Island, network: PowerNetworkModel, damage: DamageRealization | None = None) -> bool:
    """An island is viable with an operational generator and a load of nonzero effective demand.

    Alphas are read from the island's component maps, or from *damage* when
    the island has not been annotated yet.
    """
    if not island.buses:
        raise ValidationError("empty island")
    gens, loads = island.generators, island.loads
    if damage is not None and not gens and not loads:
        lookup = dict(zip(damage.labels, damage.alpha))
        buses = set(island.buses)
        gens = {g.id: lookup[f"generator:{g.id}"] for g in network.generators if g.bus_id in buses}
        loads = {d.id: lookup[f"load:{d.id}"] for d in network.loads if d.bus_id in buses}
    demand = {d.id: d.demand_mw for d in network.loads}
    pmax = {g.id: g.pmax_mw for g in network.generators}
    has_gen = any(a > 0 and pmax[g] > 0 for g, a in gens.items())
    has_load = any(a * demand[d] > 0 for d, a in loads.items())
    return has_gen and has_load


def designate_slack(island: Island, network: PowerNetworkModel) -> int:
    """Generator bus with the largest derated capacity; ties go to the smallest bus id."""
    cap: dict[int, float] = {}
    gens = {g.id: g for g in network.generators}
    for gid, a in island.generators.items():
        g = gens[gid]
        if a > 0 and g.pmax_mw > 0:
            cap[g.bus_id] = cap.get(g.bus_id, 0.0) + a * g.pmax_mw
    if not cap:
        raise ValidationError(f"island {island.buses} has no operational generator")
    return min(cap, key=lambda b: (-cap[b], b))


def partition_damage(network: PowerNetworkModel, damage: DamageRealization,
                     index: GridIndex | None = None) -> tuple[TopologyState, IslandPartition]:
    """Topology plus fully annotated islands (slack set on viable ones)."""
    index = index or GridIndex(network)
    alpha = index.alpha_vector(damage)
    topo = topology_from_alpha(index, alpha)
    part = attach_components(find_islands(topo), topo, index, alpha)
    for isl in part.islands:
        if island_viability(isl, network):
            isl.slack = designate_slack(isl, network)
    return topo, part
