"""Loading, validation and serialization of model inputs and analysis outputs.

All files are JSON (inputs) or JSON/CSV (outputs). Units are carried in field
names: ``_mw``, ``_km``, ``_g``, ``_mps``, ``_musd``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .fragility import DAMAGE_STATES, FragilityCurveSet
from .hazard import GmpeCoefficients, MECHANISMS
from .validation import ConfigError, ValidationError, check_positive, check_unique, require

COMPONENT_CLASSES = ("bus", "generator", "load", "substation")


@dataclass(frozen=True)
class Bus:
    id: int
    x_km: float
    y_km: float


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance_pu: float
    rate_mw: float
    substation_id: int | None = None


@dataclass(frozen=True)
class Generator:
    id: int
    bus_id: int
    pmin_mw: float
    pmax_mw: float
    cost_per_mwh: float


@dataclass(frozen=True)
class Load:
    id: int
    bus_id: int
    demand_mw: float


@dataclass(frozen=True)
class Substation:
    id: int
    line_id: int


@dataclass(frozen=True)
class PowerNetworkModel:
    """Static grid description.

    Damageable components are addressed by labels of the form ``"bus:13"``,
    ``"generator:13"``, ``"load:13"`` and ``"substation:5"``. The canonical
    component order (buses, generators, loads, substations, each in file
    order) is used by every per-component array in the package.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    substations: tuple[Substation, ...]
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        validate_network(self)

    @property
    def total_demand_mw(self) -> float:
        return float(sum(ld.demand_mw for ld in self.loads))

    @property
    def bus_index(self) -> dict[int, Bus]:
        return {b.id: b for b in self.buses}

    @property
    def line_index(self) -> dict[int, Line]:
        return {ln.id: ln for ln in self.lines}

    def components(self) -> list[tuple[str, int]]:
        return (
            [("bus", b.id) for b in self.buses]
            + [("generator", g.id) for g in self.generators]
            + [("load", ld.id) for ld in self.loads]
            + [("substation", s.id) for s in self.substations]
        )

    def component_labels(self) -> list[str]:
        return [f"{cls}:{cid}" for cls, cid in self.components()]

    def component_sites(self) -> np.ndarray:
        """Plan coordinates (km) of every component, shape ``(n_components, 2)``.

        Generators and loads sit at their host bus; a substation sits at the
        midpoint of the line it serves.
        """
        bus = self.bus_index
        lines = self.line_index
        pts = [(b.x_km, b.y_km) for b in self.buses]
        pts += [(bus[g.bus_id].x_km, bus[g.bus_id].y_km) for g in self.generators]
        pts += [(bus[ld.bus_id].x_km, bus[ld.bus_id].y_km) for ld in self.loads]
        for s in self.substations:
            ln = lines[s.line_id]
            a, b = bus[ln.from_bus], bus[ln.to_bus]
            pts.append(((a.x_km + b.x_km) / 2.0, (a.y_km + b.y_km) / 2.0))
        return np.asarray(pts, dtype=float)


def validate_network(net: PowerNetworkModel) -> None:
    check_positive(net.base_mva, "base_mva")
    check_unique((b.id for b in net.buses), "bus")
    check_unique((ln.id for ln in net.lines), "line")
    check_unique((g.id for g in net.generators), "generator")
    check_unique((ld.id for ld in net.loads), "load")
    check_unique((s.id for s in net.substations), "substation")
    bus_ids = {b.id for b in net.buses}
    for b in net.buses:
        if not (math.isfinite(b.x_km) and math.isfinite(b.y_km)):
            raise ValidationError(f"bus {b.id}: non-finite coordinates")
    for ln in net.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_ids:
                raise ValidationError(f"line {ln.id} references missing bus {end}")
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"line {ln.id} is a self-loop on bus {ln.from_bus}")
        check_positive(ln.reactance_pu, f"line {ln.id} reactance_pu")
        check_positive(ln.rate_mw, f"line {ln.id} rate_mw")
    for g in net.generators:
        if g.bus_id not in bus_ids:
            raise ValidationError(f"generator {g.id} references missing bus {g.bus_id}")
        if not (0 <= g.pmin_mw <= g.pmax_mw) or not math.isfinite(g.pmax_mw):
            raise ValidationError(f"generator {g.id}: need 0 <= pmin_mw <= pmax_mw")
        if not math.isfinite(g.cost_per_mwh):
            raise ValidationError(f"generator {g.id}: non-finite cost")
    for ld in net.loads:
        if ld.bus_id not in bus_ids:
            raise ValidationError(f"load {ld.id} references missing bus {ld.bus_id}")
        check_positive(ld.demand_mw, f"load {ld.id} demand_mw", strict=False)
    line_ids = {ln.id for ln in net.lines}
    hosted = set()
    for s in net.substations:
        if s.line_id not in line_ids:
            raise ValidationError(f"substation {s.id} references missing line {s.line_id}")
        if s.line_id in hosted:
            raise ValidationError(f"line {s.line_id} hosts more than one substation")
        hosted.add(s.line_id)
    by_line = {s.line_id: s.id for s in net.substations}
    for ln in net.lines:
        if ln.substation_id is not None and by_line.get(ln.id) != ln.substation_id:
            raise ValidationError(f"line {ln.id}: substation {ln.substation_id} mapping is inconsistent")


@dataclass(frozen=True)
class MagnitudeGrid:
    m_min: float
    m_max: float
    step: float

    def __post_init__(self):
        if not self.m_min < self.m_max and not math.isclose(self.m_min, self.m_max):
            raise ValidationError(f"magnitude grid needs m_min < m_max, got {self.m_min}..{self.m_max}")
        check_positive(self.step, "magnitude step")

    @property
    def points(self) -> np.ndarray:
        n = int(round((self.m_max - self.m_min) / self.step)) + 1
        return np.round(self.m_min + self.step * np.arange(n), 10)

    def refined(self, factor: int = 2) -> MagnitudeGrid:
        return MagnitudeGrid(self.m_min, self.m_max, self.step / factor)


@dataclass(frozen=True)
class HazardConfig:
    fault_p1: tuple[float, float] = (0.0, 50.0)
    fault_p2: tuple[float, float] = (40.0, 60.0)
    gr_a: float = 4.0
    gr_b: float = 1.0
    magnitude_grid: MagnitudeGrid = MagnitudeGrid(6.0, 8.5, 0.5)
    vs30_mps: float = 760.0
    mechanism: str = "SS"
    correlation_cap_km: float = 40.0
    gmpe: GmpeCoefficients = field(default_factory=GmpeCoefficients)

    def __post_init__(self):
        check_positive(self.gr_b, "gutenberg_richter.b")
        check_positive(self.vs30_mps, "vs30_mps")
        check_positive(self.correlation_cap_km, "correlation_cap_km")
        if self.mechanism not in MECHANISMS:
            raise ValidationError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if tuple(self.fault_p1) == tuple(self.fault_p2):
            raise ValidationError("fault endpoints coincide")


@dataclass(frozen=True)
class FragilityTable:
    """Baseline and retrofitted fragility curves per component class."""

    baseline: dict[str, FragilityCurveSet]
    retrofitted: dict[str, FragilityCurveSet]

    def __post_init__(self):
        for variant in (self.baseline, self.retrofitted):
            missing = set(COMPONENT_CLASSES) - set(variant)
            if missing:
                raise ValidationError(f"fragility table lacks classes {sorted(missing)}")


@dataclass(frozen=True)
class CostTable:
    """Retrofit cost per component class in million USD."""

    bus: float = 0.5
    generator: float = 1.0
    load: float = 0.3
    substation: float = 0.8
    overrides: dict[str, float] = field(default_factory=dict)
    budget_musd: float | None = None

    def __post_init__(self):
        for cls in COMPONENT_CLASSES:
            check_positive(getattr(self, cls), f"cost of {cls}")
        for label, c in self.overrides.items():
            check_positive(c, f"cost override {label}")

    def cost_of(self, label: str) -> float:
        if label in self.overrides:
            return float(self.overrides[label])
        return float(getattr(self, label.split(":", 1)[0]))

    def vector(self, labels) -> np.ndarray:
        return np.array([self.cost_of(lb) for lb in labels], dtype=float)


# ---------------------------------------------------------------- loading


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc


def bundled_path(name: str) -> Path:
    """Path of a file shipped in ``seisgrid/data``."""
    return Path(str(resources.files("seisgrid") / "data" / name))


def network_from_dict(doc: dict) -> PowerNetworkModel:
    where = "network"
    try:
        buses = tuple(Bus(int(b["id"]), float(b["x_km"]), float(b["y_km"])) for b in require(doc, "buses", where))
        lines = tuple(
            Line(
                int(ln["id"]), int(ln["from"]), int(ln["to"]), float(ln["x_pu"]), float(ln["rate_mw"]),
                None if ln.get("substation") is None else int(ln["substation"]),
            )
            for ln in require(doc, "lines", where)
        )
        gens = tuple(
            Generator(int(g["id"]), int(g["bus"]), float(g["pmin_mw"]), float(g["pmax_mw"]), float(g["cost_per_mwh"]))
            for g in require(doc, "generators", where)
        )
        loads = tuple(Load(int(d["id"]), int(d["bus"]), float(d["demand_mw"])) for d in require(doc, "loads", where))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigError, ValidationError)):
            raise
        raise ConfigError(f"{where}: malformed record ({exc!r})") from exc
    subs = tuple(sorted((Substation(ln.substation_id, ln.id) for ln in lines if ln.substation_id is not None),
                        key=lambda s: s.id))
    return PowerNetworkModel(buses, lines, gens, loads, subs, float(doc.get("base_mva", 100.0)), str(doc.get("name", "")))


def network_to_dict(net: PowerNetworkModel) -> dict:
    lines = []
    for ln in net.lines:
        d = {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "x_pu": ln.reactance_pu, "rate_mw": ln.rate_mw}
        if ln.substation_id is not None:
            d["substation"] = ln.substation_id
        lines.append(d)
    return {
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": [{"id": b.id, "x_km": b.x_km, "y_km": b.y_km} for b in net.buses],
        "lines": lines,
        "generators": [
            {"id": g.id, "bus": g.bus_id, "pmin_mw": g.pmin_mw, "pmax_mw": g.pmax_mw, "cost_per_mwh": g.cost_per_mwh}
            for g in net.generators
        ],
        "loads": [{"id": d.id, "bus": d.bus_id, "demand_mw": d.demand_mw} for d in net.loads],
    }


def load_network(path=None) -> PowerNetworkModel:
    """Read and validate a ``network.json`` file (bundled RTS-24 when *path* is None)."""
    return network_from_dict(_read_json(path or bundled_path("rts24_network.json")))


def write_network(net: PowerNetworkModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(network_to_dict(net), indent=2) + "\n", encoding="utf-8")
    return path


def hazard_from_dict(doc: dict) -> HazardConfig:
    where = "hazard"
    try:
        fault = require(doc, "fault", where)
        gr = require(doc, "gutenberg_richter", where)
        mags = require(doc, "magnitudes", where)
        overrides = doc.get("gmpe") or {}
        known = {f.name for f in fields(GmpeCoefficients)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"{where}: unknown gmpe coefficients {sorted(unknown)}")
        return HazardConfig(
            fault_p1=tuple(float(v) for v in require(fault, "p1", where)),
            fault_p2=tuple(float(v) for v in require(fault, "p2", where)),
            gr_a=float(require(gr, "a", where)),
            gr_b=float(require(gr, "b", where)),
            magnitude_grid=MagnitudeGrid(float(mags["min"]), float(mags["max"]), float(mags["step"])),
            vs30_mps=float(doc.get("vs30_mps", 760.0)),
            mechanism=str(doc.get("mechanism", "SS")),
            correlation_cap_km=float(doc.get("correlation_cap_km", 40.0)),
            gmpe=replace(GmpeCoefficients(), **{k: float(v) for k, v in overrides.items()}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigError, ValidationError)):
            raise
        raise ConfigError(f"{where}: malformed record ({exc!r})") from exc


def load_hazard(path=None) -> HazardConfig:
    return hazard_from_dict(_read_json(path or bundled_path("hazard.json")))


def _curves_from_dict(doc: dict, where: str) -> FragilityCurveSet:
    try:
        medians = [float(doc[ds]["median_g"]) for ds in DAMAGE_STATES]
        betas = [float(doc[ds]["beta"]) for ds in DAMAGE_STATES]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: malformed damage-state entry ({exc!r})") from exc
    try:
        return FragilityCurveSet(tuple(medians), tuple(betas))
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def fragility_from_dict(doc: dict) -> FragilityTable:
    out = {}
    for variant in ("baseline", "retrofitted"):
        block = require(doc, variant, "fragility")
        out[variant] = {cls: _curves_from_dict(require(block, cls, f"fragility.{variant}"), f"fragility.{variant}.{cls}")
                        for cls in COMPONENT_CLASSES}
    return FragilityTable(**out)


def load_fragility(path=None) -> FragilityTable:
    return fragility_from_dict(_read_json(path or bundled_path("fragility.json")))


def costs_from_dict(doc: dict) -> CostTable:
    try:
        budget = doc.get("budget_musd")
        return CostTable(
            **{cls: float(require(doc, cls, "costs")) for cls in COMPONENT_CLASSES},
            overrides={str(k): float(v) for k, v in (doc.get("overrides") or {}).items()},
            budget_musd=None if budget is None else float(budget),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigError, ValidationError)):
            raise
        raise ConfigError(f"costs: malformed record ({exc!r})") from exc


def load_costs(path=None) -> CostTable:
    return costs_from_dict(_read_json(path or bundled_path("costs.json")))


# ---------------------------------------------------------------- writing


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows, seed) -> str:
    buf = io.StringIO()
    if seed is not None:
        buf.write(f"# seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class AnalysisResults:
    """Container of everything an analysis run may emit.

    Only populated members are written. ``seed`` is recorded in each file.
    """

    seed: int | None = None
    risk: object | None = None  # simulation.RiskResult
    magnitude_stats: list | None = None  # list[simulation.MagnitudeStats]
    sensitivity: list | None = None  # list[retrofit.SensitivityRecord]
    category_eafl: dict | None = None
    plan: object | None = None  # retrofit.RetrofitPlan
    ga_history: list | None = None
    tradeoff: list | None = None  # list[retrofit.TradeoffRow]
    scenario: dict | None = None
    manifest: dict | None = None


def write_results(results: AnalysisResults, out_dir) -> list[Path]:
    """Serialize populated members of *results* into *out_dir*.

    Output is a pure function of the results; identical inputs give
    byte-identical files. All content is rendered before anything is written so
    a validation error leaves the directory untouched.
    """
    seed = results.seed
    files: dict[str, str] = {}
    if results.risk is not None:
        risk = results.risk
        if len(risk.magnitudes) == 0:
            raise ValidationError("risk result has an empty magnitude grid")
        files["risk.json"] = _dump_json({"seed": seed, **risk.to_dict()})
    if results.magnitude_stats is not None:
        if not results.magnitude_stats:
            raise ValidationError("no per-magnitude statistics to write")
        rows = [
            [repr(float(s.magnitude)), repr(float(s.mean_norm)), repr(float(s.ci_lo)), repr(float(s.ci_hi)), s.n_samples]
            for s in results.magnitude_stats
        ]
        files["functionality_by_magnitude.csv"] = _csv_text(
            ["M", "mean_norm_func", "ci_lo", "ci_hi", "n_samples"], rows, seed)
    if results.sensitivity is not None:
        rows = [[r.component, repr(float(r.s_up)), repr(float(r.s_down))] for r in results.sensitivity]
        files["sensitivity.csv"] = _csv_text(["component", "S_i_up", "S_i_down"], rows, seed)
    if results.category_eafl is not None:
        rows = [[k, repr(float(v))] for k, v in results.category_eafl.items()]
        files["category_sensitivity.csv"] = _csv_text(["category", "eafl"], rows, seed)
    if results.plan is not None:
        files["plan.json"] = _dump_json({"seed": seed, **results.plan.to_dict()})
    if results.ga_history is not None:
        rows = [[i, repr(float(v))] for i, v in enumerate(results.ga_history)]
        files["ga_history.csv"] = _csv_text(["generation", "best_fitness"], rows, seed)
    if results.tradeoff is not None:
        rows = [
            [repr(float(r.budget)), repr(float(r.eafl)), repr(float(r.cost)), ";".join(r.selected)]
            for r in results.tradeoff
        ]
        files["tradeoff.csv"] = _csv_text(["budget", "eafl", "cost_musd", "selected"], rows, seed)
    if results.scenario is not None:
        files[f"scenario_{seed}.json"] = _dump_json(results.scenario)
    if results.manifest is not None:
        files["manifest.json"] = _dump_json(results.manifest)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written


def read_csv_rows(path) -> list[dict]:
    """Read one of the CSV outputs back (comment lines skipped)."""
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
