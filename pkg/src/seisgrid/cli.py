"""Command-line entry point: ``seisgrid <subcommand> [options]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config_io import (AnalysisResults, bundled_path, load_costs, load_fragility, load_hazard, load_network,
                        write_results)
from .dcopf import check_dispatch, assemble_case, dispatch_islands
from .network import partition_damage
from .fragility import DamageRealization
from .retrofit import (GaParams, RetrofitProblem, budget_sweep, category_sensitivity, ga_optimize,
                       sensitivity_ranking)
from .simulation import DEFAULT_SEED, ConvergenceConfig, RiskInputs, ScenarioEngine, assess
from .validation import ConfigError, ValidationError

EXIT_OK, EXIT_ERROR, EXIT_INVARIANT = 0, 1, 3

_INPUTS = {"network": "rts24_network.json", "hazard": "hazard.json", "fragility": "fragility.json",
           "costs": "costs.json"}


class InvariantViolation(RuntimeError):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("inputs and outputs")
    for name in _INPUTS:
        g.add_argument(f"--{name}", type=Path, default=None, help=f"{name} JSON (default: bundled)")
    g.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default: {DEFAULT_SEED})")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    g.add_argument("--json", action="store_true", help="machine-readable stdout")
    s = p.add_argument_group("sampling")
    s.add_argument("--tau", type=float, default=0.01, help="relative mean-change tolerance")
    s.add_argument("--delta", type=float, default=0.05, help="CI width tolerance (normalized units)")
    s.add_argument("--min-samples", type=int, default=100)
    s.add_argument("--max-samples", type=int, default=2000)
    s.add_argument("--check-interval", type=int, default=25)
    return p


def _ga_args(p):
    p.add_argument("--population", type=int, default=40)
    p.add_argument("--generations", type=int, default=80)
    p.add_argument("--stall", type=int, default=15, help="stop after this many generations without improvement")
    p.add_argument("--fitness-samples", type=int, default=100, help="scenarios per magnitude per fitness call")
    p.add_argument("--gamma", type=float, default=10.0, help="budget penalty factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seisgrid", description="Seismic risk and retrofit planning for power grids")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("baseline", parents=[common], help="intact-network dispatch")
    p = sub.add_parser("scenario", parents=[common], help="one sampled earthquake scenario")
    p.add_argument("--magnitude", type=float, required=True)
    p.add_argument("--index", type=int, default=0, help="scenario index within the magnitude stream")
    p = sub.add_parser("assess", parents=[common], help="EAFL over the magnitude grid")
    p.add_argument("--retrofit", default=None, help="comma-separated component labels or a plan.json")
    p = sub.add_parser("sensitivity", parents=[common], help="OAT and category sensitivity of EAFL")
    p.add_argument("--perturb", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=100, help="scenarios per magnitude")
    p = sub.add_parser("optimize", parents=[common], help="GA retrofit plan under a budget")
    p.add_argument("--budget", type=float, required=True, help="million USD")
    _ga_args(p)
    p = sub.add_parser("tradeoff", parents=[common], help="GA plans across several budgets")
    p.add_argument("--budgets", required=True, help="comma-separated ascending budgets (million USD)")
    _ga_args(p)
    return parser


# ------------------------------------------------------------------ helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_inputs(args) -> tuple[RiskInputs, dict]:
    loaders = {"network": load_network, "hazard": load_hazard, "fragility": load_fragility, "costs": load_costs}
    loaded, record = {}, {}
    for name, fname in _INPUTS.items():
        path = getattr(args, name)
        loaded[name] = loaders[name](path)
        src = path if path is not None else bundled_path(fname)
        record[name] = {"path": str(path) if path is not None else f"bundled:{fname}", "sha256": _sha256(Path(src))}
    return RiskInputs(**loaded), record


def _conv(args) -> ConvergenceConfig:
    return ConvergenceConfig(tau=args.tau, delta=args.delta, min_samples=args.min_samples,
                             max_samples=args.max_samples, check_interval=args.check_interval)


def _manifest(args, inputs_record: dict, **overrides) -> dict:
    # worker count is deliberately left out: it never changes results
    return {
        "seed": args.seed,
        "subcommand": args.command,
        "version": __version__,
        "inputs": inputs_record,
        "output_dir": str(args.out),
        "sampling": {"tau": args.tau, "delta": args.delta, "min_samples": args.min_samples,
                     "max_samples": args.max_samples, "check_interval": args.check_interval},
        "overrides": overrides,
    }


def _ga_params(args) -> GaParams:
    return GaParams(population_size=args.population, generations=args.generations, penalty_gamma=args.gamma,
                    stall_generations=args.stall, fitness_samples=args.fitness_samples, seed=args.seed)


def _emit(args, text: str, doc: dict):
    print(json.dumps(doc, indent=2, sort_keys=True) if args.json else text)


def _check_risk(risk):
    contrib = risk.contributions
    if np.any(contrib < -1e-15) or not math.isclose(risk.eafl, float(contrib.sum()), rel_tol=1e-12, abs_tol=1e-15):
        raise InvariantViolation("EAFL is not the non-negative sum of its contributions")
    if np.any(risk.mean_norm < -1e-12) or np.any(risk.mean_norm > 1 + 1e-9):
        raise InvariantViolation("normalized functionality outside [0, 1]")


def _check_plan(plan, budget):
    if plan.cost_musd > budget + 1e-9 * max(1.0, budget):
        raise InvariantViolation(f"plan cost {plan.cost_musd} exceeds budget {budget}")


def _parse_retrofit(value: str | None, labels):
    if value is None:
        return None
    p = Path(value)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())["selected"]
    return [s.strip() for s in value.split(",") if s.strip()]


# ------------------------------------------------------------------ commands

def cmd_baseline(args) -> int:
    net = load_network(args.network)
    labels = net.component_labels()
    intact = DamageRealization(labels, np.zeros(len(labels), dtype=np.int8), np.ones(len(labels)))
    _, part = partition_damage(net, intact)
    results = dispatch_islands(part, net)
    served, flows, problems = 0.0, {}, []
    for isl, res in zip(part.islands, results):
        if res is None:
            if any(ld.bus_id in isl.buses and ld.demand_mw > 0 for ld in net.loads):
                problems.append(f"island {list(isl.buses)} has load but no operational generation")
            continue
        if not res.converged:
            problems.append(f"island {list(isl.buses)}: dispatch failed ({res.status})")
            continue
        problems += check_dispatch(assemble_case(isl, net), res)
        if res.shed_load_ids:
            problems.append(f"island {list(isl.buses)} must shed loads {res.shed_load_ids}")
        served += res.served_mw
        flows.update(res.flows)
    demand = net.total_demand_mw
    if served < demand * (1 - 1e-6):
        problems.append(f"served {served:.1f} MW of {demand:.1f} MW demand")
    doc = {"served_mw": served, "demand_mw": demand, "feasible": not problems, "diagnostics": problems,
           "flows_mw": {str(k): flows[k] for k in sorted(flows)}}
    lines = [f"served = {served:.1f} MW"]
    lidx = net.line_index
    for k in sorted(flows):
        ln = lidx[k]
        lines.append(f"line {k:>3} ({ln.from_bus}-{ln.to_bus}): {flows[k]:9.2f} MW  (limit {ln.rate_mw:g})")
    if problems:
        lines.append("INFEASIBLE intact network:")
        lines += [f"  {p}" for p in problems]
    _emit(args, "\n".join(lines), doc)
    return EXIT_OK if not problems else EXIT_ERROR


def cmd_scenario(args) -> int:
    inputs, rec = _load_inputs(args)
    engine = ScenarioEngine(inputs, args.seed, threads=args.threads)
    record = engine.scenario_record(args.magnitude, args.index, inputs.component_fragility())
    if not 0 <= record["functionality_mw"] <= engine.baseline_mw * (1 + 1e-9):
        raise InvariantViolation("scenario functionality outside [0, baseline]")
    write_results(AnalysisResults(seed=args.seed, scenario=record,
                                  manifest=_manifest(args, rec, magnitude=args.magnitude, index=args.index)), args.out)
    _emit(args, f"M={args.magnitude}: served {record['functionality_mw']:.1f} MW "
                f"({record['normalized_functionality']:.3f}) across {len(record['islands'])} island(s)",
          {k: record[k] for k in ("seed", "magnitude", "functionality_mw", "normalized_functionality")})
    return EXIT_OK


def cmd_assess(args) -> int:
    inputs, rec = _load_inputs(args)
    engine = ScenarioEngine(inputs, args.seed, threads=args.threads)
    chosen = _parse_retrofit(args.retrofit, engine.labels)
    risk, stats = assess(inputs, _conv(args), args.seed, inputs.component_fragility(chosen), engine)
    _check_risk(risk)
    write_results(AnalysisResults(seed=args.seed, risk=risk, magnitude_stats=stats,
                                  manifest=_manifest(args, rec, retrofit=chosen)), args.out)
    text = "\n".join([f"EAFL = {risk.eafl:.6f} (se {risk.standard_error:.2e})"] + [
        f"  M={s.magnitude:.2f}  mean={s.mean_norm:.4f}  n={s.n_samples}  ({s.converged_by})" for s in stats])
    _emit(args, text, risk.to_dict())
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    inputs, rec = _load_inputs(args)
    problem = RetrofitProblem(inputs, ScenarioEngine(inputs, args.seed, threads=args.threads), args.samples)
    ranking = sensitivity_ranking(inputs, args.perturb, args.seed, problem)
    cats = {"baseline": category_sensitivity(None, inputs, args.seed, problem)}
    for cls in ("bus", "generator", "load", "substation", "all"):
        cats[cls] = category_sensitivity(cls, inputs, args.seed, problem)
    if any(not math.isfinite(r.s_up) or not math.isfinite(r.s_down) for r in ranking):
        raise InvariantViolation("non-finite sensitivity")
    write_results(AnalysisResults(seed=args.seed, sensitivity=ranking, category_eafl=cats,
                                  manifest=_manifest(args, rec, perturb=args.perturb, samples=args.samples)), args.out)
    text = "\n".join([f"{r.component:>14}  up {r.s_up:+.3e}  down {r.s_down:+.3e}" for r in ranking[:10]]
                     + [f"{k:>10}: {v:.6f}" for k, v in cats.items()])
    _emit(args, text, {"top": [r.__dict__ for r in ranking[:10]], "category_eafl": cats})
    return EXIT_OK


def cmd_optimize(args) -> int:
    inputs, rec = _load_inputs(args)
    params = _ga_params(args)
    problem = RetrofitProblem(inputs, ScenarioEngine(inputs, args.seed, threads=args.threads), params.fitness_samples)
    plan, history = ga_optimize(args.budget, params, problem=problem, final_conv=_conv(args))
    _check_plan(plan, args.budget)
    if any(b > a for a, b in zip(history, history[1:])):
        raise InvariantViolation("best-fitness trace increased")
    write_results(AnalysisResults(seed=args.seed, plan=plan, ga_history=history,
                                  manifest=_manifest(args, rec, budget=args.budget, ga=params.__dict__)), args.out)
    _emit(args, f"cost {plan.cost_musd:.2f} of {args.budget:.2f} M USD, EAFL {plan.eafl:.6f}\n"
                f"selected: {', '.join(plan.selected) or '(none)'}", plan.to_dict())
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    inputs, rec = _load_inputs(args)
    try:
        budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse budgets {args.budgets!r}") from None
    params = _ga_params(args)
    problem = RetrofitProblem(inputs, ScenarioEngine(inputs, args.seed, threads=args.threads), params.fitness_samples)
    rows = budget_sweep(budgets, params, problem=problem, final_conv=_conv(args))
    for r in rows:
        if r.cost > r.budget + 1e-9 * max(1.0, r.budget):
            raise InvariantViolation(f"plan for budget {r.budget} over budget")
    write_results(AnalysisResults(seed=args.seed, tradeoff=rows,
                                  manifest=_manifest(args, rec, budgets=budgets, ga=params.__dict__)), args.out)
    _emit(args, "\n".join(f"B={r.budget:6.2f}  EAFL={r.eafl:.6f}  cost={r.cost:.2f}  n={len(r.selected)}" for r in rows),
          {"rows": [{"budget": r.budget, "eafl": r.eafl, "cost": r.cost, "selected": r.selected} for r in rows]})
    return EXIT_OK


COMMANDS = {"baseline": cmd_baseline, "scenario": cmd_scenario, "assess": cmd_assess,
            "sensitivity": cmd_sensitivity, "optimize": cmd_optimize, "tradeoff": cmd_tradeoff}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"seisgrid: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValidationError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"seisgrid: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
