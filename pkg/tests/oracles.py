"""Reference implementations used only by the test-suite.

Each oracle is written independently of the package code (plain loops,
explicit enumeration) so agreement is meaningful.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from seisgrid.config_io import Bus, Generator, Line, Load, PowerNetworkModel, Substation

# Frozen with 30-digit mpmath evaluation of the closed-form GMPE terms.
GMPE_LN_MEAN_CASES = [
    # (M, R_JB, Vs30, mechanism, F_M, F_D, F_S, ln PGA)
    (8.0, 10.0, 760.0, "SS", 0.0701, -1.161027295154545, 0.0, -1.090927295154545),
    (6.5, 50.0, 400.0, "RS", 0.2877, -3.1967190912549894, 0.28518941568356621, -2.6238296755714232),
    (5.0, 0.0, 1000.0, "NS", -0.4569675, -1.5797629494632889, -0.10118478167950494, -2.1379152311427939),
    (7.0, 150.0, 250.0, "U", 0.198, -4.0606309094072456, 0.51248320448210574, -3.3501477049251399),
    (8.0, 300.0, 760.0, "SS", 0.0701, -4.205135064727245, 0.0, -4.135035064727245),
]
GMPE_SIGMA_CASES = [
    (8.0, 10.0, 760.0, 0.60508594430874033),
    (8.0, 300.0, 760.0, 0.52643043225102403),
    (7.0, 150.0, 250.0, 0.53566308586359316),
    (6.0, 200.0, 200.0, 0.48962240169128841),
    (6.0, 50.0, 280.0, 0.5887198991414163),
]


def point_segment_distance(p, a, b) -> float:
    (px, py), (ax, ay), (bx, by) = p, a, b
    dx, dy = bx - ax, by - ay
    t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def closure_components(n: int, edges) -> list[tuple]:
    """Connected components by Warshall transitive closure over all pairs."""
    reach = [[i == j for j in range(n)] for i in range(n)]
    for i, j in edges:
        reach[i][j] = reach[j][i] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    comps = {tuple(j for j in range(n) if reach[i][j]) for i in range(n)}
    return sorted(comps)


def vertex_enumeration_lp(c, a_ub, b_ub, a_eq, b_eq, bounds, tol=1e-9):
    """Minimize c.x over a small polytope by enumerating basic solutions.

    Every vertex is the solution of n linearly independent active constraints;
    all such systems are solved and the cheapest feasible point is returned
    as ``(objective, x)`` (``(inf, None)`` when infeasible).
    """
    c = np.asarray(c, float)
    n = c.size
    rows, rhs = [], []
    for r, v in zip(a_ub, b_ub):
        rows.append(np.asarray(r, float))
        rhs.append(float(v))
    for k, (lo, hi) in enumerate(bounds):
        e = np.zeros(n)
        e[k] = 1.0
        if hi is not None:
            rows.append(e.copy())
            rhs.append(hi)
        if lo is not None:
            rows.append(-e)
            rhs.append(-lo)
    rows, rhs = np.array(rows), np.array(rhs)
    a_eq = np.asarray(a_eq, float).reshape(-1, n)
    b_eq = np.asarray(b_eq, float)
    need = n - a_eq.shape[0]
    best, best_x = math.inf, None
    for active in itertools.combinations(range(len(rows)), need):
        m = np.vstack([a_eq, rows[list(active)]])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        x = np.linalg.solve(m, np.concatenate([b_eq, rhs[list(active)]]))
        if np.all(rows @ x <= rhs + tol) and np.allclose(a_eq @ x, b_eq, atol=tol):
            val = float(c @ x)
            if val < best - 1e-12:
                best, best_x = val, x
    return best, best_x


def dcopf_oracle(case):
    """Exact DCOPF optimum of a tiny island via vertex enumeration.

    Variables are generator outputs plus non-slack bus angles (per unit);
    flows are B * (theta_i - theta_j) in MW.
    """
    buses = list(case.buses)
    non_slack = [b for b in buses if b != case.slack]
    ng, na = len(case.gen_ids), len(non_slack)
    nvar = ng + na
    base = case.base_mva

    def theta_row(frm, to, scale):
        row = np.zeros(nvar)
        if frm != case.slack:
            row[ng + non_slack.index(frm)] += scale
        if to != case.slack:
            row[ng + non_slack.index(to)] -= scale
        return row

    a_eq, b_eq = [], []
    for b in buses:
        row = np.zeros(nvar)
        for k, gb in enumerate(case.gen_bus):
            if gb == b:
                row[k] += 1.0
        for f, t, s in zip(case.line_from, case.line_to, case.susceptance):
            if f == b:
                row -= theta_row(f, t, s * base)
            if t == b:
                row += theta_row(f, t, s * base)
        a_eq.append(row)
        b_eq.append(sum(d for d, lb in zip(case.demand_mw, case.load_bus) if lb == b))
    a_ub, b_ub = [], []
    for f, t, s, lim in zip(case.line_from, case.line_to, case.susceptance, case.limit_mw):
        r = theta_row(f, t, s * base)
        a_ub += [r, -r]
        b_ub += [lim, lim]
    bounds = [(lo, hi) for lo, hi in zip(case.pg_min, case.pg_max)] + [(None, None)] * na
    cost = np.concatenate([case.cost, np.zeros(na)])
    if not a_ub:
        a_ub, b_ub = np.zeros((0, nvar)), []
    return vertex_enumeration_lp(cost, a_ub, b_ub, np.array(a_eq), np.array(b_eq), bounds)


def toy_network(gens, loads, lines, coords=None, substations=()) -> PowerNetworkModel:
    """Build a small validated network.

    gens: (bus, pmax, cost); loads: (bus, demand); lines: (from, to, x, rate).
    """
    bus_ids = sorted({b for b, *_ in gens} | {b for b, _ in loads} | {x for f, t, *_ in lines for x in (f, t)})
    coords = coords or {b: (float(i), 0.0) for i, b in enumerate(bus_ids)}
    subs_of = dict(substations)
    return PowerNetworkModel(
        tuple(Bus(b, *coords[b]) for b in bus_ids),
        tuple(Line(i + 1, f, t, x, r, subs_of.get(i + 1)) for i, (f, t, x, r) in enumerate(lines)),
        tuple(Generator(b, b, 0.0, p, c) for b, p, c in gens),
        tuple(Load(b, b, d) for b, d in loads),
        tuple(Substation(s, lid) for lid, s in sorted(substations, key=lambda v: v[1])),
    )
