"""Preventive SCED: five LP formulations over a common energy/reserve/shedding core.

M1-M3 price network flows through shift factors around an operating point
(hot start) or from zero (cold start); M4-M5 carry bus angles and nodal
balances.  All five share the unit, reserve and shedding rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .acpf import Contingency
from .dcsens import (DcModel, SensitivitySet, build_dc_model, compute_sensitivities, dc_flow,
                     injections_of)
from .lpcore import EQ, GE, INF, LE, LinearProgram, LpSolution, solve
from .netmodel import Case, Config, LoadKind, block_curve


class ScedKind(str, Enum):
    M1 = "M1"   # hot-start PTDF, contingency flows from RTCA, customized limits
    M2 = "M2"   # hot-start PTDF with LODF, general emergency limits
    M3 = "M3"   # cold-start PTDF, general emergency limits
    M4 = "M4"   # B-theta, customized limits
    M5 = "M5"   # B-theta, general emergency limits

    @property
    def angle_based(self) -> bool:
        return self in (ScedKind.M4, ScedKind.M5)

    @property
    def customized_limits(self) -> bool:
        return self in (ScedKind.M1, ScedKind.M4)


class ScedInputError(ValueError):
    pass


class ScedInfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScedInput:
    """Everything a SCED build needs.

    ``constraints`` holds base-case records (scope None) and branch-contingency
    records; ``base_flows`` and ``ctg_flows`` hold the initial MW flows of every
    branch, used for hot-start flow equations and interface members.
    """

    case: Case
    constraints: tuple
    base_flows: Mapping[int, float]
    ctg_flows: Mapping[str, Mapping[int, float]]
    config: Config = field(default_factory=Config)

    def without_network(self) -> "ScedInput":
        return replace(self, constraints=())

    @property
    def base_constraints(self) -> list:
        return [c for c in self.constraints if c.scope is None]

    @property
    def ctg_constraints(self) -> list:
        return [c for c in self.constraints if c.scope is not None]

    def scopes(self) -> list[str]:
        return sorted({c.scope for c in self.ctg_constraints})


def forecast_load(d, config: Config) -> float:
    return d.p if d.kind is LoadKind.VIRTUAL else d.p * config.load_growth


def input_from_rtca(case: Case, rtca, config: Config | None = None,
                    pseudo: Iterable = ()) -> ScedInput:
    """SCED input from an RTCA report; pseudo-limit records replace matching limits.

    Generator-contingency constraints are dropped (reserve covers unit loss).
    """
    config = config or Config()
    table = {(p.contingency, p.branch): p for p in pseudo}
    cons = list(rtca.base_constraints)
    for nc in rtca.ctg_constraints:
        if not nc.scope.startswith("B"):
            continue
        p = table.get((nc.scope, nc.branch)) if nc.branch is not None else None
        if p is not None:
            nc = replace(nc, mw_limit=p.mw_limit, general_limit=p.general_limit, pseudo=True)
        cons.append(nc)
    flows = {c: dict(f) for c, f in rtca.ctg_flows.items() if c.startswith("B")}
    return ScedInput(case, tuple(cons), dict(rtca.base_flows), flows, config)


def dc_consistent(inp: ScedInput) -> ScedInput:
    """Replace initial flows by DC flows of the initial injections on each topology."""
    case = inp.case
    model = build_dc_model(case)
    inj = injections_of(case, load_p={d.id: d.p0 for d in case.loads})
    base = dc_flow(model, inj)
    ctg = {}
    for scope in sorted(set(inp.ctg_flows) | set(inp.scopes())):
        c = Contingency.parse(scope).element
        flows = dc_flow(build_dc_model(case.without_branch(c), model.reference), inj)
        flows[c] = 0.0
        ctg[scope] = flows
    cons = []
    for nc in inp.constraints:
        src = base if nc.scope is None else ctg[nc.scope]
        if nc.branch is not None:
            f0 = src[nc.branch]
        else:
            itf = next(i for i in case.interfaces if i.id == nc.interface)
            f0 = sum(s * src.get(k, 0.0) for k, s in itf.members)
        cons.append(replace(nc, initial_flow=f0))
    return replace(inp, constraints=tuple(cons), base_flows=base, ctg_flows=ctg)


@dataclass
class ScedModel:
    """A built LP plus the bookkeeping the market module needs."""

    kind: ScedKind
    lp: LinearProgram
    inp: ScedInput
    sens: SensitivitySet
    # per row: MW of rhs change per MW of extra load at each bus
    load_rhs: dict[str, np.ndarray]
    limit_rows: dict[tuple, tuple[str, str]]      # (scope, "K"/"I", id) -> (max row, min row)
    flow_vars: dict[tuple, str]                   # (scope, branch) -> variable
    diagnostics: list[str]


@dataclass
class ScedSolution:
    kind: ScedKind
    lp: LpSolution
    model: ScedModel
    p_g: dict[int, float]
    p_seg: dict[tuple[int, int], float]
    sr: dict[int, float]
    shed: dict[int, float]
    flows: dict[tuple, float]
    angles: dict[tuple, float]
    energy_cost: float
    reserve_cost: float
    shed_cost: float
    limit_duals: dict[tuple, tuple[float, float]]
    balance_duals: dict[str, float]
    diagnostics: list[str]

    @property
    def objective(self) -> float:
        return self.lp.objective

    @property
    def total_shed(self) -> float:
        return sum(self.shed.values())


def dispatch_bounds(g, config: Config) -> tuple[float, float, str | None]:
    """Combined capacity/ramp interval; an empty interval collapses to the nearest limit."""
    if not g.dispatchable:
        return g.p0, g.p0, None
    ramp = g.energy_ramp * config.t_ed
    lo = max(g.p0 - ramp, g.p_min)
    hi = min(g.p0 + ramp, g.p_max)
    if lo <= hi:
        return lo, hi, None
    pt = g.p_max if g.p0 > g.p_max else g.p_min
    return pt, pt, f"gen {g.id}: ramp and capacity intervals disjoint, fixed at {pt:g} MW"


def _bus_vec(model: DcModel, items: Mapping[int, float]) -> np.ndarray:
    v = np.zeros(len(model.bus_ids))
    for bus, val in items.items():
        v[model.bus_pos(bus)] += val
    return v


def build_sced(inp: ScedInput, kind: ScedKind | str) -> ScedModel:
    kind = ScedKind(kind)
    case, cfg = inp.case, inp.config
    dc = build_dc_model(case)
    nbus = len(dc.bus_ids)
    scopes = inp.scopes()
    outages = []
    for s in scopes:
        ctg = Contingency.parse(s)
        if ctg.kind != "branch":
            raise ScedInputError(f"contingency constraint {s} is not a branch outage")
        if ctg.element not in case.branch_map:
            raise ScedInputError(f"contingency {s} references unknown branch")
        outages.append(ctg.element)
    sens = compute_sensitivities(dc, outages)
    missing = [c for c in outages if c not in sens.lodf]
    if missing:
        raise ScedInputError(f"islanding contingencies cannot be constrained: {missing}")
    if kind is ScedKind.M1:
        absent = [s for s in scopes if s not in inp.ctg_flows]
        if absent:
            raise ScedInputError(f"M1 needs contingency initial flows for {absent}")

    lp = LinearProgram(f"sced_{kind.value}")
    load_rhs: dict[str, np.ndarray] = {}
    diags: list[str] = []

    # units
    gvar = {}
    for g in case.generators:
        lo, hi, note = dispatch_bounds(g, cfg)
        if note:
            diags.append(note)
        gvar[g.id] = lp.add_variable(f"pg[{g.id}]", lo, hi)
        if g.dispatchable:
            segs = block_curve(g, cfg.price_increment)
            if not segs:
                raise ScedInputError(f"dispatchable gen {g.id} has no cost curve")
            row = {gvar[g.id]: 1.0}
            for i, seg in enumerate(segs, 1):
                j = lp.add_variable(f"pgi[{g.id},{i}]", 0.0, seg.breadth, seg.price)
                row[j] = -1.0
            lp.add_constraint(f"seg[{g.id}]", row, EQ, 0.0)
    # reserve; fixed units carry none
    if cfg.reserve:
        srvar = {}
        for g in case.generators:
            cap = g.spin_ramp * cfg.t_sr if g.dispatchable else 0.0
            srvar[g.id] = lp.add_variable(f"sr[{g.id}]", 0.0, cap, g.reserve_price)
            lp.add_constraint(f"cap[{g.id}]", {gvar[g.id]: 1.0, srvar[g.id]: 1.0}, LE, g.p_max)
        for g in case.generators:
            row = {srvar[m.id]: 1.0 for m in case.generators if m.id != g.id}
            row[gvar[g.id]] = -1.0
            lp.add_constraint(f"res[{g.id}]", row, GE, 0.0)
    # shedding on positive loads only
    pd = {d.id: forecast_load(d, cfg) for d in case.loads}
    shvar = {}
    for d in case.loads:
        if d.kind is LoadKind.POSITIVE and pd[d.id] > 0:
            shvar[d.id] = lp.add_variable(f"sh[{d.id}]", 0.0, pd[d.id], cfg.shed_penalty)

    # variable injection per bus: sum p_g + sum shed
    inj_vars = {b: {} for b in dc.bus_ids}
    for g in case.generators:
        inj_vars[g.bus][gvar[g.id]] = 1.0
    for d in case.loads:
        if d.id in shvar:
            inj_vars[d.bus][shvar[d.id]] = 1.0
    load_by_bus = {b: 0.0 for b in dc.bus_ids}
    for d in case.loads:
        load_by_bus[d.bus] += pd[d.id]

    # flows needed per scope: monitored branches plus interface members
    need: dict[str | None, set[int]] = {}
    for nc in inp.constraints:
        ids = need.setdefault(nc.scope, set())
        if nc.branch is not None:
            ids.add(nc.branch)
        else:
            itf = _interface(case, nc.interface)
            ids.update(k for k, _ in itf.members)
    for s in scopes:
        need[s].discard(Contingency.parse(s).element)

    flow_vars: dict[tuple, str] = {}
    if not kind.angle_based:
        row = {}
        for b in dc.bus_ids:
            row.update(inj_vars[b])
        name = "balance"
        lp.add_constraint(name, row, EQ, sum(load_by_bus.values()))
        load_rhs[name] = np.ones(nbus)
        const_inj = _constant_injection(case, dc, pd, hot=kind is not ScedKind.M3)
        for scope in [None] + scopes:
            for k in sorted(need.get(scope, ())):
                _ptdf_flow(lp, kind, inp, sens, dc, scope, k, inj_vars, const_inj, flow_vars,
                           load_rhs)
    else:
        for scope in [None] + [s for s in scopes]:
            _angle_network(lp, case, dc, scope, inj_vars, load_by_bus, flow_vars, load_rhs)

    # limits
    limit_rows = {}
    for nc in inp.constraints:
        if nc.branch is not None:
            expr = {flow_vars[(nc.scope, nc.branch)]: 1.0}
            if nc.scope is None:
                lim = nc.mw_limit
            else:
                lim = nc.mw_limit if kind.customized_limits else nc.general_limit
            tag = ("K", nc.branch)
        else:
            itf = _interface(case, nc.interface)
            expr = {}
            gone = Contingency.parse(nc.scope).element if nc.scope else None
            for k, s in itf.members:
                if k != gone:
                    v = flow_vars[(nc.scope, k)]
                    expr[v] = expr.get(v, 0.0) + s
            lim = nc.mw_limit
            tag = ("I", nc.interface)
        key = (nc.scope,) + tag
        sfx = f"{nc.scope or 'base'},{tag[0]}{tag[1]}"
        rmax, rmin = f"lmax[{sfx}]", f"lmin[{sfx}]"
        lp.add_constraint(rmax, expr, LE, lim)
        lp.add_constraint(rmin, {v: -c for v, c in expr.items()}, LE, lim)
        limit_rows[key] = (rmax, rmin)
    return ScedModel(kind, lp, inp, sens, load_rhs, limit_rows, flow_vars, diags)


def _interface(case: Case, iid: int):
    for itf in case.interfaces:
        if itf.id == iid:
            return itf
    raise ScedInputError(f"unknown interface {iid}")


def _constant_injection(case: Case, dc: DcModel, pd: Mapping[int, float], hot: bool) -> np.ndarray:
    """Fixed part of the net injection change (hot) or of the net injection (cold)."""
    if hot:
        gen0 = {g.bus: 0.0 for g in case.generators}
        for g in case.generators:
            gen0[g.bus] += g.p0
        dload = {d.bus: 0.0 for d in case.loads}
        for d in case.loads:
            dload[d.bus] += pd[d.id] - d.p0
        return -_bus_vec(dc, gen0) - _bus_vec(dc, dload)
    load = {d.bus: 0.0 for d in case.loads}
    for d in case.loads:
        load[d.bus] += pd[d.id]
    return -_bus_vec(dc, load)


def _ptdf_flow(lp, kind, inp, sens, dc, scope, k, inj_vars, const_inj, flow_vars, load_rhs):
    if scope is None:
        fac = sens.ptdf_col(k)
    else:
        fac = sens.otdf_col(k, Contingency.parse(scope).element)
    if kind is ScedKind.M3:
        f0 = _shift_flow(inp.case, dc, scope, k)
    elif scope is None:
        f0 = inp.base_flows[k]
    elif kind is ScedKind.M1:
        f0 = inp.ctg_flows[scope][k]
    else:
        c = Contingency.parse(scope).element
        f0 = inp.base_flows[k] + sens.lodf[c](k) * inp.base_flows[c]
    name = f"p[{scope or 'base'},{k}]"
    v = lp.add_variable(name, -INF, INF)
    row = {v: 1.0}
    for b, col in zip(dc.bus_ids, fac):
        if col != 0.0:
            for j, a in inj_vars[b].items():
                row[j] = row.get(j, 0.0) - col * a
    rname = f"flow[{scope or 'base'},{k}]"
    lp.add_constraint(rname, row, EQ, f0 + float(fac @ const_inj))
    load_rhs[rname] = -fac
    flow_vars[(scope, k)] = name


def _shift_flow(case: Case, dc: DcModel, scope, k) -> float:
    """DC flow on k driven by phase shifters alone."""
    if not np.any(dc.alpha):
        return 0.0
    topo = case if scope is None else case.without_branch(Contingency.parse(scope).element)
    return dc_flow(build_dc_model(topo, dc.reference), {})[k]


def _angle_network(lp, case, dc, scope, inj_vars, load_by_bus, flow_vars, load_rhs):
    tag = scope or "base"
    gone = Contingency.parse(scope).element if scope else None
    theta = {}
    for b in dc.bus_ids:
        bound = 0.0 if b == dc.reference else INF
        theta[b] = lp.add_variable(f"th[{tag},{b}]", -bound, bound)
    flow_at = {b: {} for b in dc.bus_ids}
    for br in case.in_service_branches:
        if br.id == gone:
            continue
        name = f"p[{tag},{br.id}]"
        v = lp.add_variable(name, -INF, INF)
        y = case.base_mva / br.x
        lp.add_constraint(f"flow[{tag},{br.id}]",
                          {v: 1.0, theta[br.from_bus]: -y, theta[br.to_bus]: y}, EQ, y * br.alpha)
        flow_vars[(scope, br.id)] = name
        flow_at[br.from_bus][v] = flow_at[br.from_bus].get(v, 0.0) - 1.0
        flow_at[br.to_bus][v] = flow_at[br.to_bus].get(v, 0.0) + 1.0
    for i, b in enumerate(dc.bus_ids):
        row = dict(inj_vars[b])
        for v, a in flow_at[b].items():
            row[v] = row.get(v, 0.0) + a
        rname = f"node[{tag},{b}]"
        lp.add_constraint(rname, row, EQ, load_by_bus[b])
        vec = np.zeros(len(dc.bus_ids))
        vec[i] = 1.0
        load_rhs[rname] = vec


def solve_sced(inp: ScedInput, kind: ScedKind | str, backend: str = "simplex") -> ScedSolution:
    model = build_sced(inp, kind)
    sol = solve(model.lp, backend)
    if sol.status == "infeasible":
        raise ScedInfeasibleError("SCED infeasible: shedding cannot restore feasibility "
                                  "(check reserve, ramp and fixed-unit data)")
    if not sol.optimal:
        raise ScedInfeasibleError(f"SCED returned status {sol.status}")
    return extract_solution(model, sol)


def extract_solution(model: ScedModel, sol: LpSolution) -> ScedSolution:
    lp, case = model.lp, model.inp.case
    names = lp.var_names
    p_g, p_seg, sr, shed, flows, angles = {}, {}, {}, {}, {}, {}
    ec = rc = sc = 0.0
    for j, name in enumerate(names):
        val = float(sol.x[j])
        head, _, body = name.partition("[")
        parts = body.rstrip("]").split(",")
        if head == "pg":
            p_g[int(parts[0])] = val
        elif head == "pgi":
            p_seg[(int(parts[0]), int(parts[1]))] = val
            ec += lp.cost[j] * val
        elif head == "sr":
            sr[int(parts[0])] = val
            rc += lp.cost[j] * val
        elif head == "sh":
            shed[int(parts[0])] = val
            sc += lp.cost[j] * val
        elif head == "p":
            flows[(None if parts[0] == "base" else parts[0], int(parts[1]))] = val
        elif head == "th":
            angles[(None if parts[0] == "base" else parts[0], int(parts[1]))] = val
    for d in case.loads:
        shed.setdefault(d.id, 0.0)
    duals = {key: (sol.dual(rmax), sol.dual(rmin)) for key, (rmax, rmin) in model.limit_rows.items()}
    bal = {name: sol.dual(name) for name in model.load_rhs
           if name == "balance" or name.startswith("node[")}
    return ScedSolution(model.kind, sol, model, p_g, p_seg, sr, shed, flows, angles, ec, rc, sc,
                        duals, bal, list(model.diagnostics))


def deltas(solution: ScedSolution, inp: ScedInput | None = None) -> tuple[dict, dict]:
    """Per-bus generation change and net load change (shedding reduces load)."""
    inp = inp or solution.model.inp
    case = inp.case
    dg = {b.id: 0.0 for b in case.buses}
    dd = {b.id: 0.0 for b in case.buses}
    for g in case.generators:
        dg[g.bus] += solution.p_g[g.id] - g.p0
    for d in case.loads:
        dd[d.bus] += forecast_load(d, inp.config) - d.p0 - solution.shed.get(d.id, 0.0)
    return dg, dd


def recompute_flows(solution: ScedSolution) -> dict[tuple, float]:
    """Flows of every flow variable recomputed from the primal dispatch by DC solves."""
    inp = solution.model.inp
    case, model = inp.case, solution.model
    dc = model.sens.model
    kind = solution.kind
    dg, dd = deltas(solution, inp)
    net = {b: dg[b] - dd[b] for b in dg}
    out = {}
    for (scope, k) in model.flow_vars:
        if kind.angle_based or kind is ScedKind.M3:
            inj = injections_of(case, solution.p_g,
                                {d.id: forecast_load(d, inp.config) - solution.shed[d.id]
                                 for d in case.loads})
            topo = case if scope is None else case.without_branch(Contingency.parse(scope).element)
            out[(scope, k)] = dc_flow(build_dc_model(topo, dc.reference), inj)[k]
            continue
        if scope is None:
            base, fac = inp.base_flows[k], model.sens.ptdf_col(k)
        else:
            c = Contingency.parse(scope).element
            fac = model.sens.otdf_col(k, c)
            base = (inp.ctg_flows[scope][k] if kind is ScedKind.M1
                    else inp.base_flows[k] + model.sens.lodf[c](k) * inp.base_flows[c])
        out[(scope, k)] = base + float(fac @ _bus_vec(dc, net))
    return out
