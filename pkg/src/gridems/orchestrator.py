"""End-to-end dispatch procedures: screening, optional switching relief, SCED, AC check."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from .acpf import AcSolution, Contingency, PowerFlowError, default_contingencies, solve_ac_power_flow
from .cts import CtsEvaluation, CtsResult, PseudoLimitRecord, evaluate_candidate, run_cts
from .market import MarketResults, ccr, congestion_cost, market_results
from .netmodel import Case, Config, losses_to_virtual_loads, strip_virtual_loads
from .rtca import RtcaReport, initial_flow, run_rtca
from .sced import ScedKind, ScedSolution, forecast_load, input_from_rtca, solve_sced


@dataclass(frozen=True)
class ReapplyCheck:
    """Stored switch re-applied on the post-dispatch state for one relaxed constraint."""

    contingency: str
    branch: int
    switch: int
    percent: float           # planned reduction from the switching search
    residual: float          # post-dispatch violation before switching (MVA)
    residual_after: float    # after re-applying the switch (MVA)
    feasible: bool

    @property
    def achieved(self) -> float:
        if self.residual <= 0.0:
            return 1.0
        return (self.residual - self.residual_after) / self.residual


@dataclass
class ProcedureReport:
    procedure: str
    kind: ScedKind
    config: Config
    contingencies: list[Contingency]
    status_ac: AcSolution
    rtca_pre: RtcaReport
    sced: ScedSolution
    market: MarketResults
    post_case: Case
    post_ac: AcSolution | None
    rtca_post: RtcaReport | None
    acdc_gap: dict[int, float]
    cts: CtsResult | None = None
    pseudo: list[PseudoLimitRecord] = field(default_factory=list)
    sced_actual: ScedSolution | None = None
    cngst_sced: float | None = None
    cngst_esced: float | None = None
    ccr: float | None = None
    reapply: list[ReapplyCheck] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


class _Clock:
    def __init__(self):
        self.times: dict[str, float] = {}

    def mark(self, step: str, t0: float) -> float:
        now = time.perf_counter()
        self.times[step] = now - t0
        return now


def _status(case: Case, config: Config) -> tuple[Case, AcSolution]:
    ac = solve_ac_power_flow(case, rule=config.participation_rule)
    if not ac.converged:
        raise PowerFlowError("system-status AC power flow did not converge: "
                             + "; ".join(ac.diagnostics))
    return case.with_dispatch(ac.gen_p), ac


def _post_case(sced_case: Case, sol: ScedSolution, config: Config) -> Case:
    """Physical case after dispatch: new unit outputs, served load, no loss loads."""
    loads = []
    for d in sced_case.loads:
        p = forecast_load(d, config) - sol.shed.get(d.id, 0.0)
        loads.append(replace(d, p=p, p0=p))
    case = replace(sced_case, loads=tuple(loads)).with_dispatch(sol.p_g)
    return strip_virtual_loads(case)


def _evaluate(sced_case: Case, sol: ScedSolution, ctgs, config: Config, diags: list[str]):
    post = _post_case(sced_case, sol, config)
    try:
        ac = solve_ac_power_flow(post, rule=config.participation_rule)
    except PowerFlowError as exc:
        diags.append(f"post-dispatch AC power flow failed: {exc}")
        return post, None, None, {}
    if not ac.converged:
        diags.append("post-dispatch AC power flow did not converge")
        return post, ac, None, {}
    rep = run_rtca(post, ctgs, config, base=ac)
    gap = {}
    for (scope, k), f in sorted(sol.flows.items(), key=lambda kv: (kv[0][0] or "", kv[0][1])):
        if scope is None and k in ac.p_from:
            gap[k] = initial_flow(ac.p_from[k], ac.p_to[k]) - f
    return post, ac, rep, gap


def _prepare(case: Case, config: Config, contingencies, clock: _Clock):
    t = time.perf_counter()
    status_case, ac = _status(case, config)
    t = clock.mark("status", t)
    ctgs = default_contingencies(status_case) if contingencies is None else list(contingencies)
    rtca = run_rtca(status_case, ctgs, config, base=ac)
    clock.mark("rtca", t)
    return status_case, ac, rtca


def run_procedure_a(case: Case, config: Config | None = None, kind: ScedKind | str = "M1",
                    contingencies: Sequence[Contingency] | None = None,
                    backend: str = "simplex") -> ProcedureReport:
    config = config or Config()
    kind = ScedKind(kind)
    clock = _Clock()
    status_case, ac, rtca = _prepare(case, config, contingencies, clock)
    diags = list(rtca.diagnostics)
    t = time.perf_counter()
    sced_case = losses_to_virtual_loads(status_case, ac)
    inp = input_from_rtca(sced_case, rtca, config)
    sol = solve_sced(inp, kind, backend)
    mkt = market_results(sol, backend)
    diags += sol.diagnostics
    t = clock.mark("sced", t)
    post, post_ac, post_rtca, gap = _evaluate(sced_case, sol, rtca.contingencies, config, diags)
    clock.mark("evaluate", t)
    return ProcedureReport("A", kind, config, rtca.contingencies, ac, rtca, sol, mkt, post,
                           post_ac, post_rtca, gap, diagnostics=diags, timings=clock.times)


def run_procedure_b(case: Case, config: Config | None = None, kind: ScedKind | str = "M1",
                    contingencies: Sequence[Contingency] | None = None,
                    backend: str = "simplex") -> ProcedureReport:
    config = config or Config()
    kind = ScedKind(kind)
    clock = _Clock()
    status_case, ac, rtca = _prepare(case, config, contingencies, clock)
    diags = list(rtca.diagnostics)
    t = time.perf_counter()
    cts = run_cts(status_case, rtca, config)
    t = clock.mark("cts", t)

    sced_case = losses_to_virtual_loads(status_case, ac)
    plain = input_from_rtca(sced_case, rtca, config)
    relaxed = input_from_rtca(sced_case, rtca, config, cts.pseudo)
    sol_a = solve_sced(plain, kind, backend)
    sol = solve_sced(relaxed, kind, backend)
    mkt = market_results(sol, backend)
    _, _, c_sced = congestion_cost(plain, kind, sol_a, backend)
    c_esced = mkt.congestion_cost
    mkt.ccr = ccr(c_esced, c_sced)
    diags += sol.diagnostics
    t = clock.mark("sced", t)

    post, post_ac, post_rtca, gap = _evaluate(sced_case, sol, rtca.contingencies, config, diags)
    checks = []
    if post_rtca is not None:
        checks = _reapply(post, post_rtca, cts, config)
        for chk in checks:
            if not chk.feasible:
                diags.append(f"stored switch {chk.switch} for {chk.contingency} infeasible "
                             "on the post-dispatch state")
    clock.mark("evaluate", t)
    return ProcedureReport("B", kind, config, rtca.contingencies, ac, rtca, sol, mkt, post,
                           post_ac, post_rtca, gap, cts, list(cts.pseudo), sol_a, c_sced,
                           c_esced, mkt.ccr, checks, diags, clock.times)


def _reapply(post: Case, rtca: RtcaReport, cts: CtsResult, config: Config) -> list[ReapplyCheck]:
    out = []
    for cid, best in sorted(cts.best.items()):
        residual = rtca.violations_for(cid)
        relaxed = [p for p in cts.pseudo if p.contingency == cid]
        if not any(residual.get(p.branch, 0.0) > 0.0 for p in relaxed):
            continue
        ev: CtsEvaluation = evaluate_candidate(post, rtca.contingency(cid), best.switch, residual,
                                               config, rtca.solutions.get(cid))
        for p in relaxed:
            v = residual.get(p.branch, 0.0)
            if v <= 0.0:
                continue
            out.append(ReapplyCheck(cid, p.branch, best.switch, p.percent, v,
                                    ev.after.get(p.branch, 0.0), ev.feasible))
    return out


def compare(case: Case, config: Config | None = None, kind: ScedKind | str = "M1",
            contingencies: Sequence[Contingency] | None = None,
            backend: str = "simplex") -> tuple[ProcedureReport, ProcedureReport]:
    a = run_procedure_a(case, config, kind, contingencies, backend)
    b = run_procedure_b(case, config, kind, contingencies, backend)
    return a, b
