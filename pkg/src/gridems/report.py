"""Report emission in the section-based tabular format and as a short text summary."""

from __future__ import annotations

from .cts import PseudoLimitRecord
from .orchestrator import ProcedureReport
from .rtca import RtcaReport


def _f(v: float) -> str:
    v = 0.0 if abs(v) < 5e-13 else v
    return f"{v:.6f}"


class _Writer:
    def __init__(self):
        self.lines: list[str] = []

    def section(self, name: str, header: str):
        if self.lines:
            self.lines.append("")
        self.lines.append(f"[{name}]")
        self.lines.append(f"# {header}")

    def row(self, *cols):
        self.lines.append(" ".join(_f(c) if isinstance(c, float) else str(c) for c in cols))

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _scope(s) -> str:
    return s if s else "base"


def write_rtca(w: _Writer, rep: RtcaReport, stage: str):
    w.section(f"contingency.{stage}", "id status critical")
    crit = set(rep.critical_contingencies)
    for c in rep.contingencies:
        w.row(c.id, rep.status[c.id], int(c.id in crit))
    w.section(f"violation.{stage}", "scope branch violation_mva loading")
    for v in sorted(rep.violations, key=lambda v: (v.scope or "", v.branch)):
        w.row(_scope(v.scope), v.branch, v.magnitude, v.loading)
    w.section(f"constraint.{stage}", "scope kind id initial_flow mw_limit general_limit loading status")
    for c in sorted(rep.constraints, key=lambda c: c.key):
        kind, ident = ("I", c.interface) if c.interface is not None else ("K", c.branch)
        w.row(_scope(c.scope), kind, ident, c.initial_flow, c.mw_limit, c.general_limit,
              c.loading, c.status)


def write_pseudo(w: _Writer, records: list[PseudoLimitRecord]):
    w.section("pseudo_limit", "contingency branch rate_c percent prate_c mw_limit switch")
    for p in records:
        w.row(p.contingency, p.branch, p.rate_c, p.percent, p.prate_c, p.mw_limit, p.switch)


def tabular(rep: ProcedureReport) -> str:
    w = _Writer()
    sol, mkt = rep.sced, rep.market
    case = sol.model.inp.case
    w.section("run", "key value")
    w.row("case", case.name)
    w.row("procedure", rep.procedure)
    w.row("model", rep.kind.value)
    w.row("objective", sol.objective)
    w.row("energy_cost", sol.energy_cost)
    w.row("reserve_cost", sol.reserve_cost)
    w.row("shed_cost", sol.shed_cost)
    write_rtca(w, rep.rtca_pre, "pre")
    if rep.procedure == "B":
        write_pseudo(w, rep.pseudo)
    w.section("dispatch", "gen p0 p")
    for g in case.generators:
        w.row(g.id, g.p0, sol.p_g[g.id])
    w.section("reserve", "gen sr")
    for g, v in sorted(sol.sr.items()):
        w.row(g, v)
    w.section("shed", "load shed")
    for d, v in sorted(sol.shed.items()):
        w.row(d, v)
    w.section("flows", "scope branch flow")
    for (scope, k), v in sorted(sol.flows.items(), key=lambda kv: (kv[0][0] or "", kv[0][1])):
        w.row(_scope(scope), k, v)
    w.section("duals", "scope kind id upper lower")
    for (scope, kind, ident), (fp, fm) in sorted(sol.limit_duals.items(),
                                                 key=lambda kv: (kv[0][0] or "",) + kv[0][1:]):
        w.row(_scope(scope), kind, ident, fp, fm)
    for name, y in sorted(sol.balance_duals.items()):
        w.row("balance", "row", name, y, 0.0)
    w.section("lmp", "bus lmp energy congestion")
    for n in mkt.lmp.bus_ids:
        w.row(n, mkt.lmp.lmp[n], mkt.lmp.energy, mkt.lmp.congestion[n])
    w.section("settlement", "key value")
    w.row("avg_lmp", mkt.avg_lmp)
    w.row("avg_lmp_congestion", mkt.avg_lmp_cg)
    w.row("load_payment", mkt.load_payment)
    w.row("gen_revenue", mkt.gen_revenue)
    w.row("gen_cost", mkt.gen_cost)
    w.row("gen_rent", mkt.gen_rent)
    w.row("congestion_revenue", mkt.congestion_revenue)
    if mkt.congestion_cost is not None:
        w.row("congestion_cost", mkt.congestion_cost)
    if rep.procedure == "B":
        w.row("congestion_cost_sced", rep.cngst_sced)
        w.row("congestion_cost_esced", rep.cngst_esced)
        w.row("ccr", rep.ccr)
    if rep.rtca_post is not None:
        write_rtca(w, rep.rtca_post, "post")
    w.section("acdc_gap", "branch ac_minus_dc")
    for k, v in sorted(rep.acdc_gap.items()):
        w.row(k, v)
    if rep.procedure == "B":
        w.section("reapply", "contingency branch switch percent residual residual_after achieved")
        for c in rep.reapply:
            w.row(c.contingency, c.branch, c.switch, c.percent, c.residual, c.residual_after,
                  c.achieved)
    w.section("diagnostics", "message")
    for d in rep.diagnostics:
        w.row(d.replace("\n", " "))
    return w.text()


def summary(rep: ProcedureReport) -> str:
    sol, mkt = rep.sced, rep.market
    pre = rep.rtca_pre
    lines = [
        f"procedure {rep.procedure}, model {rep.kind.value}, case {sol.model.inp.case.name}",
        f"pre-dispatch: {len(pre.critical_constraints)} critical constraints, "
        f"{len(pre.critical_contingencies)} critical contingencies, "
        f"total violation {pre.total_violation:.3f} MVA",
        f"objective {sol.objective:.4f} $ (energy {sol.energy_cost:.4f}, "
        f"reserve {sol.reserve_cost:.4f}, shed {sol.shed_cost:.4f})",
        "dispatch: " + ", ".join(f"g{g}={p:.3f}" for g, p in sorted(sol.p_g.items())),
        f"average LMP {mkt.avg_lmp:.4f} $/MWh, congestion cost {mkt.congestion_cost:.4f} $",
    ]
    if rep.procedure == "B":
        lines.append(f"switching actions: {len(rep.cts.best) if rep.cts else 0}, "
                     f"pseudo limits: {len(rep.pseudo)}, CCR {rep.ccr:.4f} $")
    if rep.rtca_post is not None:
        lines.append(f"post-dispatch total violation {rep.rtca_post.total_violation:.3f} MVA")
    lines += [f"note: {d}" for d in rep.diagnostics]
    return "\n".join(lines) + "\n"


def comparison(a: ProcedureReport, b: ProcedureReport) -> str:
    w = _Writer()
    w.section("compare", "metric procedure_a procedure_b delta")
    rows = [("objective", a.sced.objective, b.sced.objective),
            ("avg_lmp", a.market.avg_lmp, b.market.avg_lmp),
            ("avg_lmp_congestion", a.market.avg_lmp_cg, b.market.avg_lmp_cg),
            ("congestion_cost", a.market.congestion_cost, b.market.congestion_cost)]
    for name, x, y in rows:
        w.row(name, x, y, y - x)
    w.row("ccr", 0.0, b.ccr, b.ccr)
    return w.text()
