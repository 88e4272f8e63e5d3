"""Corrective transmission switching search and pseudo-limit derivation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .acpf import (AcSolution, Contingency, IslandingError, PowerFlowError, apply_outage,
                   solve_ac_power_flow)
from .netmodel import Case, Config, islands
from .rtca import RtcaReport, branch_violations, mw_limit, parallel_map

_EPS = 1e-9


@dataclass
class CtsEvaluation:
    contingency: str
    switch: int
    before: dict[int, float]
    after: dict[int, float] = field(default_factory=dict)
    feasible: bool = False
    admissible: bool = False
    note: str = ""

    @property
    def total_before(self) -> float:
        return sum(self.before.values())

    @property
    def total_after(self) -> float:
        return sum(self.after.values())

    @property
    def reduction(self) -> float:
        return self.total_before - self.total_after


@dataclass(frozen=True)
class PseudoLimitRecord:
    contingency: str
    branch: int
    rate_c: float
    violation: float
    violation_cts: float
    percent: float
    prate_c: float
    mw_limit: float
    general_limit: float
    switch: int


def percent_reduction(v: float, v_cts: float) -> float:
    return (v - v_cts) / v


def pseudo_rate(rate_c: float, v: float, percent: float) -> float:
    return rate_c + v * percent


def enumerate_candidates(case: Case, ctg: Contingency, exclude: Iterable[int] = ()) -> list[int]:
    """In-service branches whose opening (on top of ``ctg``) keeps the grid connected."""
    exclude = set(exclude)
    gone = {ctg.element} if ctg.kind == "branch" else set()
    out = []
    for br in case.in_service_branches:
        if br.id in gone or br.id in exclude:
            continue
        if len(islands(case, skip=gone | {br.id})) == 1:
            out.append(br.id)
    return out


def acceptable(before: dict[int, float], after: dict[int, float]) -> bool:
    """Total violation drops and no single branch gets worse."""
    if not sum(after.values()) < sum(before.values()) - _EPS:
        return False
    return all(v <= before.get(k, 0.0) + _EPS for k, v in after.items())


def evaluate_candidate(case: Case, ctg: Contingency, switch: int, before: dict[int, float],
                       config: Config | None = None,
                       start: AcSolution | None = None) -> CtsEvaluation:
    """AC-evaluate opening ``switch`` after ``ctg``; ``before`` holds the pre-switching violations."""
    config = config or Config()
    ev = CtsEvaluation(ctg.id, switch, dict(before))
    if switch in before:
        ev.note = "violated branch itself"
        return ev
    try:
        post = apply_outage(case, ctg, config.participation_rule)
        if switch not in post.branch_map:
            raise ValueError(f"branch {switch} not available for switching")
        post = post.without_branch(switch)
        if len(islands(post)) > 1:
            raise IslandingError("switching islands the network")
        sol = solve_ac_power_flow(post, start=start, rule=config.participation_rule)
    except (IslandingError, PowerFlowError) as exc:
        ev.note = str(exc)
        return ev
    if not sol.converged:
        ev.note = "AC power flow did not converge"
        return ev
    ev.feasible = True
    ev.after = {k: v for k, (v, _) in branch_violations(post, sol, config, ctg.id).items()}
    ev.admissible = acceptable(ev.before, ev.after)
    return ev


def select_best(evaluations: Sequence[CtsEvaluation]) -> CtsEvaluation | None:
    """Admissible evaluation with the largest reduction; lowest switch id on ties."""
    best = None
    for ev in sorted(evaluations, key=lambda e: e.switch):
        if not ev.admissible:
            continue
        if best is None or ev.reduction > best.reduction + _EPS:
            best = ev
    return best


def pseudo_limits(best: CtsEvaluation, rtca: RtcaReport) -> list[PseudoLimitRecord]:
    """Pseudo ratings and MW limits for every branch the chosen switch relieves.

    The MW conversion reuses the reactive flows of the unswitched contingency
    solution (customized limit) and of the base case (general limit).
    """
    sol = rtca.solutions[best.contingency]
    base = rtca.base
    out = []
    for k, v in sorted(best.before.items()):
        if v <= 0.0:
            continue
        v_cts = best.after.get(k, 0.0)
        pct = percent_reduction(v, v_cts)
        rate_c = rtca.rates[k][1]
        prate = pseudo_rate(rate_c, v, pct)
        lim, _ = mw_limit(prate, sol.q_from[k], sol.q_to[k])
        gen_lim, _ = mw_limit(prate, base.q_from[k], base.q_to[k])
        out.append(PseudoLimitRecord(best.contingency, k, rate_c, v, v_cts, pct, prate, lim,
                                     gen_lim, best.switch))
    return out


@dataclass
class CtsResult:
    evaluations: dict[str, list[CtsEvaluation]]
    best: dict[str, CtsEvaluation]
    pseudo: list[PseudoLimitRecord]


def run_cts(case: Case, rtca: RtcaReport, config: Config | None = None,
            contingencies: Sequence[str] | None = None) -> CtsResult:
    """Exhaustive single-switch search over the critical contingencies."""
    config = config or Config()
    targets = rtca.critical_contingencies if contingencies is None else list(contingencies)
    jobs = []
    for cid in targets:
        before = rtca.violations_for(cid)
        if not before:
            continue
        ctg = rtca.contingency(cid)
        for sw in enumerate_candidates(case, ctg, exclude=before):
            jobs.append((ctg, sw, before))

    def work(job):
        ctg, sw, before = job
        return evaluate_candidate(case, ctg, sw, before, config, rtca.solutions.get(ctg.id))

    results = parallel_map(work, jobs)
    evaluations: dict[str, list[CtsEvaluation]] = {cid: [] for cid in targets}
    for ev in results:
        evaluations[ev.contingency].append(ev)
    best, pseudo = {}, []
    for cid in targets:
        choice = select_best(evaluations[cid])
        if choice is not None:
            best[cid] = choice
            pseudo.extend(pseudo_limits(choice, rtca))
    return CtsResult(evaluations, best, pseudo)
