"""N-1 contingency analysis and conversion of AC results into MW network constraints."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .acpf import (AcSolution, Contingency, IslandingError, PowerFlowError, apply_outage,
                   default_contingencies, solve_ac_power_flow)
from .netmodel import Case, Config

log = logging.getLogger(__name__)


def mw_limit(rate: float, q_from: float, q_to: float) -> tuple[float, bool]:
    """MW limit left by the reactive flow on a branch rated ``rate`` MVA.

    Returns ``(limit, saturated)``; a branch whose reactive flow uses up the
    whole rating gets a zero limit and ``saturated=True``.
    """
    q = max(abs(q_from), abs(q_to))
    rad = rate * rate - q * q
    if rad <= 0.0:
        if rad < 0.0:
            log.debug("reactive flow %.3f exceeds rating %.3f; MW limit clamped to 0", q, rate)
        return 0.0, True
    return math.sqrt(rad), False


def loading_level(s_from: float, s_to: float, rate: float) -> float:
    return max(abs(s_from), abs(s_to)) / rate


def initial_flow(p_from: float, p_to: float) -> float:
    """Signed larger-end MW flow; the sign follows the from end (sign(0) = +1)."""
    mag = max(abs(p_from), abs(p_to))
    return -mag if p_from < 0 else mag


@dataclass(frozen=True)
class NetworkConstraint:
    scope: str | None            # None for the base case, else a contingency id
    branch: int | None
    interface: int | None
    initial_flow: float
    mw_limit: float              # LimitA_k / LimitC_kc / interface limit / pseudo limit
    general_limit: float         # LimitA_k / LimitC_k / interface limit
    loading: float
    critical: bool
    reactive_saturated: bool = False
    pseudo: bool = False

    @property
    def status(self) -> str:
        return "critical" if self.critical else "active"

    @property
    def key(self) -> tuple:
        return (self.scope or "", "I" if self.interface is not None else "K",
                self.interface if self.interface is not None else self.branch)


@dataclass(frozen=True)
class ViolationRecord:
    branch: int
    scope: str | None
    magnitude: float   # MVA above the applicable rating
    loading: float


@dataclass
class RtcaReport:
    contingencies: list[Contingency]
    base: AcSolution
    status: dict[str, str]
    solutions: dict[str, AcSolution]
    violations: list[ViolationRecord]
    base_constraints: list[NetworkConstraint]
    ctg_constraints: list[NetworkConstraint]
    base_flows: dict[int, float]
    ctg_flows: dict[str, dict[int, float]]
    limit_c_general: dict[int, float]
    rates: dict[int, tuple[float, float]]
    diagnostics: list[str] = field(default_factory=list)

    @property
    def constraints(self) -> list[NetworkConstraint]:
        return self.base_constraints + self.ctg_constraints

    @property
    def critical_constraints(self) -> list[NetworkConstraint]:
        return [c for c in self.constraints if c.critical]

    @property
    def active_contingencies(self) -> list[str]:
        return sorted({c.scope for c in self.ctg_constraints})

    @property
    def critical_contingencies(self) -> list[str]:
        return sorted({c.scope for c in self.ctg_constraints if c.critical})

    def contingency(self, ctg_id: str) -> Contingency:
        return next(c for c in self.contingencies if c.id == ctg_id)

    def violations_for(self, scope: str | None) -> dict[int, float]:
        return {v.branch: v.magnitude for v in self.violations if v.scope == scope}

    @property
    def total_violation(self) -> float:
        return sum(v.magnitude for v in self.violations)

    def max_loading(self) -> float:
        return max((v.loading for v in self.violations), default=0.0)


def worker_count() -> int:
    env = os.environ.get("EMS_CTS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Ordered map, threaded up to ``EMS_CTS_THREADS`` workers."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _contingency_case(case: Case, ctg: Contingency, config: Config) -> Case:
    return apply_outage(case, ctg, config.participation_rule)


def solve_contingency(case: Case, ctg: Contingency, config: Config,
                      base: AcSolution | None = None) -> tuple[str, AcSolution | None, str]:
    """AC-solve ``case`` under ``ctg``; returns (status, solution, note)."""
    try:
        post = _contingency_case(case, ctg, config)
    except IslandingError as exc:
        return "islanding", None, str(exc)
    try:
        sol = solve_ac_power_flow(post, start=base, rule=config.participation_rule)
    except PowerFlowError as exc:
        return "unsolved", None, str(exc)
    if not sol.converged:
        return "unsolved", None, "; ".join(sol.diagnostics)
    return "solved", sol, ""


def branch_violations(case: Case, sol: AcSolution, config: Config, scope: str | None,
                      skip: Iterable[int] = ()) -> dict[int, tuple[float, float]]:
    """(violation MVA, loading) per branch loaded above its applicable rating."""
    skip = set(skip)
    out = {}
    for br in case.in_service_branches:
        if br.id in skip or br.id not in sol.p_from:
            continue
        rate = (br.rate_a if scope is None else br.rate_c) * config.derate
        smax = sol.s_max(br.id)
        if smax > rate:
            out[br.id] = (smax - rate, smax / rate)
    return out


def run_rtca(case: Case, contingencies: Sequence[Contingency] | None = None,
             config: Config | None = None, base: AcSolution | None = None) -> RtcaReport:
    """Base-case screening plus an N-1 sweep of AC power flows.

    A branch is monitored in the base case when its loading is at least
    ``pct`` and under a contingency when its post-contingency loading is at
    least ``pctc``.  A monitored constraint is critical when its initial MW
    flow exceeds its MW limit.
    """
    config = config or Config()
    if contingencies is None:
        contingencies = default_contingencies(case)
    contingencies = sorted(contingencies, key=lambda c: (c.kind, c.element))
    diagnostics: list[str] = []
    if base is None:
        base = solve_ac_power_flow(case, rule=config.participation_rule)
    if not base.converged:
        raise PowerFlowError("base-case AC power flow did not converge")

    rates = {br.id: (br.rate_a * config.derate, br.rate_c * config.derate)
             for br in case.in_service_branches}
    base_flows, limit_c_general = {}, {}
    base_cons: list[NetworkConstraint] = []
    violations: list[ViolationRecord] = []
    for br in case.in_service_branches:
        k = br.id
        ra, rc = rates[k]
        p0 = initial_flow(base.p_from[k], base.p_to[k])
        base_flows[k] = p0
        lim_a, sat = mw_limit(ra, base.q_from[k], base.q_to[k])
        limit_c_general[k], _ = mw_limit(rc, base.q_from[k], base.q_to[k])
        ll = loading_level(base.s_from(k), base.s_to(k), ra)
        if ll > 1.0:
            violations.append(ViolationRecord(k, None, base.s_max(k) - ra, ll))
        if ll >= config.pct:
            base_cons.append(NetworkConstraint(None, k, None, p0, lim_a, lim_a, ll,
                                               abs(p0) > lim_a, sat))
    base_cons += _interface_constraints(case, None, base_flows, config.pct)

    def evaluate(ctg):
        return solve_contingency(case, ctg, config, base)

    results = parallel_map(evaluate, contingencies)
    status, solutions, ctg_flows = {}, {}, {}
    ctg_cons: list[NetworkConstraint] = []
    for ctg, (st, sol, note) in zip(contingencies, results):
        cid = ctg.id
        status[cid] = st
        if st != "solved":
            diagnostics.append(f"contingency {cid}: {st} ({note})")
            continue
        solutions[cid] = sol
        flows = {}
        for br in case.in_service_branches:
            k = br.id
            if ctg.kind == "branch" and k == ctg.element:
                flows[k] = 0.0
                continue
            rc = rates[k][1]
            pkc0 = initial_flow(sol.p_from[k], sol.p_to[k])
            flows[k] = pkc0
            ll = loading_level(sol.s_from(k), sol.s_to(k), rc)
            if ll > 1.0:
                violations.append(ViolationRecord(k, cid, sol.s_max(k) - rc, ll))
            if ll >= config.pctc:
                lim, sat = mw_limit(rc, sol.q_from[k], sol.q_to[k])
                ctg_cons.append(NetworkConstraint(cid, k, None, pkc0, lim, limit_c_general[k], ll,
                                                  abs(pkc0) > lim, sat))
        ctg_flows[cid] = flows
        ctg_cons += _interface_constraints(case, cid, flows, config.pctc)

    return RtcaReport(list(contingencies), base, status, solutions, violations, base_cons,
                      ctg_cons, base_flows, ctg_flows, limit_c_general, rates, diagnostics)


def _interface_constraints(case: Case, scope: str | None, flows: dict[int, float],
                           tol: float) -> list[NetworkConstraint]:
    out = []
    for itf in case.interfaces:
        limit = itf.limit_for(scope)
        total = sum(sign * flows.get(k, 0.0) for k, sign in itf.members)
        ll = abs(total) / limit if limit > 0 else math.inf
        if ll >= tol:
            out.append(NetworkConstraint(scope, None, itf.id, total, limit, limit, ll,
                                         abs(total) > limit))
    return out
