"""Newton-Raphson AC power flow with distributed slack, and N-1 outage handling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .netmodel import Case, Config, islands

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    pass


class IslandingError(PowerFlowError):
    def __init__(self, message, islands=None):
        super().__init__(message)
        self.islands = islands or []


@dataclass(frozen=True)
class Contingency:
    kind: str  # "branch" | "generator"
    element: int

    @property
    def id(self) -> str:
        return f"{'B' if self.kind == 'branch' else 'G'}{self.element}"

    @classmethod
    def parse(cls, text: str) -> "Contingency":
        kind = {"B": "branch", "G": "generator"}.get(text[:1])
        if kind is None:
            raise ValueError(f"bad contingency id {text!r}")
        return cls(kind, int(text[1:]))

    def __str__(self):
        return self.id


def default_contingencies(case: Case) -> list[Contingency]:
    out = [Contingency("branch", br.id) for br in case.in_service_branches]
    out += [Contingency("generator", g.id) for g in case.generators]
    return out


@dataclass
class AcSolution:
    vm: dict[int, float]
    va: dict[int, float]
    p_from: dict[int, float]
    p_to: dict[int, float]
    q_from: dict[int, float]
    q_to: dict[int, float]
    branch_loss: dict[int, float]
    gen_p: dict[int, float]
    bus_q_gen: dict[int, float]
    converged: bool
    iterations: int
    max_mismatch: float
    slack_mw: float = 0.0
    diagnostics: list[str] = field(default_factory=list)

    def s_from(self, k: int) -> float:
        return float(np.hypot(self.p_from[k], self.q_from[k]))

    def s_to(self, k: int) -> float:
        return float(np.hypot(self.p_to[k], self.q_to[k]))

    def s_max(self, k: int) -> float:
        return max(self.s_from(k), self.s_to(k))

    def q_max(self, k: int) -> float:
        return max(abs(self.q_from[k]), abs(self.q_to[k]))

    @property
    def total_loss(self) -> float:
        return sum(self.branch_loss.values())


def participation_factors(case: Case, rule: str = "headroom",
                          dispatch: dict[int, float] | None = None) -> dict[int, float]:
    """Shares (summing to 1) used to spread an MW imbalance over units."""
    dispatch = dispatch or {g.id: g.p0 for g in case.generators}
    pool = [g for g in case.generators if g.dispatchable] or list(case.generators)
    if not pool:
        return {}
    if rule == "headroom":
        room = {g.id: max(g.p_max - dispatch[g.id], 0.0) for g in pool}
        total = sum(room.values())
        if total > 1e-9:
            return {gid: r / total for gid, r in room.items()}
    return {g.id: 1.0 / len(pool) for g in pool}


def _branch_admittances(case: Case):
    br = case.in_service_branches
    idx = case.bus_index
    f = np.array([idx[k.from_bus] for k in br], dtype=int)
    t = np.array([idx[k.to_bus] for k in br], dtype=int)
    ys = np.array([1.0 / complex(k.r, k.x) for k in br])
    bc = np.array([k.b for k in br])
    # DC flow convention p = (d_f - d_t + alpha)/x  <=>  tap angle -alpha at the from end.
    tap = np.exp(-1j * np.array([k.alpha for k in br]))
    yff = ys + 0.5j * bc
    yft = -ys / np.conj(tap)
    ytf = -ys / tap
    ytt = ys + 0.5j * bc
    return br, f, t, yff, yft, ytf, ytt


def build_ybus(case: Case):
    n = len(case.buses)
    br, f, t, yff, yft, ytf, ytt = _branch_admittances(case)
    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (f, f), yff)
    np.add.at(Y, (f, t), yft)
    np.add.at(Y, (t, f), ytf)
    np.add.at(Y, (t, t), ytt)
    return Y


def solve_ac_power_flow(case: Case, start: AcSolution | None = None, *,
                        rule: str = "headroom", tol: float = 1e-10,
                        max_iter: int = 20) -> AcSolution:
    """Solve the AC power flow of ``case``.

    Units at buses with generation hold ``v_set``; the reference bus fixes the
    angle.  The MW imbalance (losses plus any schedule mismatch) is shared by
    the units according to ``rule``.  ``start`` warm-starts from a previous
    solution; otherwise a flat start is used.

    Returns a solution with ``converged=False`` and diagnostics if Newton
    iterations do not reach ``tol`` (p.u.) within ``max_iter``.
    """
    isl = islands(case)
    if len(isl) > 1:
        raise IslandingError(f"network splits into {len(isl)} islands", isl)
    if not case.generators:
        raise IslandingError("no generation source in the network", isl)

    n = len(case.buses)
    idx = case.bus_index
    base = case.base_mva
    ref = idx[case.reference_bus]
    Y = build_ybus(case)

    pv_mask = np.zeros(n, dtype=bool)
    for g in case.generators:
        pv_mask[idx[g.bus]] = True
    pv_mask[ref] = True
    pq = np.flatnonzero(~pv_mask)
    nonref = np.array([i for i in range(n) if i != ref], dtype=int)

    p_sched = np.zeros(n)
    q_load = np.zeros(n)
    for d in case.loads:
        p_sched[idx[d.bus]] -= d.p / base
        q_load[idx[d.bus]] += d.q / base
    for g in case.generators:
        p_sched[idx[g.bus]] += g.p0 / base
    pf = participation_factors(case, rule)
    share = np.zeros(n)
    for gid, s in pf.items():
        share[idx[case.gen_map[gid].bus]] += s

    vset = np.array([b.v_set for b in case.buses])
    if start is not None:
        vm = np.array([start.vm.get(b.id, 1.0) for b in case.buses])
        va = np.array([start.va.get(b.id, 0.0) for b in case.buses])
        vm[pv_mask] = vset[pv_mask]
    else:
        vm = np.where(pv_mask, vset, 1.0)
        va = np.zeros(n)
    lam = 0.0  # p.u. slack shared by participation

    npq = len(pq)
    converged = False
    it = 0
    mis = np.inf
    while True:
        V = vm * np.exp(1j * va)
        Ibus = Y @ V
        S = V * np.conj(Ibus)
        dP = S.real - (p_sched + lam * share)
        dQ = S.imag + q_load
        F = np.concatenate([dP, dQ[pq]])
        mis = float(np.max(np.abs(F))) if F.size else 0.0
        if mis < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        Vn = np.exp(1j * va)
        dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vn)) + np.diag(np.conj(Ibus) * Vn)
        dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
        J = np.zeros((n + npq, n + npq))
        J[:n, : n - 1] = dS_dVa.real[:, nonref]
        J[:n, n - 1: n - 1 + npq] = dS_dVm.real[:, pq]
        J[:n, -1] = -share
        J[n:, : n - 1] = dS_dVa.imag[np.ix_(pq, nonref)]
        J[n:, n - 1: n - 1 + npq] = dS_dVm.imag[np.ix_(pq, pq)]
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {it}") from exc
        if not np.all(np.isfinite(dx)):
            break
        va[nonref] += dx[: n - 1]
        vm[pq] += dx[n - 1: n - 1 + npq]
        lam += dx[-1]

    diagnostics = []
    if not converged:
        diagnostics.append(f"no convergence after {it} iterations (mismatch {mis:.3e} p.u.)")
        log.debug("AC power flow for %s did not converge", case.name)

    V = vm * np.exp(1j * va)
    br, f, t, yff, yft, ytf, ytt = _branch_admittances(case)
    Sf = V[f] * np.conj(yff * V[f] + yft * V[t]) * base
    St = V[t] * np.conj(ytf * V[f] + ytt * V[t]) * base
    Sbus = V * np.conj(Y @ V) * base

    gen_p = {g.id: float(g.p0 + lam * base * pf.get(g.id, 0.0)) for g in case.generators}
    qgen = Sbus.imag + q_load * base
    bus_q_gen = {b.id: float(qgen[i]) for i, b in enumerate(case.buses) if pv_mask[i]}
    ids = [k.id for k in br]
    return AcSolution(
        vm={b.id: float(vm[i]) for i, b in enumerate(case.buses)},
        va={b.id: float(va[i]) for i, b in enumerate(case.buses)},
        p_from=dict(zip(ids, Sf.real.tolist())),
        p_to=dict(zip(ids, St.real.tolist())),
        q_from=dict(zip(ids, Sf.imag.tolist())),
        q_to=dict(zip(ids, St.imag.tolist())),
        branch_loss=dict(zip(ids, (Sf.real + St.real).tolist())),
        gen_p=gen_p,
        bus_q_gen=bus_q_gen,
        converged=converged,
        iterations=it,
        max_mismatch=mis,
        slack_mw=float(lam * base),
        diagnostics=diagnostics,
    )


def nodal_mismatch(case: Case, sol: AcSolution) -> np.ndarray:
    """Complex power mismatch per bus (p.u.) recomputed from ``sol``."""
    idx = case.bus_index
    base = case.base_mva
    Y = build_ybus(case)
    V = np.array([sol.vm[b.id] * np.exp(1j * sol.va[b.id]) for b in case.buses])
    S = V * np.conj(Y @ V)
    inj = np.zeros(len(case.buses), dtype=complex)
    for g in case.generators:
        inj[idx[g.bus]] += sol.gen_p[g.id] / base
    for b, q in sol.bus_q_gen.items():
        inj[idx[b]] += 1j * q / base
    for d in case.loads:
        inj[idx[d.bus]] -= complex(d.p, d.q) / base
    return S - inj


def redistribute(case: Case, lost_mw: float, exclude: int | None = None,
                 rule: str = "headroom") -> dict[int, float]:
    """Spread ``lost_mw`` over dispatchable units, capped at each unit's p_max."""
    pool = [g for g in case.generators if g.dispatchable and g.id != exclude]
    out = {g.id: g.p0 for g in case.generators if g.id != exclude}
    remaining = lost_mw
    # Repeat so that capped units pass their share on to units with headroom.
    for _ in range(len(pool) + 1):
        if remaining <= 1e-12:
            break
        if rule == "headroom":
            room = {g.id: max(g.p_max - out[g.id], 0.0) for g in pool}
        else:
            room = {g.id: 1.0 if g.p_max - out[g.id] > 1e-12 else 0.0 for g in pool}
        total = sum(room.values())
        if total <= 1e-12:
            break
        moved = 0.0
        for g in pool:
            add = min(remaining * room[g.id] / total, g.p_max - out[g.id])
            out[g.id] += add
            moved += add
        remaining -= moved
    return out


def apply_outage(case: Case, ctg: Contingency, rule: str = "headroom") -> Case:
    """Return ``case`` with the contingency element removed.

    Branch outages leave injections untouched.  A generator outage hands the
    unit's MW to the remaining dispatchable units by participation.
    Raises :class:`IslandingError` if the outage splits the network.
    """
    if ctg.kind == "branch":
        br = case.branch_map.get(ctg.element)
        if br is None or not br.in_service:
            raise ValueError(f"branch {ctg.element} is not in service")
        out = case.without_branch(ctg.element)
        isl = islands(out)
        if len(isl) > 1:
            raise IslandingError(f"outage of branch {ctg.element} islands the network", isl)
        return out
    if ctg.kind == "generator":
        g = case.gen_map.get(ctg.element)
        if g is None:
            raise ValueError(f"generator {ctg.element} not in case")
        new_p = redistribute(case, g.p0, exclude=g.id, rule=rule)
        gens = tuple(replace(x, p0=new_p[x.id]) for x in case.generators if x.id != g.id)
        if not gens:
            raise IslandingError("outage removes the last generator")
        return replace(case, generators=gens)
    raise ValueError(f"unknown contingency kind {ctg.kind!r}")


def config_rule(config: Config | None) -> str:
    return config.participation_rule if config is not None else "headroom"
