"""Nodal prices from SCED duals and settlement / congestion metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acpf import Contingency
from .sced import ScedInput, ScedKind, ScedSolution, forecast_load, solve_sced
from .netmodel import LoadKind


class MissingDualError(KeyError):
    pass


@dataclass
class LmpResult:
    bus_ids: tuple[int, ...]
    energy: float                     # system (reference) price
    lmp: dict[int, float]
    congestion: dict[int, float]
    probe: dict[int, float]           # d(objective)/d(load at bus), from all load-dependent rows
    assembled: dict[int, float]       # congestion part rebuilt from limit duals and factors

    def residual(self) -> dict[int, float]:
        """Per-bus gap between the price difference and its limit-dual decomposition."""
        return {n: abs((self.probe[n] - self.energy) - self.assembled[n]) for n in self.bus_ids}

    @property
    def max_residual(self) -> float:
        return max(self.residual().values(), default=0.0)


@dataclass
class MarketResults:
    lmp: LmpResult
    avg_lmp: float
    avg_lmp_cg: float
    load_payment: float
    gen_revenue: float
    gen_cost: float
    gen_rent: float
    congestion_revenue: float
    congestion_cost: float | None = None
    ccr: float | None = None
    extra: dict = field(default_factory=dict)


def _assembled_congestion(sol: ScedSolution) -> np.ndarray:
    """Sum over limit duals of (F+ - F-) weighted by PTDF (base) or OTDF (contingency)."""
    model = sol.model
    sens = model.sens
    case = model.inp.case
    out = np.zeros(len(sens.model.bus_ids))
    for key, (fp, fm) in sol.limit_duals.items():
        scope, tag, ident = key
        w = fp - fm
        if w == 0.0:
            continue
        if tag == "K":
            members = [(ident, 1)]
        else:
            members = next(i for i in case.interfaces if i.id == ident).members
        gone = Contingency.parse(scope).element if scope else None
        for k, s in members:
            if k == gone:
                continue
            fac = sens.ptdf_col(k) if scope is None else sens.otdf_col(k, gone)
            out += s * w * fac
    return out


def compute_lmps(sol: ScedSolution) -> LmpResult:
    model = sol.model
    dc = model.sens.model
    bus_ids = dc.bus_ids
    y = sol.lp.duals
    lp = model.lp
    probe = np.zeros(len(bus_ids))
    for name, vec in model.load_rhs.items():
        probe += y[lp.con(name)] * vec
    assembled = _assembled_congestion(sol)
    if sol.kind.angle_based:
        energy = float(probe[dc.bus_pos(dc.reference)])
        lmp = probe.copy()
    else:
        if "balance" not in sol.balance_duals:
            raise MissingDualError("system balance dual missing")
        energy = sol.balance_duals["balance"]
        lmp = energy + assembled
    return LmpResult(bus_ids, energy,
                     dict(zip(bus_ids, lmp.tolist())),
                     dict(zip(bus_ids, (lmp - energy).tolist())),
                     dict(zip(bus_ids, probe.tolist())),
                     dict(zip(bus_ids, assembled.tolist())))


def settlement(lmps: LmpResult, sol: ScedSolution) -> MarketResults:
    inp = sol.model.inp
    case, cfg = inp.case, inp.config
    prices = lmps.lmp
    pay = 0.0
    for d in case.loads:
        if d.kind is LoadKind.VIRTUAL and not cfg.virtual_loads_in_payment:
            continue
        pay += prices[d.bus] * forecast_load(d, cfg)
    rvn = sum(prices[g.bus] * sol.p_g[g.id] for g in case.generators)
    cost = sol.energy_cost
    n = len(lmps.bus_ids)
    return MarketResults(lmps,
                         sum(prices.values()) / n,
                         sum(lmps.congestion.values()) / n,
                         pay, rvn, cost, rvn - cost, pay - rvn)


def congestion_cost(inp: ScedInput, kind: ScedKind | str, with_network: ScedSolution | None = None,
                    backend: str = "simplex") -> tuple[float, float, float]:
    """(constrained cost, unconstrained cost, difference)."""
    t1 = (with_network or solve_sced(inp, kind, backend)).objective
    t2 = solve_sced(inp.without_network(), kind, backend).objective
    return t1, t2, t1 - t2


def ccr(cngst_esced: float, cngst_sced: float) -> float:
    return cngst_esced - cngst_sced


def market_results(sol: ScedSolution, backend: str = "simplex") -> MarketResults:
    res = settlement(compute_lmps(sol), sol)
    _, _, res.congestion_cost = congestion_cost(sol.model.inp, sol.kind, sol, backend)
    return res
