"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from gridems.acpf import nodal_mismatch, solve_ac_power_flow
from gridems.cli import main
from gridems.cts import percent_reduction, pseudo_rate
from gridems.dcsens import build_dc_model, compute_ptdf, compute_sensitivities, dc_flow
from gridems.lpcore import check_solution
from gridems.market import compute_lmps, market_results
from gridems.netmodel import Config, CostCurve, CostSegment, CurveKind, Generator, block_curve
from gridems.netmodel import linearize_slope_curve
from gridems.orchestrator import run_procedure_a, run_procedure_b
from gridems.rtca import mw_limit, run_rtca
from gridems.sced import ScedKind, dc_consistent, input_from_rtca, solve_sced

from conftest import FIXTURES, load
from test_lpcore import _two_bus_dispatch, _vertex_min
from test_sced import two_bus_input

KINDS = list(ScedKind)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_criterion_01_sensitivity_oracles(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(0)
    for name in ("triangle", "case14"):
        case = load(name)
        m = build_dc_model(case)
        ptdf = compute_ptdf(m)
        shift = dc_flow(m, {})
        base = np.array([shift[k] for k in m.branch_ids])
        for _ in range(100):
            v = rng.normal(0, 50, len(m.bus_ids))
            v[m.bus_pos(m.reference)] -= v.sum()
            inj = dict(zip(m.bus_ids, v))
            got = dc_flow(m, inj)
            worst = max(worst, float(np.max(np.abs(v @ ptdf.matrix + base
                                                   - [got[k] for k in m.branch_ids]))))
        sens = compute_sensitivities(m, m.branch_ids)
        v = rng.normal(0, 50, len(m.bus_ids))
        v[m.bus_pos(m.reference)] -= v.sum()
        inj = dict(zip(m.bus_ids, v))
        pre = dc_flow(m, inj)
        for c, lodf in sens.lodf.items():
            post = dc_flow(build_dc_model(case.without_branch(c), m.reference), inj)
            otdf = sens.otdf(c)
            for k in m.branch_ids:
                if k == c:
                    continue
                worst = max(worst, abs(pre[k] + lodf(k) * pre[c] - post[k]),
                            abs(v @ otdf[:, m.branch_pos(k)] + shift_ctg(case, m, c, k) - post[k]))
    elapsed = time.perf_counter() - t0
    verdict(1, worst < 1e-8 and elapsed < 5.0, f"max error {worst:.2e} MW, {elapsed:.2f} s")


def shift_ctg(case, m, c, k):
    """Phase-shift flow on k with c out (zero on shifter-free fixtures)."""
    return dc_flow(build_dc_model(case.without_branch(c), m.reference), {})[k]


def test_criterion_02_model_equivalence(verdict):
    worst = 0.0
    for name in FIXTURES:
        case = load(name)
        cfg = Config(reserve=name != "two_bus")
        inp = dc_consistent(input_from_rtca(case, run_rtca(case, config=cfg), cfg))
        obj = {k: solve_sced(inp, k).objective for k in KINDS}
        for a, b in ((ScedKind.M1, ScedKind.M4), (ScedKind.M3, ScedKind.M5)):
            worst = max(worst, abs(obj[a] - obj[b]) / max(1.0, abs(obj[a])))
    verdict(2, worst < 1e-6, f"max relative gap {worst:.2e}")


def test_criterion_03_hand_solved_lp(two_bus, verdict):
    oracle = _vertex_min(_two_bus_dispatch())
    ok = abs(oracle - 1600.0) < 1e-9
    details = [f"vertex oracle {oracle:g}"]
    for kind in KINDS:
        res = market_results(solve_sced(two_bus_input(two_bus), kind))
        lmp = res.lmp.lmp
        ok &= abs(res.gen_cost - 1600.0) < 1e-6 and abs(res.congestion_cost - 400.0) < 1e-6
        ok &= abs(lmp[1] - 10.0) < 1e-6 and abs(lmp[2] - 30.0) < 1e-6
        ok &= abs(res.congestion_revenue - 2000.0) < 1e-6
        details.append(f"{kind.value}: {res.gen_cost:g}/{lmp[1]:g},{lmp[2]:g}/"
                       f"{res.congestion_cost:g}/{res.congestion_revenue:g}")
    verdict(3, ok, "; ".join(details))


def test_criterion_04_duality_identity(verdict):
    residual, gap, runs = 0.0, 0.0, 0
    sols = []
    for name in FIXTURES:
        case = load(name)
        for kind in KINDS:
            sols.append(solve_sced(input_from_rtca(case, run_rtca(case), Config()), kind))
            for proc in (run_procedure_a, run_procedure_b):
                rep = proc(case, kind=kind)
                sols.append(rep.sced)
                if rep.sced_actual is not None:
                    sols.append(rep.sced_actual)
    for sol in sols:
        runs += 1
        residual = max(residual, compute_lmps(sol).max_residual)
        gap = max(gap, check_solution(sol.lp)["duality_gap"])
    verdict(4, residual < 1e-6 and gap < 1e-7,
            f"{runs} runs, max residual {residual:.2e} $/MWh, max gap {gap:.2e}")


def test_criterion_05_procedure_a(case14, verdict):
    t0 = time.perf_counter()
    rep = run_procedure_a(case14)
    elapsed = time.perf_counter() - t0
    before = rep.rtca_pre.total_violation
    after = rep.rtca_post.total_violation
    worst = rep.rtca_post.max_loading()
    ok = (before > 0 and after <= 0.05 * before and worst <= 1.02
          and rep.sced.total_shed == 0.0 and elapsed < 30.0)
    verdict(5, ok, f"violation {before:.3f} -> {after:.3f} MVA, max loading {worst:.4f}, "
                   f"shed {rep.sced.total_shed:g} MW, {elapsed:.2f} s")


def test_criterion_06_procedure_b(verdict):
    demo = run_procedure_b(load("ctsdemo"))
    ok = demo.ccr < 0
    details = [f"ctsdemo CCR {demo.ccr:.3f}"]
    for chk in demo.reapply:
        ok &= chk.achieved >= chk.percent - 0.10
        details.append(f"reapply {chk.contingency}/{chk.branch} planned {chk.percent:.4f} "
                       f"achieved {chk.achieved:.4f}")
    ok &= bool(demo.reapply)
    for name in FIXTURES:
        for kind in KINDS:
            b = run_procedure_b(load(name), kind=kind)
            if b.cngst_esced > b.cngst_sced + 1e-7:
                ok = False
                details.append(f"{name}/{kind.value}: E {b.cngst_esced:.3f} > S {b.cngst_sced:.3f}")
    verdict(6, ok, "; ".join(details))


def test_criterion_07_pseudo_limit_formulas(verdict):
    pct = percent_reduction(20.0, 5.0)
    prate = pseudo_rate(100.0, 20.0, pct)
    limit, _ = mw_limit(prate, 69.0, 0.0)
    ok = pct == 0.75 and prate == 115.0 and abs(limit - 92.0) < 1e-9
    verdict(7, ok, f"percent {pct}, pseudo rate {prate} MVA, limit {limit:g} MW")


def _worked_gen():
    curve = CostCurve(CurveKind.SLOPE, 50.0, 10.0, (CostSegment(50.0, 20.0),))
    return Generator(1, 1, 0.0, 100.0, 50.0, 10, 10, cost=curve)


def _block_cost(segs, p):
    cost, left = 0.0, 0.0
    for s in segs:
        cost += min(max(p - left, 0.0), s.breadth) * s.price
        left += s.breadth
    return cost


def test_criterion_08_linearization(verdict):
    gen = _worked_gen()
    prices = [s.price for s in linearize_slope_curve(gen, 2.0).cost.segments]
    pts = np.random.default_rng(0).uniform(0.0, 100.0, 10)
    errs = []
    for dc in (2.0, 1.0):
        segs = block_curve(gen, dc)
        errs.append(sum(abs(_block_cost(segs, p) - gen.cost.cost(p)) for p in pts))
    ratio = errs[1] / errs[0]
    ok = prices == [11.0, 13.0, 15.0, 17.0, 19.0] and 0.45 <= ratio <= 0.55
    verdict(8, ok, f"prices {prices}, error ratio {ratio:.4f} (target 0.5 +/- 10%)")


def test_criterion_09_ac_power_flow(verdict):
    details, ok = [], True
    for name in FIXTURES:
        case = load(name)
        sol = solve_ac_power_flow(case)
        mis = float(np.max(np.abs(nodal_mismatch(case, sol))))
        bal = abs(sum(sol.gen_p.values()) - case.total_load() - sol.total_loss)
        ok &= sol.converged and sol.iterations <= 20 and mis < 1e-8 and bal < 1e-6
        details.append(f"{name}: {sol.iterations} it, mismatch {mis:.1e}, balance {bal:.1e}")
    verdict(9, ok, "; ".join(details))


def test_criterion_10_reproducibility(tmp_path, verdict):
    outs = []
    for i in range(2):
        dest = tmp_path / f"run{i}.txt"
        rc = main(["run", "--case", "ctsdemo.grid", "--compare", "--out", str(dest)])
        outs.append((rc, dest.read_bytes()))
    ok = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1]
    verdict(10, ok, f"{len(outs[0][1])} bytes, identical={outs[0][1] == outs[1][1]}")
