import pytest

from gridems.acpf import Contingency
from gridems.cts import (CtsEvaluation, acceptable, enumerate_candidates, evaluate_candidate,
                         percent_reduction, pseudo_limits, pseudo_rate, run_cts, select_best)
from gridems.netmodel import Config, parse_case
from gridems.orchestrator import _status
from gridems.rtca import mw_limit, run_rtca

from helpers import RING4, ring4, triangle_dc


def test_triangle_has_no_candidates():
    assert enumerate_candidates(triangle_dc(), Contingency("branch", 1)) == []


def test_ring_candidates():
    assert enumerate_candidates(ring4(), Contingency("branch", 1)) == []
    chord = parse_case(RING4.replace("[gen]", "5 1 3 0.1 0 200 240 1 0 0\n[gen]"))
    # with branch 1 out, opening 2 or 5 keeps bus 2 or 3 attached; 3 and 4 do too
    assert enumerate_candidates(chord, Contingency("branch", 1)) == [3, 4, 5]


def test_generator_contingency_candidates():
    chord = parse_case(RING4.replace("[gen]", "5 1 3 0.1 0 200 240 1 0 0\n[gen]"))
    assert enumerate_candidates(chord, Contingency("generator", 1)) == [1, 2, 3, 4, 5]
    assert enumerate_candidates(ring4(), Contingency("generator", 1)) == [1, 2, 3, 4]


def test_violated_branch_excluded():
    chord = parse_case(RING4.replace("[gen]", "5 1 3 0.1 0 200 240 1 0 0\n[gen]"))
    assert 5 not in enumerate_candidates(chord, Contingency("branch", 1), exclude=[5])
    ev = evaluate_candidate(chord, Contingency("branch", 1), 5, {5: 3.0})
    assert not ev.admissible and not ev.feasible


def _ev(switch, before, after, admissible=True):
    return CtsEvaluation("B1", switch, before, after, True, admissible)


def test_select_best_tie_break():
    evs = [_ev(5, {1: 20}, {1: 8}), _ev(3, {1: 20}, {1: 8}), _ev(9, {1: 20}, {1: 13})]
    assert select_best(evs).switch == 3


def test_select_best_none_and_single():
    assert select_best([_ev(2, {1: 5}, {1: 5}, admissible=False)]) is None
    assert select_best([]) is None
    assert select_best([_ev(4, {1: 5}, {1: 1})]).switch == 4


def test_acceptance_condition():
    assert acceptable({1: 20.0}, {1: 5.0})
    assert not acceptable({1: 20.0}, {1: 20.0})
    # relieves 1 but worsens 2
    assert not acceptable({1: 20.0, 2: 1.0}, {1: 0.0, 2: 4.0})
    # new violation on a previously clean branch
    assert not acceptable({1: 20.0}, {1: 0.0, 3: 0.5})


def test_pseudo_limit_worked_values():
    pct = percent_reduction(20.0, 5.0)
    assert pct == 0.75
    assert pseudo_rate(100.0, 20.0, pct) == 115.0
    assert mw_limit(115.0, 69.0, 0.0)[0] == pytest.approx(92.0)
    assert pseudo_rate(100.0, 20.0, percent_reduction(20.0, 0.0)) == 120.0


@pytest.fixture(scope="module")
def demo(ctsdemo):
    cfg = Config()
    case, ac = _status(ctsdemo, cfg)
    rep = run_rtca(case, config=cfg, base=ac)
    return case, rep, run_cts(case, rep, cfg)


def test_demo_single_critical_contingency(demo):
    _, rep, res = demo
    assert rep.critical_contingencies == ["B5"]
    assert list(res.best) == ["B5"]


def test_demo_switch_relieves_overload(demo):
    case, rep, res = demo
    best = res.best["B5"]
    assert best.switch == 6 and best.admissible
    assert best.total_after < best.total_before
    # independent AC re-evaluation agrees with the sweep
    again = evaluate_candidate(case, Contingency("branch", 5), 6, rep.violations_for("B5"))
    assert again.after == pytest.approx(best.after)


def test_demo_rejections_are_justified(demo):
    _, _, res = demo
    for ev in res.evaluations["B5"]:
        if ev.feasible and not ev.admissible:
            worse = any(v > ev.before.get(k, 0.0) + 1e-9 for k, v in ev.after.items())
            assert worse or ev.total_after >= ev.total_before - 1e-9


def test_demo_pseudo_records(demo):
    _, rep, res = demo
    assert len(res.pseudo) == 1
    p = res.pseudo[0]
    actual = next(c for c in rep.ctg_constraints if c.scope == p.contingency and c.branch == p.branch)
    assert 0.0 <= p.percent <= 1.0
    assert p.prate_c >= p.rate_c
    assert p.mw_limit >= actual.mw_limit
    assert p.general_limit >= actual.general_limit
    assert p.percent == pytest.approx((p.violation - p.violation_cts) / p.violation)


def test_pseudo_skips_zero_violation(demo):
    _, rep, res = demo
    best = res.best["B5"]
    ev = CtsEvaluation("B5", best.switch, {**best.before, 99: 0.0}, best.after, True, True)
    assert [r.branch for r in pseudo_limits(ev, rep)] == [9]
