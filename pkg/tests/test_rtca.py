import math

import pytest
from hypothesis import given, settings, strategies as st

from gridems.acpf import Contingency, apply_outage, solve_ac_power_flow
from gridems.netmodel import Config, parse_case
from gridems.report import _Writer, write_rtca
from gridems.rtca import initial_flow, loading_level, mw_limit, run_rtca

PARALLEL = """
[meta]
name parallel
base_mva 100
[bus]
1 138 1 1.0
2 138 0 1.0
3 138 0 1.0
[branch]
1 1 2 0.1 0 500 500 1 0 0
2 1 2 0.1 0 {rate} {rate} 1 0 0
3 2 3 0.1 0 500 500 1 0 0
[gen]
1 1 0 300 120 10 10 0 1
2 3 0 300 0 10 10 0 1
[gencost]
1 block 0 10 300 10
2 block 0 20 300 20
[load]
1 2 120 120 positive 0
"""


def test_mw_limit_examples():
    assert mw_limit(100, 60, 80) == (pytest.approx(60.0), False)
    assert mw_limit(100, 0, 0) == (100.0, False)
    assert mw_limit(125, 35, -20)[0] == pytest.approx(120.0)


def test_mw_limit_saturation_clamps():
    assert mw_limit(50, 60, 0) == (0.0, True)
    assert mw_limit(50, 50, 0) == (0.0, True)


def test_loading_levels():
    assert loading_level(100, 98, 110) == pytest.approx(0.9091, abs=1e-4)
    assert loading_level(0, 0, 110) == 0.0


def test_initial_flow_sign_rule():
    assert initial_flow(-50, 52) == -52
    assert initial_flow(40, -40) == 40
    assert initial_flow(0, 3) == 3


def test_general_limit_matches_customized_for_equal_q():
    assert mw_limit(130, 25, -12) == mw_limit(130, 25, -12)


def test_uncongested_case_has_no_monitored_constraints(two_bus):
    loose = parse_case(PARALLEL.format(rate=500))
    rep = run_rtca(loose)
    assert rep.constraints == []
    assert rep.critical_contingencies == []
    assert rep.violations == []


def _critical_fixture():
    # size branch 2 so the outage of branch 1 loads it to exactly 105% of its rating
    probe = parse_case(PARALLEL.format(rate=500))
    post = solve_ac_power_flow(apply_outage(probe, Contingency("branch", 1)))
    rate = post.s_max(2) / 1.05
    return parse_case(PARALLEL.format(rate=repr(rate))), rate


def test_constructed_critical_contingency():
    case, rate = _critical_fixture()
    rep = run_rtca(case)
    assert rep.critical_contingencies == ["B1"]
    crit = rep.critical_constraints
    assert len(crit) == 1 and crit[0].branch == 2 and crit[0].scope == "B1"
    assert rep.violations_for("B1")[2] == pytest.approx(0.05 * rate, rel=1e-9)
    assert rep.ctg_flows["B1"][1] == 0.0


def test_base_violation_measured_on_rate_a():
    case = parse_case(PARALLEL.format(rate=40))
    rep = run_rtca(case)
    base = rep.violations_for(None)
    sol = rep.base
    assert base[2] == pytest.approx(sol.s_max(2) - 40)
    assert any(c.scope is None and c.branch == 2 and c.critical for c in rep.constraints)


def test_generator_contingency_matches_oracle():
    case = parse_case(PARALLEL.format(rate=500).replace("1 1 0 300 120", "1 1 0 300 80")
                      .replace("2 3 0 300 0 ", "2 3 0 300 40 "))
    rep = run_rtca(case, [Contingency("generator", 2)])
    oracle = solve_ac_power_flow(apply_outage(case, Contingency("generator", 2)))
    got = rep.solutions["G2"]
    for k in got.p_from:
        assert got.p_from[k] == pytest.approx(oracle.p_from[k], abs=1e-6)


def test_islanding_contingency_skipped(case14):
    rep = run_rtca(case14, [Contingency("branch", 14), Contingency("branch", 1)])
    assert rep.status["B14"] == "islanding"
    assert "B14" not in rep.solutions
    assert any("B14" in d for d in rep.diagnostics)


def test_critical_constraints_are_active(case14):
    rep = run_rtca(case14)
    for c in rep.critical_constraints:
        assert abs(c.initial_flow) > c.mw_limit
        assert c.loading >= 1.0


def test_inclusive_threshold():
    case, _ = _critical_fixture()
    rep = run_rtca(case)
    ll = next(c.loading for c in rep.ctg_constraints if c.scope == "B1" and c.branch == 2)
    again = run_rtca(case, config=Config(pctc=ll))
    assert any(c.scope == "B1" and c.branch == 2 for c in again.ctg_constraints)


def test_derating_scales_rates():
    case, rate = _critical_fixture()
    rep = run_rtca(case, config=Config(derate=0.95))
    assert rep.rates[2] == (pytest.approx(rate * 0.95), pytest.approx(rate * 0.95))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 1.3), st.floats(0.0, 0.5))
def test_screening_monotone(pct, drop):
    case, _ = _critical_fixture()
    hi = run_rtca(case, config=Config(pct=pct, pctc=pct))
    lo = run_rtca(case, config=Config(pct=max(pct - drop, 0.01), pctc=max(pct - drop, 0.01)))
    assert {c.key for c in hi.constraints} <= {c.key for c in lo.constraints}


def _serialize(rep):
    w = _Writer()
    write_rtca(w, rep, "x")
    return w.text()


def test_report_deterministic(case14):
    assert _serialize(run_rtca(case14)) == _serialize(run_rtca(case14))


def test_thread_count_does_not_change_report(case14, monkeypatch):
    monkeypatch.setenv("EMS_CTS_THREADS", "1")
    one = _serialize(run_rtca(case14))
    monkeypatch.setenv("EMS_CTS_THREADS", "4")
    assert _serialize(run_rtca(case14)) == one


def test_interface_screening():
    text = PARALLEL.format(rate=500) + "[interface]\n1 100 +1,+2 B1=130\n"
    case = parse_case(text)
    rep = run_rtca(case, config=Config(pctc=0.9))
    base = [c for c in rep.base_constraints if c.interface == 1]
    assert base and base[0].initial_flow == pytest.approx(rep.base_flows[1] + rep.base_flows[2])
    assert base[0].critical
    ctg = [c for c in rep.ctg_constraints if c.interface == 1 and c.scope == "B1"]
    assert ctg[0].mw_limit == 130 and not ctg[0].critical
    assert ctg[0].loading == pytest.approx(120 / 130, rel=1e-6)
    assert not any(c.interface == 1 and c.scope == "B1" for c in run_rtca(case).ctg_constraints)
    assert math.isclose(ctg[0].initial_flow, rep.ctg_flows["B1"][2])
