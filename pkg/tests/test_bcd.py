import json
import math

import numpy as np
import pytest

from uavirs.bcd import (DecisionState, RunRecord, bcd_run, is_feasible, make_setting, multistart, random_init,
                        run_benchmark)
from uavirs.scenario import make_scenario
from uavirs.sca import PenaltySchedule


def closed_form(sc):
    ch = sc.channel
    return math.log2(1 + ch.rho0 * sc.z_min ** -ch.beta1 * sc.p_max[0] / ch.sigma2)


def test_random_init_recipe(ref):
    st = random_init(7, make_setting(ref))
    assert np.all(st.Q[:, 2] == 80.0)
    assert all(np.allclose(p, 0.1 / 3) for p in st.P)
    for k, g in enumerate(ref.groups):
        lo, hi = g.sampling_box()
        assert np.all(st.Q[k, :2] >= lo) and np.all(st.Q[k, :2] <= hi)
    again = random_init(7, make_setting(ref))
    assert np.array_equal(st.Q, again.Q) and np.array_equal(st.theta, again.theta)
    oma = random_init(7, make_setting(ref, "oma"))
    assert [p.tolist() for p in oma.P] == [[0.1], [0.1]]


def test_state_roundtrip(ref):
    st = random_init(1, make_setting(ref))
    back = DecisionState.from_dict(st.to_dict())
    assert np.array_equal(back.Q, st.Q) and np.array_equal(back.theta, st.theta)
    assert all(np.array_equal(a, b) for a, b in zip(back.A, st.A))


def test_single_user_closed_form():
    sc = make_scenario([[(120.0, 80.0)]], m=1, irs_enabled=False)
    setting = make_setting(sc, variant="no_irs")
    rec = bcd_run(random_init(0, setting), setting)
    assert rec.gamma == pytest.approx(closed_form(sc), abs=1e-3)
    assert closed_form(sc) == pytest.approx(10.26, abs=5e-3)
    best = run_benchmark("if", "no_irs", sc, seeds=[0])
    eta = sc.channel.rho0 * np.linalg.norm(best.final.Q[0] - sc.users(0)[0]) ** -sc.channel.beta1
    assert best.gamma == pytest.approx(math.log2(1 + eta * sc.p_max[0] / sc.channel.sigma2), rel=1e-12)


def test_oma_single_group_prefactor():
    sc = make_scenario([[(120.0, 80.0), (140.0, 90.0)]], m=1, irs_enabled=False)
    rec = run_benchmark("oma", "no_irs", sc, seeds=[0])
    setting = make_setting(sc, "oma", "no_irs")
    eta = setting.gains(rec.final.Q, np.zeros(0))[0]
    p = rec.final.P[0][0]
    expect = sum(math.log2(1 + e * p / sc.channel.sigma2) / 2 for e in eta)
    assert rec.gamma == pytest.approx(expect, rel=1e-12)


def test_reference_run_properties(ref):
    setting = make_setting(ref)
    rec = bcd_run(random_init(7, setting), setting, seed=7)
    assert rec.status == "ok"
    g = np.array(rec.gammas)
    assert np.all(np.diff(g) >= -1e-6)
    assert rec.iterations <= 30
    assert is_feasible(rec.final, setting)
    again = bcd_run(rec.final, setting, seed=7)
    assert again.iterations == 1
    assert again.gamma - rec.gamma <= PenaltySchedule().obj_tol * max(1.0, rec.gamma)


def test_record_roundtrip(ref):
    setting = make_setting(ref.with_m(2))
    rec = bcd_run(random_init(0, setting), setting, seed=0)
    back = RunRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert json.dumps(back.to_dict(), sort_keys=True) == json.dumps(rec.to_dict(), sort_keys=True)
    assert "wall_time" not in rec.to_dict() and "wall_time" in rec.to_dict(timing=True)


def test_multistart(ref):
    setting = make_setting(ref.with_m(2))
    best, runs = multistart(setting, seeds=[3])
    assert best is runs[0]
    best, runs = multistart(setting, seeds=[0, 1, 1])
    assert all(best.gamma >= r.gamma for r in runs)
    assert json.dumps(runs[1].to_dict(), sort_keys=True) == json.dumps(runs[2].to_dict(), sort_keys=True)
    with pytest.raises(ValueError):
        multistart(setting, seeds=[])


def test_variants(ref):
    with pytest.raises(ValueError):
        make_setting(ref, variant="nope")
    with pytest.raises(ValueError):
        make_setting(ref.with_(irs_enabled=False), variant="with_irs")
    setting = make_setting(ref, variant="fixed_location")
    rec = bcd_run(random_init(0, setting), setting, seed=0)
    assert np.allclose(rec.final.Q[:, :2], setting.anchors)


def test_feasibility_checks(ref):
    setting = make_setting(ref)
    st = random_init(0, setting)
    assert is_feasible(st, setting)
    bad = st.copy()
    bad.Q[0, 2] = 10.0
    assert not is_feasible(bad, setting)
    bad = st.copy()
    bad.P[0] = bad.P[0] * 4
    assert not is_feasible(bad, setting)
    bad = st.copy()
    bad.A[0] = np.full((3, 3), 0.5)
    assert not is_feasible(bad, setting)
