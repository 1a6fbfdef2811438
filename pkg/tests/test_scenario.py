import math

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from uavirs.scenario import (ChannelParams, ScenarioError, dump_scenario, load_scenario, make_scenario,
                             rician_splits, scenario_from_dict, scenario_to_dict, to_linear_units)


def _ref_dict(ref):
    return scenario_to_dict(ref)


def test_reference_loads(ref):
    assert ref.K == 2
    assert ref.group_sizes == (3, 3)
    assert tuple(ref.irs_location) == (0.0, 250.0, 20.0)
    assert ref.subsurface_size == 20
    assert ref.M == ref.n_elements // 20 == 20
    assert ref.p_max == pytest.approx((0.1, 0.1))


@pytest.mark.parametrize("text,expected", [("-30 dB", 1e-3), ("-80 dBm", 1e-11), ("20 dBm", 0.1), (2.5, 2.5),
                                           ("10 dB", 10.0), ("7", 7.0)])
def test_unit_conversion(text, expected):
    assert to_linear_units(text) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("bad", ["ten dB", "5 dBW", True, "", "1e"])
def test_unit_conversion_rejects(bad):
    with pytest.raises(ScenarioError):
        to_linear_units(bad)


@given(st.floats(-100, 60))
def test_db_roundtrip(x):
    assert 10 * math.log10(to_linear_units(f"{x!r} dB")) == pytest.approx(x, abs=1e-9)
    assert 10 * math.log10(to_linear_units(f"{x!r} dBm")) + 30 == pytest.approx(x, abs=1e-9)


def test_height_order_rejected(ref):
    d = _ref_dict(ref)
    d["uav"]["z_min"], d["uav"]["z_max"] = 100.0, 60.0
    with pytest.raises(ScenarioError, match="z_min>z_max"):
        scenario_from_dict(d)


def test_subsurface_divisibility(ref):
    d = _ref_dict(ref)
    d["irs"]["n_elements"], d["irs"]["subsurface_size"] = 50, 20
    with pytest.raises(ScenarioError, match="N not divisible"):
        scenario_from_dict(d)


@pytest.mark.parametrize("path,value,match", [
    (("uav", "delta_min"), 0.0, "delta_min"),
    (("uav", "p_max"), -1.0, "p_max"),
    (("channel", "rho0"), 0.0, "rho0"),
    (("channel", "beta1"), 1.5, "beta1"),
])
def test_invalid_values(ref, path, value, match):
    d = _ref_dict(ref)
    d[path[0]][path[1]] = value
    with pytest.raises(ScenarioError, match=match):
        scenario_from_dict(d)


def test_missing_key_and_empty_group(ref):
    d = _ref_dict(ref)
    del d["irs"]
    with pytest.raises(ScenarioError, match="missing key irs"):
        scenario_from_dict(d)
    d = _ref_dict(ref)
    d["groups"][0]["users"] = []
    with pytest.raises(ScenarioError, match="empty"):
        scenario_from_dict(d)
    d = _ref_dict(ref)
    d["groups"][0]["users"][0] = [float("nan"), 0.0, 0.0]
    with pytest.raises(ScenarioError, match="non-finite"):
        scenario_from_dict(d)


def test_yaml_roundtrip(ref, tmp_path):
    p = tmp_path / "s.yaml"
    dump_scenario(ref, p)
    again = load_scenario(p)
    assert again == ref
    assert yaml.safe_load(p.read_text())["irs"]["subsurface_size"] == 20


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("irs: [unclosed")
    with pytest.raises(ScenarioError, match="parse error"):
        load_scenario(bad)


def test_rician_split_values(ref):
    sp = rician_splits(ref.channel, ref)
    assert sp.kappa1 == pytest.approx(10 / 11 * 1e-3, rel=1e-12)
    assert sp.kappa1 == pytest.approx(9.0909e-4, rel=1e-4)
    w = ref.users(0)[0]
    d = np.linalg.norm(ref.u - w)
    assert sp.tau[0][0] == pytest.approx(400 * 1e-3 * (1e-3 - sp.kappa2) / d ** 2.2, rel=1e-12)


def test_rician_pure_los_limit(ref):
    ch = ChannelParams(rho0=1e-3, sigma2=1e-11, k1=math.inf, k2=math.inf)
    sp = rician_splits(ch, ref.with_(channel=ch))
    assert sp.kappa2 == 1e-3
    assert all(t == 0.0 for row in sp.tau for t in row)


def test_with_helpers(ref):
    assert ref.with_m(40).M == 40
    assert ref.with_pmax(1.0).p_max == (1.0, 1.0)
    assert ref.with_(irs_enabled=False).M == 0


def test_make_scenario_defaults():
    sc = make_scenario([[(0, 0)], [(10, 20, 0)]], m=2)
    assert sc.K == 2 and sc.M == 2
    assert sc.users(0)[0].tolist() == [0.0, 0.0, 0.0]
