import csv
import json

import numpy as np
import pytest

from uavirs import cli
from uavirs.bcd import RunRecord, bcd_run, make_setting, random_init
from uavirs.scenario import dump_scenario, load_scenario


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    """Reference geometry with two sub-surfaces to keep CLI runs short."""
    path = tmp_path_factory.mktemp("sc") / "small.yaml"
    dump_scenario(load_scenario("ref").with_m(2), path)
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate(small, capsys):
    assert cli.run_command(["validate", "--scenario", small]) == 0
    assert "M=2" in capsys.readouterr().out
    assert cli.run_command(["validate", "--scenario", "/does/not/exist.yaml"]) == 1


def test_bad_flags(small, capsys):
    assert cli.run_command(["solve", "--bogus"]) == 1
    assert cli.run_command(["frobnicate"]) == 1
    assert cli.run_command(["solve", "--scenario", small, "--seeds", "x"]) == 1
    assert cli.run_command(["sweep", "--scenario", small, "--axis", "M", "--values", "2", "--scheme", "tdma"]) == 1
    assert "error:" in capsys.readouterr().err


def test_parse_seeds():
    assert cli.parse_seeds("3") == (0, 1, 2)
    assert cli.parse_seeds("4,9") == (4, 9)
    assert cli.parse_seeds("2-5") == (2, 3, 4, 5)
    with pytest.raises(cli.UsageError):
        cli.parse_seeds("0")


def test_solve_outputs(small, tmp_path):
    out = tmp_path / "o"
    assert cli.run_command(["solve", "--scenario", small, "--scheme", "noma", "--seeds", "2", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "summary.csv" in names and "trace.csv" in names and "timings.csv" in names
    runs = [n for n in names if n.startswith("run_")]
    assert runs == ["run_noma_with_irs_M2_P20dBm_seed0.json", "run_noma_with_irs_M2_P20dBm_seed1.json"]
    sc = load_scenario(small)
    for r in rows(out / "summary.csv"):
        rec = cli.load_record(out / r["file"])
        # every row is re-derivable from the stored state
        assert float(r["sum_rate"]) == make_setting(sc).sum_rate(rec.final)
    assert rows(out / "trace.csv")[0]["block"] == "placement"


def test_persist_roundtrip_and_tags(small, tmp_path):
    sc = load_scenario(small)
    setting = make_setting(sc)
    rec = bcd_run(random_init(0, setting), setting, seed=0)
    paths = cli.persist_records([rec], tmp_path, "a")
    cli.persist_records([rec], tmp_path, "b")
    back = cli.load_record(paths[0])
    # compare serialized forms: start entries carry NaN surrogates
    assert json.dumps(back.to_dict(), sort_keys=True) == json.dumps(rec.to_dict(), sort_keys=True)
    assert len(list(tmp_path.glob("run_*.json"))) == 2
    cli.persist_records([], tmp_path / "empty")
    text = (tmp_path / "empty" / "summary.csv").read_text()
    assert text == ",".join(cli.SUMMARY_COLUMNS) + "\n"


def test_persist_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        cli.persist_records([], blocker / "sub")


def test_failed_init_record(small):
    sc = load_scenario(small).with_(delta_min=1e4)
    rec = cli._one_run((sc, "noma", "with_irs", 0, None))
    assert rec.failed and rec.init is None
    assert json.loads(json.dumps(rec.to_dict()))["init"] is None
    assert cli.best_of([rec]) is None


def test_sweep_csv(small, tmp_path):
    out = tmp_path / "s"
    argv = ["sweep", "--scenario", small, "--axis", "p_max", "--values", "10,20",
            "--scheme", "noma,if", "--seeds", "2", "--out", str(out)]
    assert cli.run_command(argv) == 0
    table = rows(out / "sweep_p_max.csv")
    assert list(table[0]) == ["p_max_dbm", "scheme", "variant", "sum_rate", "seed_best", "sum_rate_mean", "n_ok"]
    assert [(r["p_max_dbm"], r["scheme"]) for r in table] == [("10", "noma"), ("10", "if"), ("20", "noma"), ("20", "if")]
    for r in table:
        assert float(r["sum_rate"]) >= float(r["sum_rate_mean"])


def test_sweep_spec_validation():
    with pytest.raises(cli.UsageError):
        cli.SweepSpec("N", (1,))
    with pytest.raises(cli.UsageError):
        cli.SweepSpec("M", ())
    with pytest.raises(cli.UsageError):
        cli.SweepSpec("M", (20,), variants=("nope",))


def test_oracle_commands(small, tmp_path):
    assert cli.run_command(["oracle", "--scenario", small, "--check", "bounds", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "oracle_bounds.json").read_text())
    assert rep["pass"] and len(rep["rows"]) == 15
    assert cli.run_command(["oracle", "--scenario", small, "--check", "grid", "--out", str(tmp_path)]) == 0
    assert cli.run_command(["oracle", "--scenario", small, "--check", "lemma1", "--samples", "20000",
                            "--out", str(tmp_path)]) in (0, 2)
    rep = json.loads((tmp_path / "oracle_lemma1.json").read_text())
    assert len(rep["rows"]) == 6


def test_figdata_and_determinism(small, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["figdata", "--scenario", small, "--seeds", "1", "--which", "variety_ratio",
                "--out", str(out)]
        assert cli.run_command(argv) == 0
        outs.append(out)
    for f in ("variety_ratio.csv",):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    zeta = rows(outs[0] / "variety_ratio.csv")
    assert {r["scheme"] for r in zeta} == {"noma", "oma", "if"}
    assert cli.run_command(["figdata", "--scenario", small, "--which", "bogus", "--out", str(tmp_path)]) == 1


def test_trace_rows_shape(small):
    sc = load_scenario(small)
    setting = make_setting(sc)
    rec = bcd_run(random_init(0, setting), setting, seed=0)
    tr = list(cli.trace_rows(rec))
    assert tr and set(tr[0]) == set(cli.TRACE_COLUMNS)
    assert isinstance(RunRecord.from_dict(rec.to_dict()).final.Q, np.ndarray)


def test_schedule_file(small, tmp_path):
    assert cli.load_schedule(None) == cli.PenaltySchedule()
    good = tmp_path / "sched.yaml"
    good.write_text("bcd_max: 1\nomega: 5.0\n")
    sched = cli.load_schedule(str(good))
    assert sched.bcd_max == 1 and sched.omega == 5.0 and sched.obj_tol == cli.PenaltySchedule().obj_tol
    for text in ("omega: 0.5\n", "nonsense_field: 1\n", "[1, 2]\n"):
        bad = tmp_path / "bad.yaml"
        bad.write_text(text)
        with pytest.raises(cli.UsageError):
            cli.load_schedule(str(bad))
    out = tmp_path / "o"
    assert cli.run_command(["solve", "--scenario", small, "--seeds", "1", "--schedule", str(good),
                            "--out", str(out)]) == 0
    rec = cli.load_record(out / "run_noma_with_irs_M2_P20dBm_seed0.json")
    assert rec.iterations == 1
    assert cli.run_command(["solve", "--scenario", small, "--schedule", str(tmp_path / "none.yaml")]) == 1
