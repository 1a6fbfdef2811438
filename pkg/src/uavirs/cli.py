"""Command-line front end: validate, solve, sweep, oracle and figdata.

Exit codes: 0 ok, 1 user error (bad flags, missing or invalid files), 2
internal error (failed runs, failed oracle checks).  Set ``UAVIRS_LOG`` to a
logging level name (e.g. ``INFO``) for per-iteration progress.

CSV schemas
-----------
summary*.csv          file, seed, scheme, variant, M, p_max_dbm, status, sum_rate, iterations
trace*.csv            seed, bcd_iteration, block, iteration, objective, xi, penalty,
                      binary_violation, rank_ratio, surrogate, status, accepted
sweep_M*.csv          M, scheme, variant, sum_rate, seed_best, sum_rate_mean, n_ok
sweep_p_max*.csv      p_max_dbm, scheme, variant, sum_rate, seed_best, sum_rate_mean, n_ok
convergence.csv       case, M, p_max_dbm, seed, iteration, sum_rate
placement.csv         scheme, kind, group, index, x, y, z
variety_ratio.csv     scheme, group, user, uav, served, zeta
sum_rate_vs_M.csv     same columns as sweep_M.csv
sum_rate_vs_pmax.csv  same columns as sweep_p_max.csv

``sum_rate`` is the multistart result (best final sum rate over the seeds);
``sum_rate_mean`` averages the final sum rates of the successful seeds.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .bcd import VARIANTS, RunRecord, bcd_run, make_setting, random_init
from .channel import expected_gain, flat_users, variety_ratios
from .rates import SCHEMES
from .scenario import Scenario, ScenarioError, dbm, load_scenario
from .sca.schedule import PenaltySchedule

log = logging.getLogger("uavirs")

SUMMARY_COLUMNS = ("file", "seed", "scheme", "variant", "M", "p_max_dbm", "status", "sum_rate", "iterations")
TRACE_COLUMNS = ("seed", "bcd_iteration", "block", "iteration", "objective", "xi", "penalty",
                 "binary_violation", "rank_ratio", "surrogate", "status", "accepted")
AXES = {"M": "M", "p_max": "p_max_dbm"}


class UsageError(Exception):
    pass


# -- sweeps --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str                 # "M" or "p_max" (values in dBm)
    values: tuple
    schemes: tuple = ("noma",)
    variants: tuple = ("with_irs",)
    seeds: tuple = tuple(range(10))

    def __post_init__(self):
        if self.axis not in AXES:
            raise UsageError(f"--axis must be one of {sorted(AXES)}")
        if not self.values:
            raise UsageError("--values must not be empty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise UsageError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
        for v in self.variants:
            if v not in VARIANTS:
                raise UsageError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if not self.seeds:
            raise UsageError("--seeds must name at least one seed")

    def point(self, scenario: Scenario, value) -> Scenario:
        if self.axis == "M":
            if int(value) != value or value < 1:
                raise UsageError(f"M values must be positive integers, got {value}")
            return scenario.with_m(int(value))
        return scenario.with_pmax(dbm(float(value)))


def p_max_dbm(p: float) -> float:
    return round(10.0 * math.log10(p) + 30.0, 6)


def _one_run(args):
    scenario, scheme, variant, seed, schedule = args
    setting = make_setting(scenario, scheme, variant)
    try:
        init = random_init(seed, setting)
    except ValueError as exc:
        sc = setting.scenario
        return RunRecord(seed, scheme, variant, None, status="failed", message=f"ValueError: {exc}",
                         m=sc.M, p_max=float(max(sc.p_max)), delta_min=sc.delta_min)
    return bcd_run(init, setting, schedule, seed=seed, variant=variant)


def run_many(jobs, workers: int = 1) -> list[RunRecord]:
    """Run ``(scenario, scheme, variant, seed, schedule)`` jobs; results keep job order."""
    jobs = list(jobs)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_one_run, jobs))
    return [_one_run(j) for j in jobs]


def best_of(records):
    ok = [r for r in records if not r.failed]
    if not ok:
        return None
    return max(ok, key=lambda r: (r.gamma, -r.seed))


def run_sweep(spec: SweepSpec, scenario: Scenario, schedule: PenaltySchedule | None = None,
              workers: int = 1):
    """Return ``(rows, records)`` with one summary row per (value, scheme, variant)."""
    schedule = schedule or PenaltySchedule()
    jobs, keys = [], []
    for value in spec.values:
        sc = spec.point(scenario, value)
        for scheme in spec.schemes:
            for variant in spec.variants:
                for seed in spec.seeds:
                    jobs.append((sc, scheme, variant, seed, schedule))
                    keys.append((value, scheme, variant))
    records = run_many(jobs, workers)
    rows = []
    col = AXES[spec.axis]
    for value in spec.values:
        for scheme in spec.schemes:
            for variant in spec.variants:
                group = [r for k, r in zip(keys, records) if k == (value, scheme, variant)]
                best = best_of(group)
                ok = [r.gamma for r in group if not r.failed]
                rows.append({col: value, "scheme": scheme, "variant": variant,
                             "sum_rate": best.gamma if best else float("nan"),
                             "seed_best": best.seed if best else -1,
                             "sum_rate_mean": float(np.mean(ok)) if ok else float("nan"),
                             "n_ok": len(ok)})
    return rows, records


# -- persistence -----------------------------------------------------------------------

def record_filename(rec: RunRecord, tag: str = "") -> str:
    p = f"{p_max_dbm(rec.p_max):g}" if rec.p_max > 0 else "na"
    name = f"run_{rec.scheme}_{rec.variant}_M{rec.m}_P{p}dBm_seed{rec.seed}"
    return name + (f"_{tag}" if tag else "") + ".json"


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, columns, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(row.get(c, "")) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def persist_records(records, out_dir, tag: str = "") -> list[Path]:
    """One JSON per run plus ``summary[_tag].csv``; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    paths, rows = [], []
    for rec in records:
        name = record_filename(rec, tag)
        path = out / name
        try:
            path.write_text(json.dumps(rec.to_dict(), sort_keys=True, indent=1) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        paths.append(path)
        rows.append({"file": name, "seed": rec.seed, "scheme": rec.scheme, "variant": rec.variant,
                     "M": rec.m, "p_max_dbm": p_max_dbm(rec.p_max) if rec.p_max > 0 else "",
                     "status": rec.status, "sum_rate": rec.gamma, "iterations": rec.iterations})
    paths.append(write_csv(out / (f"summary_{tag}.csv" if tag else "summary.csv"), SUMMARY_COLUMNS, rows))
    return paths


def load_record(path) -> RunRecord:
    return RunRecord.from_dict(json.loads(Path(path).read_text()))


def write_timings(records, path: Path) -> Path:
    """Wall times live apart from the deterministic outputs."""
    rows = [{"file": record_filename(r), "wall_time": r.wall_time} for r in records]
    return write_csv(path, ("file", "wall_time"), rows)


def trace_rows(rec: RunRecord):
    for it, tr in enumerate(rec.traces):
        for block, t in tr.items():
            for e in t.get("entries", []):
                yield {"seed": rec.seed, "bcd_iteration": it + 1, "block": block,
                       "iteration": e["iteration"], "objective": e["objective"], "xi": e.get("xi", 0.0),
                       "penalty": e["penalty"],
                       "binary_violation": e["binary_violation"], "rank_ratio": e["rank_ratio"],
                       "surrogate": e["surrogate"], "status": e["status"],
                       "accepted": t.get("accepted", "")}


# -- figure data ---------------------------------------------------------------------------

FIGURES = ("convergence", "placement", "variety_ratio", "sum_rate_vs_M", "sum_rate_vs_pmax")


def figure_data(scenario: Scenario, out_dir, seeds, which=FIGURES, m_values=(20, 40, 60),
                pmax_values=(10, 20, 30, 40), schedule=None, workers: int = 1) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schedule = schedule or PenaltySchedule()
    paths = []
    seeds = tuple(seeds)
    if "convergence" in which:
        rows = []
        for case, (m, p) in enumerate(((20, 20.0), (60, 20.0), (60, 30.0)), start=1):
            sc = scenario.with_m(m).with_pmax(dbm(p))
            best = best_of(run_many([(sc, "noma", "with_irs", s, schedule) for s in seeds], workers))
            if best is None:
                continue
            for it, g in enumerate(best.gammas):
                rows.append({"case": case, "M": m, "p_max_dbm": p, "seed": best.seed,
                             "iteration": it, "sum_rate": g})
        paths.append(write_csv(out / "convergence.csv", ("case", "M", "p_max_dbm", "seed", "iteration", "sum_rate"), rows))
    if "placement" in which or "variety_ratio" in which:
        sc = scenario.with_m(40).with_pmax(dbm(20.0))
        prow, zrow = [], []
        W = flat_users(sc)
        gk = np.concatenate([[k] * m for k, m in enumerate(sc.group_sizes)])
        idx = np.concatenate([np.arange(m) for m in sc.group_sizes])
        for scheme in SCHEMES:
            best = best_of(run_many([(sc, scheme, "with_irs", s, schedule) for s in seeds], workers))
            if best is None:
                continue
            Q = best.final.Q
            for k in range(sc.K):
                prow.append({"scheme": scheme, "kind": "uav", "group": k + 1, "index": k + 1,
                             "x": Q[k, 0], "y": Q[k, 1], "z": Q[k, 2]})
            for u, w in enumerate(W):
                prow.append({"scheme": scheme, "kind": "user", "group": int(gk[u]) + 1, "index": int(idx[u]) + 1,
                             "x": float(w[0]), "y": float(w[1]), "z": float(w[2])})
            z = variety_ratios(sc, Q, best.final.theta)
            for u in range(len(W)):
                for j in range(sc.K):
                    zrow.append({"scheme": scheme, "group": int(gk[u]) + 1, "user": int(idx[u]) + 1,
                                 "uav": j + 1, "served": int(j == gk[u]), "zeta": float(z[j, u])})
        if "placement" in which:
            paths.append(write_csv(out / "placement.csv", ("scheme", "kind", "group", "index", "x", "y", "z"), prow))
        if "variety_ratio" in which:
            paths.append(write_csv(out / "variety_ratio.csv", ("scheme", "group", "user", "uav", "served", "zeta"), zrow))
    sweep_cols = ("sum_rate", "seed_best", "sum_rate_mean", "n_ok")
    if "sum_rate_vs_M" in which:
        spec = SweepSpec("M", tuple(m_values), SCHEMES, VARIANTS, seeds)
        rows, _ = run_sweep(spec, scenario.with_pmax(dbm(20.0)), schedule, workers)
        paths.append(write_csv(out / "sum_rate_vs_M.csv", ("M", "scheme", "variant") + sweep_cols, rows))
    if "sum_rate_vs_pmax" in which:
        spec = SweepSpec("p_max", tuple(pmax_values), SCHEMES, ("with_irs", "no_irs"), seeds)
        rows, _ = run_sweep(spec, scenario.with_m(60), schedule, workers)
        paths.append(write_csv(out / "sum_rate_vs_pmax.csv", ("p_max_dbm", "scheme", "variant") + sweep_cols, rows))
    return paths


# -- oracle checks ---------------------------------------------------------------------------

def lemma1_geometries(scenario: Scenario, n_random: int = 5, seed: int = 0):
    """The reference geometry plus ``n_random`` random UAV/user/phase draws."""
    rng = np.random.default_rng(seed)
    setting = make_setting(scenario, "noma")
    init = random_init(7, setting)
    W = flat_users(scenario)
    near = int(np.argmin(np.linalg.norm(W - scenario.u, axis=1)))
    out = [("reference", init.Q[0], W[near], np.zeros(scenario.M))]
    for g in range(n_random):
        q = np.array([rng.uniform(0, 250), rng.uniform(0, 500), rng.uniform(scenario.z_min, scenario.z_max)])
        w = np.array([rng.uniform(0, 250), rng.uniform(0, 500), 0.0])
        out.append((f"random{g + 1}", q, w, rng.uniform(0, 2 * np.pi, scenario.M)))
    return out


def check_lemma1(scenario: Scenario, samples: int, seed: int = 0, tol: float = 0.01):
    from .oracle import mc_expected_gain
    rows = []
    for name, q, w, th in lemma1_geometries(scenario, seed=seed):
        eta = expected_gain(q, w, scenario.u, th, scenario.channel, scenario.subsurface_size)
        est = mc_expected_gain(q, w, scenario.u, th, scenario.channel, scenario.subsurface_size, samples, seed)
        rel = est.total.rel_error(eta)
        rows.append({"geometry": name, "eta": eta, "mc_mean": est.total.mean, "mc_se": est.total.se,
                     "rel_error": rel, "pass": rel <= tol})
    return rows


def check_theorem1(scenario: Scenario, samples: int, seed: int = 0, tol: float = 0.03, states=(0, 1, 2)):
    from .oracle import mc_expected_rate
    setting = make_setting(scenario, "noma")
    rows = []
    for s in states:
        st = random_init(s, setting)
        approx = setting.rates(st.Q, st.theta, st.P, st.A)
        est = mc_expected_rate(st, scenario, samples, seed)
        for u, (a, e) in enumerate(zip(approx, est)):
            rel = abs(a - e.mean) / e.mean if e.mean > 0 else abs(a)
            rows.append({"state": s, "user": u, "approx": float(a), "mc_mean": e.mean, "mc_se": e.se,
                         "rel_error": rel, "pass": rel <= tol})
    return rows


def check_bounds(samples: int = 100, seed: int = 0):
    from .oracle import PROBES, bound_probe, convexity_probe
    rows = []
    for pid in PROBES:
        r = bound_probe(pid, n_points=samples, seed=seed)
        rows.append({"probe": pid, "worst_margin": r.worst_margin, "expansion_margin": r.expansion_margin,
                     "violations": r.violations, "pass": r.passed})
    for fid in ("g1", "g2"):
        r = convexity_probe(fid, max(samples, 10_000), seed)
        rows.append({"probe": fid, "worst_margin": r.worst_margin, "expansion_margin": r.expansion_margin,
                     "violations": r.violations, "pass": r.passed})
    return rows


def check_grid(scenario: Scenario, resolution: float = 5.0):
    """Single-user, no-IRS instance: grid optimum versus the closed form."""
    from .oracle import grid_search_placement
    from .scenario import UserGroup
    w = scenario.groups[0].users[0]
    g = UserGroup(users=(w,), area=scenario.groups[0].area)
    sc = scenario.with_(groups=(g,), p_max=(scenario.p_max[0],), irs_enabled=False)
    res = grid_search_placement(sc, resolution=resolution, scheme="noma")
    ch = sc.channel
    closed = math.log2(1 + ch.rho0 * sc.z_min ** -ch.beta1 * sc.p_max[0] / ch.sigma2)
    return [{"grid_value": res.value, "closed_form": closed, "slack": res.slack,
             "x": res.Q[0, 0], "y": res.Q[0, 1], "z": res.Q[0, 2],
             "pass": abs(res.value - closed) <= res.slack + 1e-9}]


CHECKS = {"lemma1": 1_000_000, "theorem1": 100_000, "bounds": 100, "grid": 0}


# -- argument handling ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> tuple[int, ...]:
    """``10`` means seeds 0..9; ``3,5,8`` and ``2-6`` list them explicitly."""
    text = str(text).strip()
    try:
        if "," in text:
            return tuple(int(s) for s in text.split(",") if s.strip())
        if "-" in text[1:]:
            a, b = text.split("-", 1)
            return tuple(range(int(a), int(b) + 1))
        n = int(text)
    except ValueError:
        raise UsageError(f"bad --seeds value {text!r}") from None
    if n < 1:
        raise UsageError("--seeds count must be >= 1")
    return tuple(range(n))


def _list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _numbers(text: str) -> tuple:
    out = []
    for s in _list(text):
        try:
            v = float(s)
        except ValueError:
            raise UsageError(f"bad number {s!r} in --values") from None
        out.append(int(v) if v.is_integer() else v)
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavirs", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--scenario", default="ref", help="scenario file or 'ref' for the bundled reference")
        if out:
            sp.add_argument("--out", default="out", help="output directory")

    def tuning(sp):
        sp.add_argument("--schedule", default=None, help="YAML file overriding penalty/stopping defaults")

    sp = sub.add_parser("validate", help="check a scenario file")
    common(sp, out=False)

    sp = sub.add_parser("solve", help="one multistart run")
    common(sp)
    tuning(sp)
    sp.add_argument("--scheme", default="noma", choices=SCHEMES)
    sp.add_argument("--variant", default="with_irs", choices=VARIANTS)
    sp.add_argument("--seeds", default=None, help="count N (seeds 0..N-1) or an explicit list")
    sp.add_argument("--tag", default="")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("sweep", help="grid of multistart runs")
    common(sp)
    tuning(sp)
    sp.add_argument("--axis", required=True, choices=sorted(AXES))
    sp.add_argument("--values", required=True)
    sp.add_argument("--scheme", default="noma", help="comma separated schemes")
    sp.add_argument("--variant", default="with_irs", help="comma separated variants")
    sp.add_argument("--seeds", default=None)
    sp.add_argument("--tag", default="")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("oracle", help="Monte Carlo, bound and grid checks")
    common(sp)
    sp.add_argument("--check", required=True, choices=sorted(CHECKS))
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("figdata", help="CSV data for the figure analogs")
    common(sp)
    tuning(sp)
    sp.add_argument("--seeds", default=None)
    sp.add_argument("--which", default=",".join(FIGURES))
    sp.add_argument("--m-values", default="20,40,60")
    sp.add_argument("--pmax-values", default="10,20,30,40")
    sp.add_argument("--workers", type=int, default=1)
    return p


def load_schedule(path) -> PenaltySchedule:
    """Penalty schedule from a YAML mapping of ``PenaltySchedule`` fields; None gives the defaults."""
    if path is None:
        return PenaltySchedule()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"schedule file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"schedule file {path} is not valid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"schedule file {path} must hold a mapping")
    try:
        return PenaltySchedule(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad schedule in {path}: {exc}") from None


def _seeds(args, scenario):
    return parse_seeds(args.seeds) if args.seeds is not None else tuple(range(scenario.multistart_count))


def run_command(argv=None) -> int:
    level = os.environ.get("UAVIRS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        scenario = load_scenario(args.scenario)
        if args.command == "validate":
            print(f"ok: K={scenario.K} groups={list(scenario.group_sizes)} M={scenario.M}")
            return 0
        out = Path(args.out)
        if args.command == "solve":
            seeds = _seeds(args, scenario)
            records = run_many([(scenario, args.scheme, args.variant, s, load_schedule(args.schedule)) for s in seeds],
                               args.workers)
            persist_records(records, out, args.tag)
            suffix = f"_{args.tag}" if args.tag else ""
            write_csv(out / f"trace{suffix}.csv", TRACE_COLUMNS, [r for rec in records for r in trace_rows(rec)])
            write_timings(records, out / f"timings{suffix}.csv")
            best = best_of(records)
            if best is None:
                print("error: all runs failed: " + "; ".join(r.message for r in records), file=sys.stderr)
                return 2
            print(f"best seed {best.seed}: sum rate {best.gamma:.6f} bps/Hz -> {out / record_filename(best, args.tag)}")
            return 0
        if args.command == "sweep":
            spec = SweepSpec(args.axis, _numbers(args.values), _list(args.scheme), _list(args.variant),
                             _seeds(args, scenario))
            rows, records = run_sweep(spec, scenario, load_schedule(args.schedule), workers=args.workers)
            tag = args.tag or f"{args.axis}"
            persist_records(records, out, tag)
            write_timings(records, out / f"timings_{tag}.csv")
            cols = (AXES[spec.axis], "scheme", "variant", "sum_rate", "seed_best", "sum_rate_mean", "n_ok")
            path = write_csv(out / f"sweep_{tag}.csv", cols, rows)
            print(f"wrote {path}")
            return 2 if any(r["n_ok"] == 0 for r in rows) else 0
        if args.command == "oracle":
            samples = args.samples if args.samples is not None else CHECKS[args.check]
            if args.check == "lemma1":
                rows = check_lemma1(scenario, samples, args.seed)
            elif args.check == "theorem1":
                rows = check_theorem1(scenario, samples, args.seed)
            elif args.check == "bounds":
                rows = check_bounds(samples, args.seed)
            else:
                rows = check_grid(scenario)
            out.mkdir(parents=True, exist_ok=True)
            report = {"check": args.check, "samples": samples, "seed": args.seed, "rows": rows,
                      "pass": all(r["pass"] for r in rows)}
            path = out / f"oracle_{args.check}.json"
            path.write_text(json.dumps(report, sort_keys=True, indent=1, default=float) + "\n")
            for r in rows:
                print(" ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
            print(f"{args.check}: {'PASS' if report['pass'] else 'FAIL'} -> {path}")
            return 0 if report["pass"] else 2
        if args.command == "figdata":
            which = _list(args.which)
            bad = [w for w in which if w not in FIGURES]
            if bad:
                raise UsageError(f"unknown figure(s) {bad}; expected some of {FIGURES}")
            paths = figure_data(scenario, out, _seeds(args, scenario), which, _numbers(args.m_values),
                                _numbers(args.pmax_values), schedule=load_schedule(args.schedule),
                                workers=args.workers)
            for p in paths:
                print(f"wrote {p}")
            return 0
        raise UsageError(f"unknown command {args.command}")
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface anything else as an internal error
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
