"""Command-line entry point: single runs, replication studies and sample-size sweeps.

Usage::

    scbeam run CONFIG [--seed N] [--out DIR] [--study single|replication|sweep]
                      [--algo dc|scenario|both] [--workers N] [--set section.key=value ...]
    scbeam validate CONFIG

Emitted files (in the output directory):

``results.csv``
    One row per (run, algorithm); header :data:`RESULT_COLUMNS`. Contains no
    timing information, so equal configs and seeds give byte-identical files.
``timings.csv``
    Wall-clock seconds per row of ``results.csv``.
``traces/<run_id>.csv``
    Objective, kappa and SAA constraint value per DC iteration.
``summary.json``
    Keys :data:`SUMMARY_KEYS`; per algorithm the mean/min/max/std of the
    objective in dBm and of the satisfied probability.
``sweep.csv``
    Sweep studies only: one row per (algorithm, swept value).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .algorithms import scenario_approach, stochastic_dc
from .config import ExperimentConfig, validate_config
from .model import ConfigError, dbm_from_mw
from .uncertainty import rng_stream

log = logging.getLogger("scbeam")

STREAM_KEY = "rep"
RESULT_COLUMNS = ["run_id", "seed", "stream", "algorithm", "sweep_param", "sweep_value",
                  "objective_mw", "objective_dbm", "satisfied", "satisfied_ci_low",
                  "satisfied_ci_high", "kappa_final", "iterations", "status", "message"]
TRACE_COLUMNS = ["iteration", "objective_mw", "objective_dbm", "kappa", "saa_constraint",
                 "solver_iterations", "rel_gap", "status"]
SUMMARY_KEYS = ["study", "n_runs", "algorithms", "sweep", "settings"]
STAT_KEYS = ["n", "n_ok", "objective_dbm", "satisfied", "kappa_final"]
OK_STATUSES = ("converged", "max-iters", "optimal")


@dataclass(frozen=True)
class Task:
    run_id: str
    seed: int
    algorithm: str
    sweep_param: str = ""
    sweep_value: int | None = None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(x)
    return str(x)


def build_tasks(config: ExperimentConfig, algos) -> list[Task]:
    """Every (seed, algorithm[, swept value]) run of the study, in output order."""
    st = config.raw["study"]
    mode, base = st["mode"], st["base_seed"]
    R = 1 if mode == "single" else st["R"]
    tasks = []
    if mode == "sweep":
        param = st["sweep"]["param"]
        for value in st["sweep"]["values"]:
            for r in range(R):
                seed = base + r
                for algo in algos:
                    if (param == "M" and algo != "dc") or (param == "J" and algo != "scenario"):
                        continue
                    tasks.append(Task(f"{algo}_{param}{value}_s{seed}", seed, algo, param, value))
    else:
        for r in range(R):
            seed = base + r
            for algo in algos:
                tasks.append(Task(f"{algo}_s{seed}", seed, algo))
    return tasks


def execute(raw: dict, task: Task) -> tuple[dict, list[dict], float]:
    """Run one task; failures are returned in the row, never raised."""
    t0 = time.perf_counter()
    row = {c: None for c in RESULT_COLUMNS}
    row.update(run_id=task.run_id, seed=task.seed, stream=STREAM_KEY, algorithm=task.algorithm,
               sweep_param=task.sweep_param, sweep_value=task.sweep_value, message="")
    trace = []
    try:
        config = ExperimentConfig(raw)
        cfg, model = config.network_and_model()
        rng = rng_stream(task.seed, STREAM_KEY)
        if task.algorithm == "dc":
            over = {"M": task.sweep_value} if task.sweep_param == "M" else {}
            rep = stochastic_dc(model, cfg, config.dc_settings(**over), rng)
            row.update(status=rep.status, message=rep.message, kappa_final=rep.kappa,
                       iterations=rep.iterations, violation=rep.violation, hw=rep.violation_halfwidth,
                       power=rep.objective_mw if rep.v is not None else float("nan"))
            trace = [{c: r[c] for c in TRACE_COLUMNS} for r in rep.trace_rows()]
        else:
            over = {"J": task.sweep_value} if task.sweep_param == "J" else {}
            n_val = config.raw["validation"]["n_validate"]
            _, rep = scenario_approach(model, cfg, config.scenario_settings(**over), rng, n_validate=n_val)
            row.update(status=rep.status, iterations=rep.iterations, violation=rep.violation,
                       hw=rep.violation_halfwidth, power=rep.power)
    except Exception as err:  # recorded per run so sibling runs are unaffected
        row.update(status="error", message=f"{type(err).__name__}: {err}")
        return _finish(row), trace, time.perf_counter() - t0
    return _finish(row), trace, time.perf_counter() - t0


def _finish(row: dict) -> dict:
    power = row.pop("power", None)
    viol = row.pop("violation", None)
    hw = row.pop("hw", None)
    if power is not None and np.isfinite(power) and power > 0:
        row["objective_mw"] = float(power)
        row["objective_dbm"] = float(dbm_from_mw(power))
    if viol is not None and np.isfinite(viol):
        sat = 1.0 - float(viol)
        row["satisfied"] = sat
        row["satisfied_ci_low"] = max(0.0, sat - float(hw))
        row["satisfied_ci_high"] = min(1.0, sat + float(hw))
    return row


def _stats(rows: list[dict]) -> dict:
    ok = [r for r in rows if r["status"] in OK_STATUSES and r["objective_dbm"] is not None]

    def agg(key):
        vals = np.array([r[key] for r in ok if r[key] is not None], dtype=float)
        if not vals.size:
            return {"mean": None, "min": None, "max": None, "std": None}
        return {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max()),
                "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}

    return {"n": len(rows), "n_ok": len(ok), "objective_dbm": agg("objective_dbm"),
            "satisfied": agg("satisfied"), "kappa_final": agg("kappa_final")}


def summarize(rows: list[dict], study: str, settings: dict) -> dict:
    algos = sorted({r["algorithm"] for r in rows})
    sweep = []
    if study == "sweep":
        keys = sorted({(r["algorithm"], r["sweep_param"], r["sweep_value"]) for r in rows},
                      key=lambda k: (k[0], k[2]))
        for algo, param, value in keys:
            sel = [r for r in rows if (r["algorithm"], r["sweep_param"], r["sweep_value"]) == (algo, param, value)]
            sweep.append({"algorithm": algo, "param": param, "value": value, **_stats(sel)})
    return {"study": study, "n_runs": len(rows),
            "algorithms": {a: _stats([r for r in rows if r["algorithm"] == a]) for a in algos},
            "sweep": sweep, "settings": settings}


def write_outputs(out: Path, rows, traces, timings, summary):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in RESULT_COLUMNS])
    with open(out / "timings.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["run_id", "wall_clock_s"])
        for r, t in zip(rows, timings):
            w.writerow([r["run_id"], f"{t:.3f}"])
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for r, trace in zip(rows, traces):
        if not trace:
            continue
        with open(tdir / f"{r['run_id']}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for t in trace:
                w.writerow([_fmt(t[c]) for c in TRACE_COLUMNS])
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=False)
        f.write("\n")
    if summary["sweep"]:
        with open(out / "sweep.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["algorithm", "param", "value", "n", "n_ok", "objective_dbm_mean",
                        "objective_dbm_std", "satisfied_mean", "satisfied_std"])
            for s in summary["sweep"]:
                w.writerow([s["algorithm"], s["param"], s["value"], s["n"], s["n_ok"],
                            _fmt(s["objective_dbm"]["mean"]), _fmt(s["objective_dbm"]["std"]),
                            _fmt(s["satisfied"]["mean"]), _fmt(s["satisfied"]["std"])])


def apply_overrides(config: ExperimentConfig, items) -> ExperimentConfig:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, text = item.split("=", 1)
        keys = path.strip().split(".")
        node = config.raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {k} is not a section")
        node[keys[-1]] = yaml.safe_load(text)
    return config


def run_study(config: ExperimentConfig, out: Path, algos, workers: int = 1) -> dict:
    tasks = build_tasks(config, algos)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute, [config.raw] * len(tasks), tasks))
    else:
        results = [execute(config.raw, t) for t in tasks]
    rows = [r for r, _, _ in results]
    for r in rows:
        if r["status"] not in OK_STATUSES:
            log.warning("%s: %s %s", r["run_id"], r["status"], r["message"])
    settings = {k: config.raw[k] for k in ("network", "uncertainty", "dc", "scenario", "study", "validation")}
    summary = summarize(rows, config.raw["study"]["mode"], settings)
    write_outputs(out, rows, [t for _, t, _ in results], [w for _, _, w in results], summary)
    return summary


def _report(summary: dict):
    names = {"dc": "stochastic DC", "scenario": "scenario approach"}
    for algo, s in summary["algorithms"].items():
        ob, sat = s["objective_dbm"], s["satisfied"]
        if ob["mean"] is None:
            print(f"{names.get(algo, algo)}: no successful runs ({s['n']} attempted)")
            continue
        line = (f"{names.get(algo, algo)}: {s['n_ok']}/{s['n']} runs, average total transmit power "
                f"is {ob['mean']:.4f} dBm (min {ob['min']:.4f}, max {ob['max']:.4f})")
        if sat["mean"] is not None:
            line += (f", average probability constraint is {sat['mean']:.4f} "
                     f"(min {sat['min']:.4f}, max {sat['max']:.4f})")
        print(line)


def cmd_validate(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except (ConfigError, OSError) as err:
        print(err, file=sys.stderr)
        return 2
    problems = validate_config(config)
    for p in problems:
        print(f"{args.config}: {p}", file=sys.stderr)
    if not problems:
        print(f"{args.config}: ok")
    return 2 if problems else 0


def cmd_run(args) -> int:
    try:
        config = apply_overrides(ExperimentConfig.load(args.config), args.set)
    except (ConfigError, OSError) as err:
        print(err, file=sys.stderr)
        return 2
    st = config.raw["study"]
    if args.study:
        st["mode"] = args.study
    if args.seed is not None:
        st["base_seed"] = args.seed
    problems = validate_config(config)
    if problems:
        for p in problems:
            print(f"{args.config}: {p}", file=sys.stderr)
        return 2
    algos = ["dc", "scenario"] if args.algo == "both" else [args.algo]
    out = Path(args.out or config.raw["output"]["dir"])
    summary = run_study(config, out, algos, args.workers)
    _report(summary)
    print(f"results written to {out}")
    failed = sum(s["n"] - s["n_ok"] for s in summary["algorithms"].values())
    return 1 if failed else 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scbeam",
                                     description="Chance-constrained coordinated beamforming experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for solver detail)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the study described by a YAML config")
    run.add_argument("config", help="path to the YAML config")
    run.add_argument("--seed", type=int, default=None, help="base seed (overrides study.base_seed)")
    run.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    run.add_argument("--study", choices=["single", "replication", "sweep"], default=None,
                     help="study mode (overrides study.mode)")
    run.add_argument("--algo", choices=["dc", "scenario", "both"], default="both")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override one config entry; may be repeated")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
