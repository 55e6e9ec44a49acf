"""
Command-line front end.

    healfem run CONFIG [--scenario KIND] [--out DIR] [--dt DAYS] [--duration DAYS] [--snapshot-times T1,T2]
    healfem sweep CONFIG --grid KEY=V1,V2 [--grid ...] [--jobs N] [--out DIR]

``--scenario`` supplies the scenario kind when the file does not set it, so
an empty file runs a built-in scenario with its default parameters.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O failure.
"""

import argparse
import csv
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, RunConfig, parse_config, render_effective
from .fem.march import SolverFailure
from .healing import StateInvariantError
from .io import ensure_dir, snapshot_name, write_timeseries, write_vtk
from .kinematics import DomainError
from .scenarios import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("healfem")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _cli_overrides(args):
    out = {}
    if args.dt is not None:
        out["solver.dt"] = args.dt
    if args.duration is not None:
        out["solver.duration"] = args.duration
    if args.snapshot_times is not None:
        out["output.snapshot_times"] = _float_list(args.snapshot_times)
    if args.out is not None:
        out["output.dir"] = args.out
    return out


def load_config(path, overrides=None, scenario=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides, scenario)


def _time_to(records, key, level):
    """First output time after the minimum of ``key`` at which it reaches ``level``; nan if never."""
    vals = [r[key] for r in records]
    k = min(range(len(vals)), key=vals.__getitem__)
    for r in records[k:]:
        if r[key] >= level:
            return r["time"]
    return float("nan")


def _attach_log(path):
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def execute(cfg: RunConfig):
    """Run one configuration into ``cfg.out_dir``; returns (exit code, summary dict)."""
    try:
        out = ensure_dir(cfg.out_dir)
        with open(os.path.join(out, "effective_config.toml"), "w", encoding="utf-8") as fh:
            fh.write(render_effective(cfg))
        handler = _attach_log(os.path.join(out, "run.log"))
    except OSError as exc:
        log.error("cannot prepare output directory %s: %s", cfg.out_dir, exc)
        return EXIT_IO, {}

    def snapshot(sim):
        write_vtk(os.path.join(out, snapshot_name(sim.t)), sim)

    try:
        log.info("scenario %s, dt=%g, duration=%g", cfg.spec.kind, cfg.controls.dt, cfg.controls.duration)
        res = run_scenario(cfg.spec, cfg.controls, snapshot_times=cfg.snapshot_times, on_snapshot=snapshot)
        write_timeseries(os.path.join(out, "timeseries.csv"), res.records)
        sim = res.simulation
        log.info("finished: %d increments, clamp activations %d, largest local halving level %d",
                 sim.increment, sim.clamps, sim.max_halvings)
        last = res.records[-1]
        summary = {"H_final": last["H_min"], "H_mean_final": last["H_mean"],
                   "t_H_0.9": _time_to(res.records, "H_min", 0.9)}
        for key in ("sigma_x", "u_y", "uA_y", "R_normalized"):
            if key in last:
                summary[f"{key}_final"] = last[key]
        return EXIT_OK, summary
    except SolverFailure as exc:
        log.error("%s; residual norms %s", exc, ", ".join(f"{n:.3e}" for n in exc.norms))
        return EXIT_SOLVER, {}
    except (DomainError, StateInvariantError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER, {}
    except ValueError as exc:
        log.error("configuration error during run: %s", exc)
        return EXIT_CONFIG, {}
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO, {}
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


def cmd_run(args):
    try:
        cfg = load_config(args.config, _cli_overrides(args), args.scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = execute(cfg)
    if code != EXIT_OK:
        print(f"run failed (exit {code}); see {os.path.join(cfg.out_dir, 'run.log')}", file=sys.stderr)
    return code


def parse_grid(items):
    """['a.b=1,2', 'c.d=3'] -> (['a.b', 'c.d'], [(1.0, 3.0), (2.0, 3.0)])."""
    if not items:
        raise ConfigError("empty parameter grid: pass at least one --grid key=v1,v2")
    keys, values = [], []
    for item in items:
        key, sep, vals = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"grid entry {item!r} must look like key=v1,v2")
        nums = _float_list(vals)
        if not nums:
            raise ConfigError(f"grid entry {key!r} has no values")
        keys.append(key.strip())
        values.append(nums)
    return keys, list(itertools.product(*values))


def _point_dir(base, keys, point):
    return os.path.join(base, "_".join(f"{k.split('.')[-1]}={v:g}" for k, v in zip(keys, point)))


def _sweep_worker(job):
    cfg = job
    return execute(cfg)


def cmd_sweep(args):
    try:
        keys, points = parse_grid(args.grid)
        base = load_config(args.config, _cli_overrides(args), args.scenario)
        cfgs = []
        for p in points:
            over = dict(_cli_overrides(args))
            over.update(dict(zip(keys, p)))
            over["output.dir"] = _point_dir(base.out_dir, keys, p)
            cfgs.append(load_config(args.config, over, args.scenario))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = max(1, int(args.jobs))
    if jobs == 1:
        results = [execute(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, cfgs))
    try:
        ensure_dir(base.out_dir)
        names = sorted({k for _, s in results for k in s})
        with open(os.path.join(base.out_dir, "summary.csv"), "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys + ["exit_code", "directory"] + names)
            for p, c, (code, s) in zip(points, cfgs, results):
                w.writerow([format(v, ".17g") for v in p] + [code, os.path.basename(c.out_dir)]
                           + [format(s[n], ".17g") if n in s else "" for n in names])
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    worst = max(code for code, _ in results)
    return worst


def build_parser():
    p = argparse.ArgumentParser(prog="healfem", description="Finite-strain damage and healing simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML configuration file")
        sp.add_argument("--scenario", help="scenario kind when the file does not set scenario.kind")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--dt", type=float, help="time step in days")
        sp.add_argument("--duration", type=float, help="simulated time in days")
        sp.add_argument("--snapshot-times", help="comma-separated snapshot times in days")

    run = sub.add_parser("run", help="run one configuration")
    common(run)
    run.set_defaults(func=cmd_run)
    sweep = sub.add_parser("sweep", help="run a parameter grid")
    common(sweep)
    sweep.add_argument("--grid", action="append", default=[], help="key=v1,v2,... (repeatable)")
    sweep.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    sweep.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    for h in logging.getLogger().handlers:
        h.setLevel(logging.WARNING)
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
