"""Command-line front end.

    degwave {solve,hardy,carleman-scan,observability,hum,steer} CONFIG [-o DIR]
    degwave validate CONFIG

Exit codes: 0 success, 2 invalid scenario, 3 HUM did not converge,
4 numerical instability.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import carleman, control, spaces, wavesolver
from .geometry import Grid
from .scenario import ConfigError, Scenario, load_scenario, validate

log = logging.getLogger("degwave")

SUBCOMMANDS = ("solve", "hardy", "carleman-scan", "observability", "hum", "steer")
EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_INSTABILITY = 0, 2, 3, 4
LOG_NAME = "run.log"
MANIFEST = "MANIFEST.txt"


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_summary(path, data: dict):
    def clean(v):
        if isinstance(v, (np.floating, float)):
            return float(v)
        if isinstance(v, (np.integer,)):
            return int(v)
        return v
    with open(path, "w") as fh:
        json.dump({k: clean(v) for k, v in data.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_spec(grid: Grid) -> dict:
    return {"dim": grid.dim, "bounds": [list(b) for b in grid.domain.bounds],
            "alpha": grid.alpha, "cells_per_axis": list(grid.cells)}


def write_manifest(out_dir: str) -> str:
    """``path<TAB>sha256`` for every artifact except the log and the manifest."""
    lines = []
    for root, _, files in os.walk(out_dir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), out_dir)
            if rel in (LOG_NAME, MANIFEST):
                continue
            with open(os.path.join(root, name), "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            lines.append(f"{rel}\t{digest}")
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w") as fh:
        fh.write("\n".join(sorted(lines)) + "\n")
    return path


# -- subcommands ---------------------------------------------------------------

def cmd_solve(sc: Scenario, out: str):
    traj = wavesolver.solve_forward(sc.grid, sc.initial, sc.T, sc.dt, stride=sc.stride)
    wavesolver.write_trajectory(traj, os.path.join(out, "trajectory.csv"))
    traj.energy.to_csv(os.path.join(out, "energy.csv"))
    trace = wavesolver.boundary_trace(traj)
    header = ["t"] + [f"dnu_axis{ax}_{'plus' if s > 0 else 'minus'}" for ax, s in trace.sides]
    # sides of a 2D box are reduced to their L2 norm along the side
    cols = [np.sqrt(np.sum(v.reshape(len(trace.times), -1) ** 2, axis=1) * sc.grid.h.max())
            if v.ndim > 1 else v for v in trace.values]
    _write_rows(os.path.join(out, "boundary_trace.csv"), header,
                [[t] + [c[k] for c in cols] for k, t in enumerate(trace.times)])
    _write_summary(os.path.join(out, "summary.json"), {
        "T": traj.t_final, "dt": traj.dt, "steps": traj.steps, "stride": traj.stride,
        "energy_relative_drift": traj.energy.relative_drift(),
        "boundary_trace_l2": trace.l2_norm, "grid": _grid_spec(sc.grid),
    })


def cmd_hardy(sc: Scenario, out: str):
    if sc.grid.dim < 2:
        raise ConfigError("domain.dim", "the Hardy inequality needs N >= 2")
    if not 0.0 < sc.domain.alpha < 2.0:
        raise ConfigError("domain.alpha", "the Hardy inequality needs alpha in (0, 2)")
    rows = []
    for k, u in enumerate(spaces.hardy_suite(sc.grid)):
        t = spaces.hardy_terms(sc.grid, u)
        rows.append([k, t.ratio, t.weighted_l2, t.h1_norm, t.excluded_mass_bound])
    _write_rows(os.path.join(out, "hardy.csv"),
                ["field", "ratio", "weighted_l2", "h1_norm", "excluded_mass_bound"], rows)
    _write_summary(os.path.join(out, "summary.json"), {
        "prefactor": sc.grid.dim - 2 + sc.domain.alpha, "max_ratio": max(r[1] for r in rows),
        "fields": len(rows), "grid": _grid_spec(sc.grid),
    })


def cmd_carleman_scan(sc: Scenario, out: str):
    rng = np.random.default_rng(sc.seed)
    ratios = []
    trend = True
    for run in range(sc.carleman_runs):
        data = control.band_limited_data(sc.grid, rng)
        traj = control.adjoint_solve(sc.grid, data, sc.T, sc.dt)
        rows = carleman.carleman_scan(traj, sc.omega, sc.carleman, sc.s_list, sc.gamma_list, T=sc.T)
        carleman.write_scan_csv(rows, os.path.join(out, f"carleman_scan_run{run}.csv"))
        ratios += [r.ratio for r in rows]
        if rows:
            trend &= carleman.trend_nonincreasing(rows)
    _write_summary(os.path.join(out, "summary.json"), {
        "runs": sc.carleman_runs, "s": sc.s_list, "gamma": sc.gamma_list,
        "beta": sc.carleman.beta, "t0": sc.carleman.t0, "T": sc.T,
        "C_hat": max(ratios) if ratios else float("nan"), "trend_nonincreasing": bool(trend),
        "grid": _grid_spec(sc.grid),
    })


def cmd_observability(sc: Scenario, out: str):
    rep = control.observability_sample(sc.grid, sc.omega, sc.T, sc.dt, sc.samples, sc.seed)
    tiny = 1e-10
    flags = rep.observed <= sc.threshold * tiny * rep.initial_energy
    _write_rows(os.path.join(out, "observability.csv"),
                ["sample", "initial_energy", "observed", "ratio", "flagged"],
                [[k, e, o, r, int(f)] for k, (e, o, r, f)
                 in enumerate(zip(rep.initial_energy, rep.observed, rep.ratios, flags))])
    _write_summary(os.path.join(out, "summary.json"), {
        "samples": rep.samples, "T": rep.T_used, "min_ratio": rep.min_ratio,
        "max_ratio": rep.max_ratio, "unique_continuation_flags": int(flags.sum()),
        "grid": _grid_spec(sc.grid),
    })


def _write_hum(sc: Scenario, out: str, sol: control.HUMSolution, problem: control.HUMProblem):
    traj = wavesolver.SpaceTimeField(
        grid=sc.grid, snapshots=sol.control, times=sol.times, dt=sol.times[1] - sol.times[0],
        steps=len(sol.times) - 1, stride=1, v_initial=sc.grid.zeros(), v_final=sc.grid.zeros(),
        energy=None)
    wavesolver.write_trajectory(traj, os.path.join(out, "control.csv"))
    _write_rows(os.path.join(out, "residuals.csv"), ["iteration", "relative_residual"],
                [[k, r] for k, r in enumerate(sol.residual_history)])
    _write_summary(os.path.join(out, "summary.json"), {
        "iterations": sol.iterations, "final_state_error": sol.final_state_error,
        "converged": sol.converged, "T": problem.T, "dt": traj.dt, "tol": problem.tol,
        "grid": _grid_spec(sc.grid),
    })


def _problem(sc: Scenario) -> control.HUMProblem:
    return control.HUMProblem(sc.grid, sc.initial, sc.target, sc.omega, sc.T, sc.dt,
                              tol=sc.tol, max_iter=sc.max_iter)


def cmd_hum(sc: Scenario, out: str):
    problem = _problem(sc)
    try:
        sol = control.hum_solve(problem)
    except control.NonConvergenceError as exc:
        if exc.solution is not None:
            _write_hum(sc, out, exc.solution, problem)
        raise
    _write_hum(sc, out, sol, problem)


def cmd_steer(sc: Scenario, out: str):
    if not (np.any(sc.target.u) or np.any(sc.target.v)):
        log.info("zero target: steer reduces to null control")
    problem = _problem(sc)
    try:
        sol = control.steer_general(problem)
    except control.NonConvergenceError as exc:
        if exc.solution is not None:
            _write_hum(sc, out, exc.solution, problem)
        raise
    _write_hum(sc, out, sol, problem)


COMMANDS = {
    "solve": cmd_solve, "hardy": cmd_hardy, "carleman-scan": cmd_carleman_scan,
    "observability": cmd_observability, "hum": cmd_hum, "steer": cmd_steer,
}
CONTROL_COMMANDS = {"carleman-scan", "observability", "hum", "steer"}


def _report(problems):
    for key, msg in problems:
        print(f"invalid {key}: {msg}", file=sys.stderr)


def run(subcommand: str, config_path: str, output_dir: str | None = None) -> int:
    if subcommand not in SUBCOMMANDS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_INVALID
    try:
        sc = load_scenario(config_path, output_dir)
        problems = validate(sc, control_checks=subcommand in CONTROL_COMMANDS)
    except ConfigError as exc:
        _report([(exc.key, exc.message)])
        return EXIT_INVALID
    if problems:
        _report(problems)
        return EXIT_INVALID

    out = sc.output_dir
    os.makedirs(out, exist_ok=True)
    handler = logging.FileHandler(os.path.join(out, LOG_NAME), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("degwave")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        log.info("%s %s -> %s", subcommand, config_path, out)
        COMMANDS[subcommand](sc, out)
        code = EXIT_OK
    except ConfigError as exc:
        _report([(exc.key, exc.message)])
        code = EXIT_INVALID
    except control.NonConvergenceError as exc:
        print(f"HUM did not converge: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGENCE
    except wavesolver.InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        code = EXIT_INSTABILITY
    finally:
        root.removeHandler(handler)
        handler.close()
    write_manifest(out)
    return code


def run_validate(config_path: str) -> int:
    try:
        sc = load_scenario(config_path)
        problems = validate(sc, control_checks=True)
    except ConfigError as exc:
        problems = [(exc.key, exc.message)]
    if problems:
        _report(problems)
        return EXIT_INVALID
    print(f"{config_path}: all checks passed (T = {sc.T:.6g}, dt = {sc.dt:.6g}, "
          f"beta = {sc.carleman.beta:.6g})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="degwave", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="scenario file or preset name (benchmark-1d, benchmark-2d, classical, steer-1d)")
        p.add_argument("-o", "--output-dir", default=None)
    p = sub.add_parser("validate")
    p.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "validate":
        return run_validate(args.config)
    return run(args.command, args.config, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
