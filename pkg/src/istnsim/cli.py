"""Command-line interface: simulate, sweep, cinr-map, trace-gen, validate.

Every failure path prints one JSON object to stderr with a machine-readable
category (config_error, solver_error, infeasible, io_error) and exits
nonzero; success prints a JSON summary to stdout and exits 0.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import asdict

import click
import numpy as np

from .algorithms import InitInfeasibleError, SolverFailureError
from .channel import build_channel_tensor, cinr_map, save_channel_trace
from .harness import (ConfigError, apply_axis, coverage_curve,
                      load_experiment, load_solution, run, run_point)
from .model import check_feasibility
from .scenario import load_scenario

_EXIT = {"config_error": 3, "solver_error": 4, "infeasible": 5,
         "io_error": 6}


def _fail(category: str, message: str):
    click.echo(json.dumps({"category": category, "message": message}),
               err=True)
    sys.exit(_EXIT[category])


def _load_scenario(path):
    try:
        return load_scenario(path)
    except FileNotFoundError as e:
        _fail("io_error", str(e))
    except (ValueError, KeyError, TypeError) as e:
        _fail("config_error", f"{path}: {e}")


@click.group()
@click.version_option(package_name="istnsim")
def main():
    """Downlink satellite-terrestrial association and power optimizer."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="Scenario YAML.")
@click.option("--algo", default="ftw",
              type=click.Choice(["ftw", "ptw", "greedy", "fwua"]))
@click.option("--seed", default=0, type=int,
              help="Background-load draw seed.")
@click.option("--rho", default=None, type=float,
              help="Override the scenario's sum-rate weight.")
@click.option("--out", default=None, type=click.Path(),
              help="Directory for the solution archive.")
def simulate(config_path, algo, seed, rho, out):
    """Run one algorithm on one scenario and print the metrics summary."""
    scenario = _load_scenario(config_path)
    if rho is not None:
        try:
            scenario = apply_axis(scenario, "rho", rho)
        except ValueError as e:
            _fail("config_error", str(e))
    try:
        rec = run_point(scenario, "rho", scenario.radio.rho, seed, algo,
                        out_dir=out)
    except InitInfeasibleError as e:
        _fail("infeasible", str(e))
    except SolverFailureError as e:
        _fail("solver_error", str(e))
    summary = asdict(rec)
    summary.pop("rate_samples")
    click.echo(json.dumps(summary))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Experiment YAML (scenario, algorithms, sweep, seeds).")
@click.option("--out", default=None, type=click.Path(),
              help="Override the experiment's output directory.")
def sweep(config_path, out):
    """Run a parameter sweep and write metrics.csv / timings.csv."""
    try:
        cfg = load_experiment(config_path)
    except FileNotFoundError as e:
        _fail("io_error", str(e))
    except (ConfigError, TypeError) as e:
        _fail("config_error", str(e))
    if out is not None:
        cfg.output_dir = out
    try:
        records = run(cfg)
    except FileNotFoundError as e:
        _fail("io_error", str(e))
    except (ConfigError, ValueError) as e:
        _fail("config_error", str(e))
    except InitInfeasibleError as e:
        _fail("infeasible", str(e))
    except SolverFailureError as e:
        _fail("solver_error", str(e))
    click.echo(json.dumps({"rows": len(records),
                           "output_dir": cfg.output_dir}))


@main.command(name="cinr-map")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="CSV of x, y, best-server CINR (dB).")
@click.option("--grid", default=41, type=int, help="Grid points per side.")
@click.option("--threshold", default=3.0, type=float,
              help="Coverage threshold in dB.")
@click.option("--slot", default=0, type=int,
              help="Time slot fixing the satellite geometry.")
@click.option("--extent", default=None, type=float,
              help="Half-width of the map in meters (default: auto).")
def cinr_map_cmd(config_path, out, grid, threshold, slot, extent):
    """Best-server CINR map over a ground grid at UE height."""
    scenario = _load_scenario(config_path)
    nodes = scenario.nodes
    if extent is None:
        pts = [float(np.abs(nodes.bs_positions[:, :2]).max(initial=0.0))]
        for box in scenario.scene.boxes:
            pts.append(float(np.abs(box.center).max() + box.size.max()))
        extent = max(max(pts), 50.0) * 1.2
    xs = np.linspace(-extent, extent, grid)
    ue_h = float(scenario.routes[0].waypoints[0][2]) if scenario.routes else 1.5
    gx, gy = np.meshgrid(xs, xs)
    rx = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, ue_h)])
    sat_pos = np.array([scenario.sat_position_enu(m, slot)
                        for m in range(nodes.n_sat)]).reshape(-1, 3)
    cinr_db, frac = cinr_map(
        scenario.scene, rx, scenario.antennas, nodes.bs_positions, sat_pos,
        scenario.radio.bs_budget_w, scenario.radio.sat_budget_w,
        float(scenario.radio.noise_w[0]), threshold_db=threshold)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "cinr_db"])
        for p, v in zip(rx, cinr_db):
            w.writerow([repr(float(p[0])), repr(float(p[1])),
                        repr(float(v))])
    click.echo(json.dumps({"points": int(rx.shape[0]),
                           "covered_fraction": float(frac),
                           "threshold_db": threshold, "out": out}))


@main.command(name="trace-gen")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="Channel trace output path.")
def trace_gen(config_path, out):
    """Build the scenario's channel tensor and save it as a text trace."""
    scenario = _load_scenario(config_path)
    tensor = build_channel_tensor(scenario)
    try:
        save_channel_trace(tensor, out)
    except OSError as e:
        _fail("io_error", str(e))
    n, m, k, t = tensor.dims
    click.echo(json.dumps({"out": out, "n_bs": n, "n_sat": m,
                           "n_ue": k, "n_ts": t}))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--solution", "solution_path", required=True,
              type=click.Path(), help="Solution archive from a run.")
@click.option("--seed", default=None, type=int,
              help="Background-load seed (default: recorded in the file).")
def validate(config_path, solution_path, seed):
    """Feasibility-check a stored solution against its scenario."""
    scenario = _load_scenario(config_path)
    try:
        sol, meta = load_solution(solution_path)
    except FileNotFoundError as e:
        _fail("io_error", str(e))
    except (ValueError, KeyError) as e:
        _fail("config_error", f"{solution_path}: {e}")
    n, m, k, t = sol.dims
    if (n, k) != (scenario.nodes.n_bs, scenario.nodes.ue_count) \
            or m != scenario.nodes.n_sat or t != scenario.grid.n_ts:
        _fail("config_error",
              f"solution dims (N={n}, M={m}, K={k}, T={t}) do not match "
              f"the scenario")
    if seed is None:
        seed = int(meta.get("seed", scenario.seed))
    channel = build_channel_tensor(scenario)
    load = scenario.draw_load(seed)
    report = check_feasibility(sol, scenario, channel, load, scenario.radio)
    verdict = {
        "feasible": bool(report.feasible),
        "seed": seed,
        "constraints": {name: {"ok": bool(ok), "violation": float(v)}
                        for name, (ok, v) in report.entries.items()},
    }
    click.echo(json.dumps(verdict))
    if not report.feasible:
        sys.exit(_EXIT["infeasible"])


if __name__ == "__main__":
    main()
