"""Experiment driver: parameter sweeps, metrics, CSV emission, coverage.

run() executes every (sweep value, seed, algorithm) combination of an
ExperimentConfig against one scenario file and writes three things to the
output directory: metrics.csv (deterministic bytes under fixed seeds),
timings.csv (wall-clock sidecar, excluded from the deterministic surface),
and one solution archive per run.  The table helpers condense record lists
into the standard plots' data: Pareto points, rate CDF, coverage curve.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithms import AlgoConfig, ftw, fwua, greedy, ptw
from .channel import build_channel_tensor, cinr_map
from .model import (AssociationSolution, cc_count, check_feasibility,
                    rate_matrix_split)
from .scenario import Scenario, load_scenario

LN2 = math.log(2.0)

SWEEP_AXES = ("rho", "bs_power", "sat_power", "rate_req", "pred_window",
              "bs_count")
ALGORITHMS = ("ftw", "ptw", "greedy", "fwua")


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


@dataclass
class ExperimentConfig:
    scenario: str                      # scenario YAML path
    algorithms: list
    sweep_axis: str = "rho"
    sweep_values: list = field(default_factory=lambda: [0.7])
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"
    workers: int = 1                   # sweep points run concurrently if > 1
    save_solutions: bool = True
    algo: AlgoConfig = field(default_factory=AlgoConfig)

    def validate(self) -> None:
        if not self.scenario:
            raise ConfigError("scenario: path required")
        if not self.algorithms:
            raise ConfigError("algorithms: at least one required")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(
                    f"algorithms: unknown '{a}' (choose from {ALGORITHMS})")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(
                f"sweep_axis: unknown '{self.sweep_axis}' "
                f"(choose from {SWEEP_AXES})")
        if not self.sweep_values:
            raise ConfigError("sweep_values: must be non-empty")
        if not self.seeds:
            raise ConfigError("seeds: at least one required")
        for s in self.seeds:
            if int(s) != s:
                raise ConfigError(f"seeds: '{s}' is not an integer")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")


def experiment_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown field")
    algo = d.get("algo")
    if isinstance(algo, dict):
        from .solver import SolverConfig
        d = dict(d)
        algo = dict(algo)
        if isinstance(algo.get("solver"), dict):
            algo["solver"] = SolverConfig(**algo["solver"])
        d["algo"] = AlgoConfig(**algo)
    cfg = ExperimentConfig(**d)
    cfg.validate()
    return cfg


def load_experiment(path: str) -> ExperimentConfig:
    import yaml
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ConfigError("experiment file must hold a mapping")
    return experiment_from_dict(d)


@dataclass
class MetricsRecord:
    """One (sweep value, seed, algorithm) outcome.

    Rates are spectral efficiencies in bps/Hz; rate_samples holds the K*T
    per-UE per-slot values that feed the rate CDF.  runtime lives in the
    timings sidecar, not in metrics.csv, so reruns produce identical bytes;
    it is excluded from equality so the round-trip law holds.
    """

    axis: str
    value: float
    seed: int
    algorithm: str
    avg_sr: float
    avg_cc: float
    sr_bs: float
    sr_sat: float
    served_bs: float
    served_sat: float
    mape: Optional[float]
    feasibility: str
    solution_file: str
    rate_samples: list
    runtime: float = field(default=0.0, compare=False)


_CSV_FIELDS = ["axis", "value", "seed", "algorithm", "avg_sr", "avg_cc",
               "sr_bs", "sr_sat", "served_bs", "served_sat", "mape",
               "feasibility", "solution_file", "rate_samples"]


def emit_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_FIELDS)
        for r in records:
            w.writerow([
                r.axis, repr(float(r.value)), r.seed, r.algorithm,
                repr(r.avg_sr), repr(r.avg_cc), repr(r.sr_bs), repr(r.sr_sat),
                repr(r.served_bs), repr(r.served_sat),
                "" if r.mape is None else repr(r.mape),
                r.feasibility, r.solution_file,
                ";".join(repr(v) for v in r.rate_samples),
            ])


def parse_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            out.append(MetricsRecord(
                axis=row["axis"], value=float(row["value"]),
                seed=int(row["seed"]), algorithm=row["algorithm"],
                avg_sr=float(row["avg_sr"]), avg_cc=float(row["avg_cc"]),
                sr_bs=float(row["sr_bs"]), sr_sat=float(row["sr_sat"]),
                served_bs=float(row["served_bs"]),
                served_sat=float(row["served_sat"]),
                mape=float(row["mape"]) if row["mape"] else None,
                feasibility=row["feasibility"],
                solution_file=row["solution_file"],
                rate_samples=[float(v) for v in row["rate_samples"].split(";")
                              if v],
            ))
    return out


def save_solution(sol: AssociationSolution, path, **meta) -> None:
    np.savez_compressed(path, alpha=sol.alpha, beta=sol.beta,
                        p_bs=sol.p_bs, p_sat=sol.p_sat,
                        **{k: np.asarray(v) for k, v in meta.items()})


def load_solution(path) -> tuple[AssociationSolution, dict]:
    with np.load(path, allow_pickle=False) as z:
        sol = AssociationSolution(alpha=z["alpha"], beta=z["beta"],
                                  p_bs=z["p_bs"], p_sat=z["p_sat"])
        meta = {k: z[k][()] for k in z.files
                if k not in ("alpha", "beta", "p_bs", "p_sat")}
    return sol, meta


# =====================================================================
# Sweep axis application
# =====================================================================

def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    """Scenario with one swept parameter replaced.

    Power axes take dBm (BS) / dBW (LSat) and apply to every node of the
    system; rate_req is bps/Hz for every UE; pred_window is in slots;
    bs_count keeps the first `value` base stations.
    """
    r = scenario.radio
    if axis == "rho":
        return replace(scenario, radio=replace(r, rho=float(value)))
    if axis == "bs_power":
        w = 10.0 ** ((float(value) - 30.0) / 10.0)
        return replace(scenario, radio=replace(
            r, bs_budget_w=np.full_like(r.bs_budget_w, w)))
    if axis == "sat_power":
        w = 10.0 ** (float(value) / 10.0)
        return replace(scenario, radio=replace(
            r, sat_budget_w=np.full_like(r.sat_budget_w, w)))
    if axis == "rate_req":
        return replace(scenario, radio=replace(
            r, rate_min_bps=np.full_like(r.rate_min_bps, float(value))))
    if axis == "pred_window":
        return replace(scenario,
                       grid=replace(scenario.grid, pred_window=int(value)))
    if axis == "bs_count":
        c = int(value)
        if not 1 <= c <= scenario.nodes.n_bs:
            raise ConfigError(
                f"sweep_values: bs_count {c} outside 1..{scenario.nodes.n_bs}")
        nodes = replace(scenario.nodes,
                        bs_positions=scenario.nodes.bs_positions[:c],
                        bs_capacity=scenario.nodes.bs_capacity[:c])
        ant = replace(scenario.antennas,
                      bs_bearings=scenario.antennas.bs_bearings[:c],
                      bs_downtilts=scenario.antennas.bs_downtilts[:c])
        radio = replace(r, bs_budget_w=r.bs_budget_w[:c],
                        psi_bs=r.psi_bs[:c])
        return replace(scenario, nodes=nodes, antennas=ant, radio=radio,
                       bs_load_means=scenario.bs_load_means[:c])
    raise ConfigError(f"sweep_axis: unknown '{axis}'")


# =====================================================================
# Single run -> MetricsRecord
# =====================================================================

def _run_algorithm(scenario, channel, load, algo: str, cfg: AlgoConfig):
    if algo == "ftw":
        sol, trace = ftw(scenario, channel, cfg=cfg, load=load)
        return sol, [trace]
    if algo == "ptw":
        sol, traces = ptw(scenario, cfg=cfg, channel=channel, load=load)
        return sol, traces
    if algo == "fwua":
        sol, trace = fwua(scenario, channel, cfg=cfg, load=load)
        return sol, [trace]
    if algo == "greedy":
        return greedy(channel, scenario, load), []
    raise ConfigError(f"algorithms: unknown '{algo}'")


def run_point(scenario: Scenario, axis: str, value, seed: int, algo: str,
              cfg: Optional[AlgoConfig] = None,
              channel=None, out_dir=None) -> MetricsRecord:
    """Execute one algorithm at one sweep point and roll up the metrics.

    channel, when given, must match the post-axis scenario geometry
    (bs_count changes it; the power/rho/QoS axes do not).
    """
    cfg = cfg or AlgoConfig()
    sc = apply_axis(scenario, axis, value)
    if channel is None:
        channel = build_channel_tensor(sc)
    load = sc.draw_load(int(seed))

    started = time.perf_counter()
    sol, traces = _run_algorithm(sc, channel, load, algo, cfg)
    runtime = time.perf_counter() - started

    r_b, r_s = rate_matrix_split(sol, channel, load, sc.radio, unit="bits")
    rates = r_b + r_s                                      # (K, T)
    t = rates.shape[1]
    mapes = [tr.pred_mape for tr in traces if tr.pred_mape is not None]
    report = check_feasibility(sol, sc, channel, load, sc.radio)

    sol_file = ""
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        name = f"{algo}_{axis}_{_fmt_value(value)}_s{int(seed)}.npz"
        save_solution(sol, Path(out_dir) / name, axis=axis, value=value,
                      seed=int(seed), algorithm=algo, scenario=sc.name)
        sol_file = name

    return MetricsRecord(
        axis=axis, value=float(value), seed=int(seed), algorithm=algo,
        avg_sr=float(rates.sum() / t),
        avg_cc=cc_count(sol) / t,
        sr_bs=float(r_b.sum() / t),
        sr_sat=float(r_s.sum() / t),
        served_bs=float(sol.alpha.sum(axis=(0, 1)).mean()),
        served_sat=float(sol.beta.sum(axis=(0, 1)).mean()),
        mape=float(np.mean(mapes)) if mapes else None,
        feasibility=report.summary(),
        solution_file=sol_file,
        rate_samples=[float(v) for v in rates.ravel()],
        runtime=runtime,
    )


def _fmt_value(value) -> str:
    s = repr(float(value))
    return s.replace(".", "p").replace("-", "m")


def _point_job(args):
    path, axis, value, seed, algo, cfg, out = args
    scenario = load_scenario(path)
    return run_point(scenario, axis, value, seed, algo, cfg, out_dir=out)


def run(config: ExperimentConfig) -> list:
    """Run the whole sweep; returns the records written to metrics.csv."""
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol_dir = out / "solutions" if config.save_solutions else None
    if sol_dir is not None:
        sol_dir.mkdir(exist_ok=True)

    tasks = [(config.scenario, config.sweep_axis, v, s, a, config.algo,
              sol_dir)
             for v in config.sweep_values
             for s in config.seeds
             for a in config.algorithms]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_point_job, tasks))
    else:
        scenario = load_scenario(config.scenario)
        channel_cache = {}
        records = []
        for _, axis, v, s, a, cfg, sd in tasks:
            # geometry only depends on the axis value for bs_count
            key = float(v) if axis == "bs_count" else None
            if key not in channel_cache:
                channel_cache[key] = build_channel_tensor(
                    apply_axis(scenario, axis, v))
            records.append(run_point(scenario, axis, v, s, a, cfg,
                                     channel=channel_cache[key], out_dir=sd))

    emit_csv(records, out / "metrics.csv")
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "seed", "algorithm", "runtime_s"])
        for r in records:
            w.writerow([r.axis, repr(float(r.value)), r.seed, r.algorithm,
                        f"{r.runtime:.3f}"])
    return records


# =====================================================================
# Plot-data tables
# =====================================================================

def pareto_points(records: list) -> list:
    """(algorithm, value, mean SR, mean CC) rows averaged over seeds."""
    if not records:
        raise ValueError("no records")
    groups = {}
    for r in records:
        groups.setdefault((r.algorithm, r.value), []).append(r)
    rows = []
    for (algo, value), rs in groups.items():
        rows.append((algo, value,
                     float(np.mean([r.avg_sr for r in rs])),
                     float(np.mean([r.avg_cc for r in rs]))))
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def rate_cdf(records: list) -> list:
    """(rate, fraction of samples <= rate) rows over all pooled samples."""
    samples = np.sort(np.concatenate(
        [np.asarray(r.rate_samples, dtype=float) for r in records]))
    if samples.size == 0:
        raise ValueError("no rate samples")
    values, counts = np.unique(samples, return_counts=True)
    frac = np.cumsum(counts) / samples.size
    return list(zip(values.tolist(), frac.tolist()))


def coverage_curve(scenario: Scenario, bs_counts, sat_count: int = 0,
                   t: int = 0, grid_n: int = 25, threshold_db: float = 3.0,
                   extent: Optional[float] = None) -> list:
    """(bs count, covered fraction) rows at fixed interference conditions.

    Receive points form a grid_n x grid_n mesh at UE height spanning the
    deployment extent; a point is covered when its best-server CINR clears
    threshold_db.  The interferer set stays the full deployment for every
    row, so coverage is non-decreasing in the candidate count.
    """
    nodes = scenario.nodes
    if extent is None:
        pts = [np.abs(nodes.bs_positions[:, :2]).max(initial=0.0)]
        for box in scenario.scene.boxes:
            pts.append(float(np.abs(box.center).max() + box.size.max()))
        extent = max(max(pts), 50.0) * 1.2
    xs = np.linspace(-extent, extent, grid_n)
    ue_h = 1.5
    if scenario.routes:
        ue_h = float(scenario.routes[0].waypoints[0][2])
    gx, gy = np.meshgrid(xs, xs)
    rx = np.column_stack([gx.ravel(), gy.ravel(),
                          np.full(gx.size, ue_h)])

    sat_pos = np.array([scenario.sat_position_enu(m, t)
                        for m in range(nodes.n_sat)]).reshape(-1, 3)
    sigma2 = float(scenario.radio.noise_w[0])
    rows = []
    for c in bs_counts:
        c = int(c)
        if not 0 <= c <= nodes.n_bs:
            raise ValueError(f"bs count {c} outside 0..{nodes.n_bs}")
        _, frac = cinr_map(
            scenario.scene, rx, scenario.antennas,
            nodes.bs_positions, sat_pos,
            scenario.radio.bs_budget_w, scenario.radio.sat_budget_w,
            sigma2, threshold_db=threshold_db,
            candidate_bs=list(range(c)),
            candidate_sats=list(range(min(sat_count, nodes.n_sat))))
        rows.append((c, float(frac)))
    rows.sort(key=lambda row: row[0])
    return rows
