"""End-to-end association/power algorithms: FTW, PTW, greedy, FWUA.

FTW solves the whole horizon as one smoothed problem: an initialization
pass drives the relaxed coverage/QoS penalties to zero, then the main loop
alternates subproblem construction and interior-point solves until the
objective settles, and the relaxed powers are thresholded back to binary
associations.  PTW cuts the horizon into independent sub-windows, runs the
same machinery per window on predicted channel gains (true gains for the
first window), and concatenates.  Greedy is the descending-gain matching
baseline with uniform powers; FWUA optimizes associations only, with the
power fixed at the uniform split.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import ChannelTensor, build_channel_tensor
from .model import (AssociationSolution, background_power_bs_all,
                    background_power_sat_all, check_feasibility)
from .scenario import BackgroundLoad, Scenario, route_position
from .sca import (FeasiblePoint, build_init_problem, build_subproblem,
                  extract_solution, point_from_solution, recover_binary)
from .solver import SolverConfig, solve


class InitInfeasibleError(RuntimeError):
    """Raised when the relaxed initialization cannot reach zero penalty."""

    def __init__(self, entries):
        self.entries = entries
        worst = ", ".join(f"{name}={val:.3g}" for name, val in entries[:6])
        super().__init__(
            f"initialization left {len(entries)} relaxed constraints "
            f"unsatisfied: {worst}")


class SolverFailureError(RuntimeError):
    pass


@dataclass
class AlgoConfig:
    tol: float = 1e-4               # relative objective change to stop
    max_iters: int = 50
    min_iters: int = 3
    init_max_iters: int = 25
    init_tol: float = 1e-7          # penalty considered zero
    allow_partial: bool = False     # proceed on nonzero init penalty
    objective_mode: str = "sum"     # 'sum' | 'maxmin'
    # centering looser than the standalone default: outer re-anchoring
    # swamps the last digits long before they matter
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(
        t0=100.0, newton_tol=1e-6))
    verbose: bool = False


@dataclass
class SCARunTrace:
    objectives: list = field(default_factory=list)
    points: list = field(default_factory=list)
    init_penalties: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    newton_total: int = 0
    wall_time: float = 0.0
    repair_events: int = 0
    window: Optional[tuple] = None
    pred_mape: Optional[float] = None
    pred_overrun: bool = False
    feasibility: object = None


@dataclass
class PredictionState:
    """Observed route kinematics plus per-sub-window predictions."""

    v: np.ndarray                   # (K, T) actual per-slot speeds
    d: np.ndarray                   # (K, T) actual route arc distances
    v_hat: dict = field(default_factory=dict)
    d_hat: dict = field(default_factory=dict)
    overrun: dict = field(default_factory=dict)

    @classmethod
    def observe(cls, scenario: Scenario) -> "PredictionState":
        K = scenario.nodes.ue_count
        T = scenario.grid.n_ts
        v = np.array([[scenario.ue_velocity(k, t) for t in range(T)]
                      for k in range(K)])
        d = np.array([[scenario.ue_distance(k, t) for t in range(T)]
                      for k in range(K)])
        return cls(v=v, d=d)


def predict_channel(history: PredictionState, kappa: int,
                    scenario: Scenario, scene=None) -> ChannelTensor:
    """Channel gains for sub-window kappa from extrapolated UE positions.

    kappa is the 1-based sub-window number and must be >= 2: the speed
    estimate is the mean actual speed over sub-window kappa-1, and distances
    advance cumulatively from the true distance at the window's first slot
    (the j-th slot gets d_boundary + j*T_S*v_hat).  Satellite positions are
    deterministic and never predicted.  Predicted distances past the route
    end clamp to the endpoint and set the overrun flag.
    """
    windows = scenario.grid.pred_windows()
    if kappa < 2:
        raise ValueError("prediction needs a previous sub-window (kappa >= 2)")
    if kappa > len(windows):
        raise ValueError(f"sub-window {kappa} out of range")
    s, e = windows[kappa - 1]
    p0, p1 = windows[kappa - 2]
    K = scenario.nodes.ue_count
    ts = scenario.grid.ts_duration

    v_hat = history.v[:, p0:p1].mean(axis=1)
    width = e - s
    j = np.arange(width)
    d_hat = history.d[:, s][:, None] + j[None, :] * ts * v_hat[:, None]

    over = np.zeros(K, dtype=bool)
    pos = np.zeros((K, width, 3))
    for k in range(K):
        route = scenario.routes[k]
        end = route.total_length
        over[k] = bool((d_hat[k] > end + 1e-9).any())
        for ji in range(width):
            pos[k, ji] = route_position(route, min(d_hat[k, ji], end))

    history.v_hat[kappa] = v_hat
    history.d_hat[kappa] = d_hat
    history.overrun[kappa] = over
    return build_channel_tensor(scenario, scene=scene, ue_positions=pos,
                                slots=range(s, e))


def mape(predicted: ChannelTensor, actual: ChannelTensor) -> float:
    """Mean absolute percentage error over nonzero actual gain entries."""
    p = np.concatenate([predicted.h.ravel(), predicted.g.ravel()])
    a = np.concatenate([actual.h.ravel(), actual.g.ravel()])
    mask = a > 0
    if not mask.any():
        raise ValueError("no nonzero actual gains to compare against")
    return float((np.abs(p[mask] - a[mask]) / a[mask]).mean())


def _slice_load(load: BackgroundLoad, s: int, e: int) -> BackgroundLoad:
    return BackgroundLoad(bs_load=load.bs_load[:, s:e],
                          sat_load=load.sat_load[:, s:e])


def _warm_init_point(channel, load, params, window=None) -> FeasiblePoint:
    """Greedy-association anchor: capacity-feasible powers on served links
    with field-exact interference logs.  Cuts the zero-power crawl of the
    initialization loop to a couple of iterations."""
    t0, t1 = (0, channel.h.shape[2]) if window is None else window
    ch = _window_channel(channel, t0, t1)
    ld = _slice_load(load, t0, t1)
    alpha, beta, p_bs, p_sat = _greedy_assign(ch, ld, params)
    pbar_b = background_power_bs_all(ld, params)
    pbar_s = background_power_sat_all(ld, params)
    xi = np.einsum("mt,mkt->kt",
                   ld.sat_load * pbar_s + (beta * p_sat).sum(axis=1), ch.g)
    phi = np.einsum("nt,nkt->kt",
                    ld.bs_load * pbar_b + (alpha * p_bs).sum(axis=1), ch.h)
    noise = params.noise_w[:, None]
    return FeasiblePoint(p_bs=p_bs, p_sat=p_sat,
                         mu_bs=np.log(xi + noise),
                         mu_sat=np.log(phi + noise))


def _sca_solve_window(channel, load, params, grid, smoothing, cfg,
                      window=None, mode="power") -> tuple:
    """Init-to-convergence SCA run on one window; returns (solution, trace)."""
    trace = SCARunTrace(window=window)
    started = time.perf_counter()

    point = _warm_init_point(channel, load, params, window=window)
    penalty_prev = None
    spec = None
    for _ in range(cfg.init_max_iters):
        spec = build_init_problem(channel, load, params, grid, window=window,
                                  smoothing=smoothing, mode=mode, point=point)
        res = solve(spec, cfg.solver)
        trace.newton_total += res.newton_iterations
        if res.status == "infeasible":
            raise SolverFailureError(
                f"initialization subproblem reported infeasible "
                f"(violation {res.max_violation:.3g})")
        sol = extract_solution(spec, res.x)
        penalty = float(sol["tau"].sum() + sol["chi"].sum())
        trace.init_penalties.append(penalty)
        point = point_from_solution(spec, res.x)
        if cfg.verbose:
            print(f"    init penalty {penalty:.3e}")
        if penalty <= cfg.init_tol:
            break
        if penalty_prev is not None and \
                abs(penalty_prev - penalty) <= 1e-6 * max(1.0, penalty_prev):
            break
        penalty_prev = penalty
    if trace.init_penalties[-1] > cfg.init_tol and not cfg.allow_partial:
        entries = sorted(
            [(f"C5[k={k},t={t}]", v) for (k, t), v
             in np.ndenumerate(sol["tau"]) if v > cfg.init_tol]
            + [(f"C6[k={k},q={q}]", v) for (k, q), v
               in np.ndenumerate(sol["chi"]) if v > cfg.init_tol],
            key=lambda kv: -kv[1])
        raise InitInfeasibleError(entries)

    obj_prev = None
    for it in range(cfg.max_iters):
        spec = build_subproblem(point, channel, load, params, grid,
                                window=window, smoothing=smoothing, mode=mode,
                                objective_mode=cfg.objective_mode)
        res = solve(spec, cfg.solver)
        trace.newton_total += res.newton_iterations
        if res.status == "infeasible":
            raise SolverFailureError(
                f"subproblem at iteration {it} reported infeasible "
                f"(violation {res.max_violation:.3g}); trace objectives "
                f"{trace.objectives}")
        point = point_from_solution(spec, res.x)
        trace.objectives.append(res.objective)
        trace.points.append(point)
        trace.iterations = it + 1
        if cfg.verbose:
            print(f"    iter {it}: objective {res.objective:.6f}")
        if obj_prev is not None and it + 1 >= cfg.min_iters and \
                abs(res.objective - obj_prev) < cfg.tol * max(1.0, abs(obj_prev)):
            trace.converged = True
            break
        obj_prev = res.objective

    sol = extract_solution(spec, res.x)
    trace.wall_time = time.perf_counter() - started
    return sol, trace


def _repair_capacity(alpha, beta, p_bs, p_sat, load, params) -> int:
    """Drop lowest-power assignments that exceed the hard caps after
    thresholding.  Returns the number of links zeroed."""
    N, K, T = alpha.shape
    M = beta.shape[0]
    events = 0
    for t in range(T):
        for k in range(K):
            for arr, parr in ((alpha, p_bs), (beta, p_sat)):
                served = np.nonzero(arr[:, k, t])[0]
                if served.size > 1:
                    keep = served[np.argmax(parr[served, k, t])]
                    for i in served:
                        if i != keep:
                            arr[i, k, t] = 0
                            parr[i, k, t] = 0.0
                            events += 1
        for n in range(N):
            cap = max(int(params.psi_bs[n] - load.bs_load[n, t]), 0)
            served = np.nonzero(alpha[n, :, t])[0]
            if served.size > cap:
                order = served[np.argsort(p_bs[n, served, t])]
                for k in order[:served.size - cap]:
                    alpha[n, k, t] = 0
                    p_bs[n, k, t] = 0.0
                    events += 1
        for m in range(M):
            cap = max(int(params.psi_sat[m] - load.sat_load[m, t]), 0)
            served = np.nonzero(beta[m, :, t])[0]
            if served.size > cap:
                order = served[np.argsort(p_sat[m, served, t])]
                for k in order[:served.size - cap]:
                    beta[m, k, t] = 0
                    p_sat[m, k, t] = 0.0
                    events += 1
    return events


def ftw(scenario: Scenario, channel: Optional[ChannelTensor] = None,
        params=None, cfg: Optional[AlgoConfig] = None,
        load: Optional[BackgroundLoad] = None,
        window: Optional[tuple] = None) -> tuple:
    """Full-time-window algorithm: one SCA run over the whole horizon."""
    cfg = cfg or AlgoConfig()
    params = params or scenario.radio
    if channel is None:
        channel = build_channel_tensor(scenario)
    if load is None:
        load = scenario.draw_load()

    sol, trace = _sca_solve_window(channel, load, params, scenario.grid,
                                   scenario.smoothing, cfg, window=window)
    alpha, beta, p_bs, p_sat = recover_binary(sol["p_bs"], sol["p_sat"],
                                              scenario.smoothing.epsilon)
    t0, t1 = (0, scenario.grid.n_ts) if window is None else window
    wload = _slice_load(load, t0, t1)
    trace.repair_events = _repair_capacity(alpha, beta, p_bs, p_sat,
                                           wload, params)
    solution = AssociationSolution(alpha=alpha, beta=beta,
                                   p_bs=p_bs, p_sat=p_sat)
    trace.feasibility = check_feasibility(solution, scenario, _window_channel(
        channel, t0, t1), wload, params)
    return solution, trace


def _window_channel(channel: ChannelTensor, t0: int, t1: int) -> ChannelTensor:
    if t0 == 0 and t1 == channel.h.shape[2]:
        return channel
    return ChannelTensor(h=channel.h[:, :, t0:t1], g=channel.g[:, :, t0:t1],
                         fov=channel.fov[:, :, t0:t1])


def ptw(scenario: Scenario, scene=None, params=None,
        cfg: Optional[AlgoConfig] = None,
        channel: Optional[ChannelTensor] = None,
        load: Optional[BackgroundLoad] = None,
        pred_window: Optional[int] = None) -> tuple:
    """Prediction-based time-window algorithm.

    The horizon splits into sub-windows of pred_window slots (default from
    the grid).  The first window runs on true gains; every later window runs
    on gains predicted from the previous window's observed UE motion.  The
    sub-problems are independent; the concatenated solution's connection
    changes across boundaries count against the ground-truth objective.
    """
    cfg = cfg or AlgoConfig()
    params = params or scenario.radio
    scene = scenario.scene if scene is None else scene
    if channel is None:
        channel = build_channel_tensor(scenario, scene=scene)
    if load is None:
        load = scenario.draw_load()
    grid = scenario.grid
    if pred_window is not None and pred_window != grid.pred_window:
        grid = replace(grid, pred_window=pred_window)
        scenario = replace(scenario, grid=grid)

    windows = grid.pred_windows()
    history = PredictionState.observe(scenario)
    parts = []
    traces = []
    for w, (s, e) in enumerate(windows):
        kappa = w + 1
        if kappa == 1:
            sol, trace = _sca_solve_window(
                channel, load, params, grid, scenario.smoothing, cfg,
                window=(s, e))
        else:
            pred = predict_channel(history, kappa, scenario, scene=scene)
            wload = _slice_load(load, s, e)
            sol, trace = _sca_solve_window(
                pred, wload, params, grid, scenario.smoothing, cfg,
                window=None)
            trace.window = (s, e)
            trace.pred_mape = mape(pred, _window_channel(channel, s, e))
            trace.pred_overrun = bool(history.overrun[kappa].any())
        parts.append(sol)
        traces.append(trace)

    p_bs_rel = np.concatenate([p["p_bs"] for p in parts], axis=2)
    p_sat_rel = np.concatenate([p["p_sat"] for p in parts], axis=2)
    alpha, beta, p_bs, p_sat = recover_binary(p_bs_rel, p_sat_rel,
                                              scenario.smoothing.epsilon)
    events = _repair_capacity(alpha, beta, p_bs, p_sat, load, params)
    for tr in traces:
        tr.repair_events = events
    solution = AssociationSolution(alpha=alpha, beta=beta,
                                   p_bs=p_bs, p_sat=p_sat)
    traces[0].feasibility = check_feasibility(solution, scenario, channel,
                                              load, params)
    return solution, traces


def greedy(channel: ChannelTensor, scenario: Scenario,
           load: BackgroundLoad) -> AssociationSolution:
    """Descending-gain matching with uniform power split, slot by slot."""
    alpha, beta, p_bs, p_sat = _greedy_assign(channel, load, scenario.radio)
    return AssociationSolution(alpha=alpha, beta=beta, p_bs=p_bs, p_sat=p_sat)


def _greedy_assign(channel: ChannelTensor, load: BackgroundLoad,
                   params) -> tuple:
    """Core of greedy(); also seeds the SCA initialization."""
    N, M, K, T = channel.dims
    alpha = np.zeros((N, K, T))
    beta = np.zeros((M, K, T))
    pbar_b = background_power_bs_all(load, params)
    pbar_s = background_power_sat_all(load, params)

    for t in range(T):
        G = channel.h[:, :, t].copy()
        counts = np.zeros(N, dtype=int)
        avail = params.psi_bs - load.bs_load[:, t]
        while True:
            n, k = np.unravel_index(np.argmax(G), G.shape)
            if G[n, k] <= 0:
                break
            if counts[n] < avail[n]:
                alpha[n, k, t] = 1.0
                counts[n] += 1
                G[:, k] = 0.0
                if counts[n] >= avail[n]:
                    G[n, :] = 0.0
            else:
                G[n, :] = 0.0
        G = np.where(channel.fov[:, :, t], channel.g[:, :, t], 0.0).copy()
        counts = np.zeros(M, dtype=int)
        avail = params.psi_sat - load.sat_load[:, t]
        while True:
            m, k = np.unravel_index(np.argmax(G), G.shape)
            if G[m, k] <= 0:
                break
            if counts[m] < avail[m]:
                beta[m, k, t] = 1.0
                counts[m] += 1
                G[:, k] = 0.0
                if counts[m] >= avail[m]:
                    G[m, :] = 0.0
            else:
                G[m, :] = 0.0

    p_bs = alpha * pbar_b[:, None, :]
    p_sat = beta * pbar_s[:, None, :]
    return alpha, beta, p_bs, p_sat


def fwua(scenario: Scenario, channel: Optional[ChannelTensor] = None,
         params=None, cfg: Optional[AlgoConfig] = None,
         load: Optional[BackgroundLoad] = None) -> tuple:
    """Association-only optimization at fixed uniform powers.

    Same smoothed machinery as ftw but over relaxed indicators; the rate
    terms see the uniform power split as a constant.  Indicators threshold
    at 0.5; a UE left fully unserved gets its strongest candidate activated
    before the capacity repair pass.
    """
    cfg = cfg or AlgoConfig()
    params = params or scenario.radio
    if channel is None:
        channel = build_channel_tensor(scenario)
    if load is None:
        load = scenario.draw_load()

    sol, trace = _sca_solve_window(channel, load, params, scenario.grid,
                                   scenario.smoothing, cfg, mode="assoc")
    ind_b = sol["p_bs"]
    ind_s = sol["p_sat"]
    alpha = (ind_b >= 0.5).astype(float)
    beta = (ind_s >= 0.5).astype(float)
    # rank repair drops by indicator value rather than power
    ev = _repair_capacity(alpha, beta, ind_b.copy(), ind_s.copy(),
                          load, params)
    N, M, K, T = channel.dims
    for t in range(T):
        free_b = params.psi_bs - load.bs_load[:, t] - alpha[:, :, t].sum(axis=1)
        free_s = params.psi_sat - load.sat_load[:, t] - beta[:, :, t].sum(axis=1)
        for k in range(K):
            if alpha[:, k, t].sum() + beta[:, k, t].sum() > 0:
                continue
            # strongest candidate whose node still has room (sats in view)
            cand = np.concatenate([
                np.where(free_b > 0, ind_b[:, k, t], -1.0),
                np.where((free_s > 0) & channel.fov[:, k, t],
                         ind_s[:, k, t], -1.0)])
            best = int(np.argmax(cand))
            if cand[best] < 0.0:
                continue
            if best < N:
                alpha[best, k, t] = 1.0
                free_b[best] -= 1
            else:
                beta[best - N, k, t] = 1.0
                free_s[best - N] -= 1
            ev += 1
    trace.repair_events = ev
    pbar_b = background_power_bs_all(load, params)
    pbar_s = background_power_sat_all(load, params)
    p_bs = alpha * pbar_b[:, None, :]
    p_sat = beta * pbar_s[:, None, :]
    solution = AssociationSolution(alpha=alpha, beta=beta,
                                   p_bs=p_bs, p_sat=p_sat)
    trace.feasibility = check_feasibility(solution, scenario, channel, load,
                                          params, check_qos=False)
    return solution, trace
