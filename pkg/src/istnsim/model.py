"""Ground-truth network model: SINR, rates, connection changes, feasibility.

Evaluates candidate association/power solutions against the exact downlink
equations.  Rates are natural-log spectral efficiencies (nats/s/Hz) internally;
conversion to bps/Hz happens at the reporting boundary.

Convention for cross-system interference: a UE served by a BS is interfered by
every satellite's total downlink power (scheduled plus background at the
uniform background level), and vice versa.  In-system resources are orthogonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .channel import ChannelTensor
    from .scenario import BackgroundLoad, Scenario

LN2 = math.log(2.0)


# =====================================================================
# Parameters and solution containers
# =====================================================================

@dataclass
class RadioParams:
    """Radio-level parameters shared by the model and the optimizer.

    bs_budget_w: (N,) per-BS downlink power budget, W
    sat_budget_w: (M,)
    noise_w: (K,) per-UE receiver noise over the carrier bandwidth, W
    psi_bs / psi_sat: scheduling capacities (max co-scheduled users)
    rate_min_bps: (K,) per-UE QoS threshold in bps/Hz (period average)
    rho: sum-rate weight in [0, 1]; 1 - rho weighs connection changes
    ue_count: K (enters the uniform background power split)
    """

    bs_budget_w: np.ndarray
    sat_budget_w: np.ndarray
    noise_w: np.ndarray
    psi_bs: np.ndarray
    psi_sat: np.ndarray
    rate_min_bps: np.ndarray
    rho: float
    ue_count: int

    def __post_init__(self):
        for name in ("bs_budget_w", "sat_budget_w", "noise_w",
                     "psi_bs", "psi_sat", "rate_min_bps"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name))))
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError("rho must lie in [0, 1]")

    @property
    def rate_min_nats(self) -> np.ndarray:
        return self.rate_min_bps * LN2


@dataclass
class AssociationSolution:
    """Binary associations and per-link powers over one window.

    alpha: (N, K, T) BS association indicators
    beta: (M, K, T) satellite association indicators
    p_bs / p_sat: matching transmit powers in W (zero on inactive links)
    """

    alpha: np.ndarray
    beta: np.ndarray
    p_bs: np.ndarray
    p_sat: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha)
        self.beta = np.asarray(self.beta)
        self.p_bs = np.asarray(self.p_bs, dtype=float)
        self.p_sat = np.asarray(self.p_sat, dtype=float)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n, k, t = self.alpha.shape
        return n, self.beta.shape[0], k, t


# =====================================================================
# Background power (uniform split convention)
# =====================================================================

def background_power_bs(n: int, t: int, load: "BackgroundLoad",
                        params: RadioParams) -> float:
    """Uniform per-user BS power: budget / min(psi, eta + K)."""
    eta = load.bs_load[n, t]
    return float(params.bs_budget_w[n]
                 / min(params.psi_bs[n], eta + params.ue_count))


def background_power_sat(m: int, t: int, load: "BackgroundLoad",
                         params: RadioParams) -> float:
    eta = load.sat_load[m, t]
    return float(params.sat_budget_w[m]
                 / min(params.psi_sat[m], eta + params.ue_count))


def background_power_bs_all(load: "BackgroundLoad", params: RadioParams) -> np.ndarray:
    """(N, T) uniform background power levels."""
    div = np.minimum(params.psi_bs[:, None], load.bs_load + params.ue_count)
    return params.bs_budget_w[:, None] / div


def background_power_sat_all(load: "BackgroundLoad", params: RadioParams) -> np.ndarray:
    div = np.minimum(params.psi_sat[:, None], load.sat_load + params.ue_count)
    return params.sat_budget_w[:, None] / div


# =====================================================================
# Interference, SINR, rate
# =====================================================================

def sat_interference(sol: Optional[AssociationSolution], channel: "ChannelTensor",
                     load: "BackgroundLoad", params: RadioParams) -> np.ndarray:
    """(K, T) total satellite downlink power received per UE (Xi term).

    sol=None gives the background-only field (no scheduled satellite users).
    """
    pbar = background_power_sat_all(load, params)          # (M, T)
    tx = load.sat_load * pbar                              # (M, T)
    if sol is not None:
        tx = tx + (sol.beta * sol.p_sat).sum(axis=1)
    return np.einsum("mt,mkt->kt", tx, channel.g)


def bs_interference(sol: Optional[AssociationSolution], channel: "ChannelTensor",
                    load: "BackgroundLoad", params: RadioParams) -> np.ndarray:
    """(K, T) total BS downlink power received per UE (Phi term)."""
    pbar = background_power_bs_all(load, params)           # (N, T)
    tx = load.bs_load * pbar
    if sol is not None:
        tx = tx + (sol.alpha * sol.p_bs).sum(axis=1)
    return np.einsum("nt,nkt->kt", tx, channel.h)


def sinr_bs(n: int, k: int, t: int, sol: AssociationSolution,
            channel: "ChannelTensor", load: "BackgroundLoad",
            params: RadioParams) -> float:
    """SINR of the BS n -> UE k link at slot t (zero when unassociated)."""
    xi = sat_interference(sol, channel, load, params)[k, t]
    num = sol.alpha[n, k, t] * sol.p_bs[n, k, t] * channel.h[n, k, t]
    return float(num / (xi + params.noise_w[k]))


def sinr_sat(m: int, k: int, t: int, sol: AssociationSolution,
             channel: "ChannelTensor", load: "BackgroundLoad",
             params: RadioParams) -> float:
    phi = bs_interference(sol, channel, load, params)[k, t]
    num = sol.beta[m, k, t] * sol.p_sat[m, k, t] * channel.g[m, k, t]
    return float(num / (phi + params.noise_w[k]))


def rate_matrix_split(sol: AssociationSolution, channel: "ChannelTensor",
                      load: "BackgroundLoad", params: RadioParams,
                      unit: str = "nats") -> tuple[np.ndarray, np.ndarray]:
    """(K, T) per-UE spectral efficiency from BS links and from LSat links."""
    xi = sat_interference(sol, channel, load, params)      # (K, T)
    phi = bs_interference(sol, channel, load, params)
    noise = params.noise_w[:, None]
    sig_b = sol.alpha * sol.p_bs * channel.h               # (N, K, T)
    sig_s = sol.beta * sol.p_sat * channel.g
    r_b = np.log1p(sig_b / (xi + noise)).sum(axis=0)
    r_s = np.log1p(sig_s / (phi + noise)).sum(axis=0)
    if unit == "bits":
        return r_b / LN2, r_s / LN2
    return r_b, r_s


def rate_matrix(sol: AssociationSolution, channel: "ChannelTensor",
                load: "BackgroundLoad", params: RadioParams,
                unit: str = "nats") -> np.ndarray:
    """(K, T) per-UE spectral efficiency, summed over that UE's active links."""
    r_b, r_s = rate_matrix_split(sol, channel, load, params, unit)
    return r_b + r_s


def rate(k: int, t: int, sol: AssociationSolution, channel: "ChannelTensor",
         load: "BackgroundLoad", params: RadioParams, unit: str = "nats") -> float:
    return float(rate_matrix(sol, channel, load, params, unit)[k, t])


def cc_count(sol: AssociationSolution) -> int:
    """Total connection changes across consecutive slots of the window."""
    da = np.abs(np.diff(sol.alpha.astype(int), axis=2)).sum()
    db = np.abs(np.diff(sol.beta.astype(int), axis=2)).sum()
    return int(da + db)


def objective(sol: AssociationSolution, channel: "ChannelTensor",
              load: "BackgroundLoad", params: RadioParams) -> float:
    """Weighted objective: rho-scaled average sum rate minus CC penalty (nats)."""
    sr, cc = objective_components(sol, channel, load, params)
    return params.rho * sr - (1.0 - params.rho) * cc


def objective_components(sol: AssociationSolution, channel: "ChannelTensor",
                         load: "BackgroundLoad", params: RadioParams
                         ) -> tuple[float, float]:
    """(average sum rate per slot in nats, average connection changes per slot)."""
    t = sol.alpha.shape[2]
    sr = float(rate_matrix(sol, channel, load, params).sum()) / t
    cc = cc_count(sol) / t
    return sr, cc


# =====================================================================
# Feasibility
# =====================================================================

@dataclass
class FeasibilityReport:
    """Per-constraint verdicts: name -> (satisfied, worst violation)."""

    entries: dict
    tol: float

    @property
    def feasible(self) -> bool:
        return all(ok for ok, _ in self.entries.values())

    def summary(self) -> str:
        parts = []
        for name, (ok, viol) in self.entries.items():
            parts.append(f"{name}: {'ok' if ok else 'VIOLATED'} ({viol:.3e})")
        return "; ".join(parts)


def check_feasibility(sol: AssociationSolution, scenario: "Scenario",
                      channel: "ChannelTensor", load: "BackgroundLoad",
                      params: RadioParams, tol: float = 1e-6,
                      check_qos: bool = True) -> FeasibilityReport:
    """Verify the full constraint set C0..C8 at tolerance tol.

    C0 bundles the domain conditions: binary indicators, no satellite
    association outside the field of view, nonnegative powers, and zero power
    on inactive links.
    """
    a = sol.alpha
    b = sol.beta
    entries = {}

    binary_viol = max(
        float(np.abs(a - np.round(a)).max(initial=0.0)),
        float(np.abs(b - np.round(b)).max(initial=0.0)),
    )
    fov_viol = float((b * (~channel.fov)).max(initial=0.0))
    p_neg = max(float((-sol.p_bs).max(initial=0.0)),
                float((-sol.p_sat).max(initial=0.0)))
    p_idle = max(float((sol.p_bs * (1 - a)).max(initial=0.0)),
                 float((sol.p_sat * (1 - b)).max(initial=0.0)))
    c0 = max(binary_viol, fov_viol, p_neg, p_idle)
    entries["C0"] = (c0 <= tol, c0)

    c1 = float((a.sum(axis=0) - 1.0).max(initial=0.0))
    entries["C1"] = (c1 <= tol, max(c1, 0.0))

    free_bs = params.psi_bs[:, None] - load.bs_load        # (N, T)
    c2 = float((a.sum(axis=1) - free_bs).max(initial=0.0))
    entries["C2"] = (c2 <= tol, max(c2, 0.0))

    c3 = float((b.sum(axis=0) - 1.0).max(initial=0.0))
    entries["C3"] = (c3 <= tol, max(c3, 0.0))

    free_sat = params.psi_sat[:, None] - load.sat_load
    c4 = float((b.sum(axis=1) - free_sat).max(initial=0.0))
    entries["C4"] = (c4 <= tol, max(c4, 0.0))

    served = a.sum(axis=0) + b.sum(axis=0)                 # (K, T)
    c5 = float((1.0 - served).max(initial=0.0))
    entries["C5"] = (c5 <= tol, max(c5, 0.0))

    if check_qos:
        rates = rate_matrix(sol, channel, load, params)    # nats
        worst = 0.0
        t_all = rates.shape[1]
        q0 = 0
        while q0 < t_all:                                  # periods over the actual window
            q1 = min(q0 + scenario.grid.qos_period, t_all)
            avg = rates[:, q0:q1].mean(axis=1)
            worst = max(worst, float((params.rate_min_nats - avg).max(initial=0.0)))
            q0 = q1
        entries["C6"] = (worst <= tol, max(worst, 0.0))

    pbar_b = background_power_bs_all(load, params)
    used_b = (a * sol.p_bs).sum(axis=1) + load.bs_load * pbar_b
    c7 = float((used_b - params.bs_budget_w[:, None]).max(initial=0.0))
    entries["C7"] = (c7 <= tol, max(c7, 0.0))

    pbar_s = background_power_sat_all(load, params)
    used_s = (b * sol.p_sat).sum(axis=1) + load.sat_load * pbar_s
    c8 = float((used_s - params.sat_budget_w[:, None]).max(initial=0.0))
    entries["C8"] = (c8 <= tol, max(c8, 0.0))

    return FeasibilityReport(entries=entries, tol=tol)
