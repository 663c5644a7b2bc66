"""Convex subproblem construction for the joint association/power problem.

The mixed-integer program is smoothed and convexified per iteration:
    * indicator counting goes through f_apx(x) = 1 - exp(-zeta x), a concave
      lower bound on the step function over x >= 0
    * capacity-side occurrences of f_apx are replaced by its tangent
      f_apx_upper at the expansion point (a linear upper bound)
    * rates are handled in epigraph form: lambda + mu <= ln(signal +
      interference + noise) stays concave, and the convex side
      interference + noise <= exp(mu) is linearized at mu0
    * connection changes use interval slacks a_low <= f_apx(P) <= a_up at
      consecutive slots, whose width upper-bounds |f_apx(P_t) - f_apx(P_t-1)|

Each call builds one SubproblemSpec: a box-bounded problem with a linear
objective and three constraint kinds (affine, log-affine, concave-exp) that
the interior-point solver consumes directly.  Two modes share the machinery:
'power' (joint powers, associations implied by power support) and 'assoc'
(relaxed indicators at fixed uniform powers, linear capacity rows).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.sparse as sp

from .model import background_power_bs_all, background_power_sat_all

if TYPE_CHECKING:
    from .channel import ChannelTensor
    from .model import RadioParams
    from .scenario import BackgroundLoad, TimeGrid

_NUDGE = 1e-7   # strict-interior margin for generated start points

# The QoS rows enforce the rate floor with this much headroom.  Start
# seeding nudges the rate epigraph variables below their anchor-implied
# values by _NUDGE each, and the solver may absorb a dusting of warm-start
# violation by shifting binding rows outward; both effects would otherwise
# let recovered rates land a hair under the requested floor.
QOS_PAD = 4e-6


# =====================================================================
# Smoothing primitives
# =====================================================================

@dataclass(frozen=True)
class SmoothingParams:
    """zeta: indicator smoothing sharpness; epsilon: recovery threshold (W)."""

    zeta: float = 10.0
    epsilon: float = 1e-6


def f_apx(x, zeta: float = 10.0):
    """Smoothed indicator 1 - exp(-zeta x); concave, in [0, 1) on x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("f_apx domain: x >= 0")
    out = -np.expm1(-zeta * x)
    return float(out) if out.ndim == 0 else out


def f_apx_upper(x, x0, zeta: float = 10.0):
    """First-order (tangent) upper bound of f_apx at x0; affine in x."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if np.any(x < 0) or np.any(x0 < 0):
        raise ValueError("f_apx_upper domain: x, x0 >= 0")
    s = zeta * np.exp(-zeta * x0)
    out = s * (x - x0) - np.expm1(-zeta * x0)
    return float(out) if out.ndim == 0 else out


def true_cc_upper_bound_check(p_now, p_prev, anchor_now, anchor_prev,
                              zeta: float = 10.0):
    """(lhs, rhs) of the slack-interval bound on the true indicator change.

    lhs = |f_apx(p_now) - f_apx(p_prev)|; rhs = u_up - u_low under the
    canonical assignment u_low = min of the f_apx values, u_up = max of the
    tangents at the given anchors.  rhs >= lhs holds for all inputs.
    """
    lo = np.minimum(f_apx(p_now, zeta), f_apx(p_prev, zeta))
    up = np.maximum(f_apx_upper(p_now, anchor_now, zeta),
                    f_apx_upper(p_prev, anchor_prev, zeta))
    lhs = np.abs(np.asarray(f_apx(p_now, zeta)) - np.asarray(f_apx(p_prev, zeta)))
    rhs = np.asarray(up) - np.asarray(lo)
    return lhs, rhs


# =====================================================================
# Expansion point
# =====================================================================

@dataclass
class FeasiblePoint:
    """SCA expansion state over one window.

    p_bs: (N, K, Tw) link variables (powers in W, or relaxed indicators in
          'assoc' mode); p_sat: (M, K, Tw), zero outside the field of view
    mu_bs / mu_sat: (K, Tw) log-interference anchors
    """

    p_bs: np.ndarray
    p_sat: np.ndarray
    mu_bs: np.ndarray
    mu_sat: np.ndarray


# =====================================================================
# Subproblem container
# =====================================================================

@dataclass
class SubproblemSpec:
    """Box-bounded convex program with a linear objective.

    Constraint kinds (all written as "expression <= 0"):
      affine:  A x - b
      log:     U x + d - ln(W x + e)        (W x + e > 0 is the domain)
      exp:     E x + f - sum_j w_j (1 - exp(-zeta_j (T_j x + s_j)))
               with w_j >= 0, grouped per row by term_ptr
    """

    n_var: int
    var_names: list
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    sense: str
    obj_offset: float
    A: sp.csr_matrix
    b: np.ndarray
    aff_names: list
    U: sp.csr_matrix
    d: np.ndarray
    W: sp.csr_matrix
    e: np.ndarray
    log_names: list
    E: sp.csr_matrix
    f: np.ndarray
    T: sp.csr_matrix
    tw: np.ndarray
    tzeta: np.ndarray
    ts: np.ndarray
    term_ptr: np.ndarray
    exp_names: list
    start: np.ndarray
    var_scale: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_affine(self) -> int:
        return self.b.shape[0]

    @property
    def n_log(self) -> int:
        return self.d.shape[0]

    @property
    def n_exp(self) -> int:
        return self.f.shape[0]

    @property
    def n_constraints(self) -> int:
        """Functional rows; box bounds are counted separately by the solver."""
        return self.n_affine + self.n_log + self.n_exp

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.obj_offset

    def eval_affine(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    def eval_log(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(values, args); a nonpositive arg marks a domain violation."""
        arg = self.W @ x + self.e
        with np.errstate(invalid="ignore", divide="ignore"):
            val = self.U @ x + self.d - np.log(np.maximum(arg, 1e-300))
        return val, arg

    def eval_exp(self, x: np.ndarray) -> np.ndarray:
        if self.n_exp == 0:
            return np.zeros(0)
        contrib = self.tw * (-np.expm1(-self.tzeta * (self.T @ x + self.ts)))
        sums = np.add.reduceat(contrib, self.term_ptr[:-1])
        return self.E @ x + self.f - sums

    def max_violation(self, x: np.ndarray) -> float:
        """Worst constraint value at x (boxes included); <= 0 means feasible."""
        worst = max(
            float((self.lb - x).max(initial=-np.inf)),
            float((x - self.ub).max(initial=-np.inf)),
        )
        if self.n_affine:
            worst = max(worst, float(self.eval_affine(x).max()))
        if self.n_log:
            val, arg = self.eval_log(x)
            worst = max(worst, float(val.max()))
            if np.any(arg <= 0):
                worst = np.inf
        if self.n_exp:
            worst = max(worst, float(self.eval_exp(x).max()))
        return worst

    def dump(self) -> str:
        """Human-readable text description (debug interface)."""
        out = io.StringIO()
        out.write(f"# subproblem: {self.n_var} vars, "
                  f"{self.n_affine} affine, {self.n_log} log, "
                  f"{self.n_exp} exp rows, sense {self.sense}\n")
        out.write("# variables: name lb ub start obj_coeff\n")
        for i, name in enumerate(self.var_names):
            out.write(f"{name} {self.lb[i]:.10g} {self.ub[i]:.10g} "
                      f"{self.start[i]:.10g} {self.c[i]:.10g}\n")
        A = self.A.tocoo()
        out.write("# affine rows: name, sum(coef*var) <= rhs\n")
        rows = [[] for _ in range(self.n_affine)]
        for r, cc, v in zip(A.row, A.col, A.data):
            rows[r].append(f"{v:.10g}*{self.var_names[cc]}")
        for r in range(self.n_affine):
            out.write(f"{self.aff_names[r]}: {' + '.join(rows[r])} "
                      f"<= {self.b[r]:.10g}\n")
        out.write(f"# log rows: {self.n_log} (U x + d <= ln(W x + e))\n")
        for r in range(self.n_log):
            out.write(f"{self.log_names[r]}\n")
        out.write(f"# exp rows: {self.n_exp} "
                  f"(E x + f <= sum w*(1 - exp(-zeta*(T x + s))))\n")
        for r in range(self.n_exp):
            out.write(f"{self.exp_names[r]}\n")
        return out.getvalue()


class SpecBuilder:
    """Incremental SubproblemSpec assembly (also used by solver tests)."""

    def __init__(self):
        self._names = []
        self._lb = []
        self._ub = []
        self._start = []
        self._scale = []
        self._arows = ([], [], [])     # rows, cols, vals
        self._arhs = []
        self._anames = []
        self._urows = ([], [], [])
        self._ud = []
        self._wrows = ([], [], [])
        self._we = []
        self._lnames = []
        self._erows = ([], [], [])
        self._ef = []
        self._enames = []
        self._trows = ([], [], [])     # term matrix triplets
        self._tw = []
        self._tz = []
        self._tsv = []
        self._tptr = [0]

    def var(self, name: str, lb: float, ub: float, start: float,
            scale: float = 1.0) -> int:
        if not lb < ub:
            raise ValueError(f"variable {name}: empty box [{lb}, {ub}]")
        pad = 1e-9 * (ub - lb)
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        self._start.append(min(max(start, lb + pad), ub - pad))
        self._scale.append(scale)
        return len(self._names) - 1

    def affine(self, cols, vals, rhs: float, name: str = "") -> None:
        r = len(self._arhs)
        for cc, v in zip(cols, vals):
            if v != 0.0:
                self._arows[0].append(r)
                self._arows[1].append(cc)
                self._arows[2].append(v)
        self._arhs.append(rhs)
        self._anames.append(name)

    def logrow(self, ucols, uvals, d: float, wcols, wvals, e: float,
               name: str = "") -> None:
        r = len(self._ud)
        for cc, v in zip(ucols, uvals):
            if v != 0.0:
                self._urows[0].append(r)
                self._urows[1].append(cc)
                self._urows[2].append(v)
        self._ud.append(d)
        for cc, v in zip(wcols, wvals):
            if v != 0.0:
                self._wrows[0].append(r)
                self._wrows[1].append(cc)
                self._wrows[2].append(v)
        self._we.append(e)
        self._lnames.append(name)

    def exprow(self, ucols, uvals, f: float, terms, name: str = "") -> None:
        """terms: iterable of (cols, vals, const, weight, zeta); weight >= 0."""
        terms = list(terms)
        if not terms:
            raise ValueError("exp rows need at least one term")
        r = len(self._ef)
        for cc, v in zip(ucols, uvals):
            if v != 0.0:
                self._erows[0].append(r)
                self._erows[1].append(cc)
                self._erows[2].append(v)
        self._ef.append(f)
        nt = self._tptr[-1]
        for cols, vals, const, w, zeta in terms:
            if w < 0:
                raise ValueError("exp-term weights must be nonnegative")
            for cc, v in zip(cols, vals):
                if v != 0.0:
                    self._trows[0].append(nt)
                    self._trows[1].append(cc)
                    self._trows[2].append(v)
            self._tw.append(w)
            self._tz.append(zeta)
            self._tsv.append(const)
            nt += 1
        self._tptr.append(nt)
        self._enames.append(name)

    def build(self, c: np.ndarray, sense: str, obj_offset: float = 0.0,
              meta: Optional[dict] = None) -> SubproblemSpec:
        n = len(self._names)

        def _csr(trip, rows, cols=None):
            return sp.csr_matrix(
                (trip[2], (trip[0], trip[1])),
                shape=(rows, n if cols is None else cols))

        na, nl, ne = len(self._arhs), len(self._ud), len(self._ef)
        nt = self._tptr[-1]
        return SubproblemSpec(
            n_var=n,
            var_names=list(self._names),
            lb=np.asarray(self._lb, dtype=float),
            ub=np.asarray(self._ub, dtype=float),
            c=np.asarray(c, dtype=float),
            sense=sense,
            obj_offset=obj_offset,
            A=_csr(self._arows, na),
            b=np.asarray(self._arhs, dtype=float),
            aff_names=self._anames,
            U=_csr(self._urows, nl),
            d=np.asarray(self._ud, dtype=float),
            W=_csr(self._wrows, nl),
            e=np.asarray(self._we, dtype=float),
            log_names=self._lnames,
            E=_csr(self._erows, ne),
            f=np.asarray(self._ef, dtype=float),
            T=_csr(self._trows, nt),
            tw=np.asarray(self._tw, dtype=float),
            tzeta=np.asarray(self._tz, dtype=float),
            ts=np.asarray(self._tsv, dtype=float),
            term_ptr=np.asarray(self._tptr, dtype=int),
            exp_names=self._enames,
            start=np.asarray(self._start, dtype=float),
            var_scale=np.asarray(self._scale, dtype=float),
            meta=dict(meta or {}),
        )


# =====================================================================
# Problem construction
# =====================================================================

def init_expansion_point(channel: "ChannelTensor", load: "BackgroundLoad",
                         params: "RadioParams",
                         window: Optional[tuple] = None) -> FeasiblePoint:
    """Zero-power anchor with exact background-only interference logs."""
    N, M, K, T = channel.dims
    t0, t1 = (0, T) if window is None else window
    tw = t1 - t0
    g = channel.g[:, :, t0:t1]
    h = channel.h[:, :, t0:t1]
    pbar_s = background_power_sat_all(load, params)[:, t0:t1]
    pbar_b = background_power_bs_all(load, params)[:, t0:t1]
    eta_s = load.sat_load[:, t0:t1]
    eta_b = load.bs_load[:, t0:t1]
    xi = np.einsum("mt,mkt->kt", eta_s * pbar_s, g)
    phi = np.einsum("nt,nkt->kt", eta_b * pbar_b, h)
    noise = params.noise_w[:, None]
    return FeasiblePoint(
        p_bs=np.zeros((N, K, tw)),
        p_sat=np.zeros((M, K, tw)),
        mu_bs=np.log(xi + noise),
        mu_sat=np.log(phi + noise),
    )


def _window_qos_periods(tw: int, qos_period: int) -> list:
    out = []
    q0 = 0
    while q0 < tw:
        out.append((q0, min(q0 + qos_period, tw)))
        q0 = q0 + qos_period
    return out


def build_subproblem(point: FeasiblePoint, channel: "ChannelTensor",
                     load: "BackgroundLoad", params: "RadioParams",
                     grid: "TimeGrid", window: Optional[tuple] = None,
                     smoothing: Optional[SmoothingParams] = None,
                     mode: str = "power", objective_mode: str = "sum",
                     relaxed: bool = False) -> SubproblemSpec:
    """Convexified subproblem at the given expansion point.

    window is an absolute half-open slot range into the channel/load arrays
    (default: all slots).  relaxed=True builds the initialization variant:
    per-slot coverage and per-period QoS constraints get penalty slacks and
    the objective minimizes the total penalty (no connection-change terms).
    """
    if mode not in ("power", "assoc"):
        raise ValueError("mode must be 'power' or 'assoc'")
    if objective_mode not in ("sum", "maxmin"):
        raise ValueError("objective_mode must be 'sum' or 'maxmin'")
    sm = smoothing or SmoothingParams()
    zeta = sm.zeta

    N, M, K, T = channel.dims
    t0, t1 = (0, T) if window is None else window
    tw = t1 - t0
    h = channel.h[:, :, t0:t1]
    g = channel.g[:, :, t0:t1]
    fov = channel.fov[:, :, t0:t1]
    eta_b = load.bs_load[:, t0:t1]
    eta_s = load.sat_load[:, t0:t1]
    pbar_b = background_power_bs_all(load, params)[:, t0:t1]
    pbar_s = background_power_sat_all(load, params)[:, t0:t1]
    noise = params.noise_w
    rate_min = params.rate_min_nats
    periods = _window_qos_periods(tw, grid.qos_period)
    nq = len(periods)
    assoc = mode == "assoc"

    # free transmit budget after background users
    free_b = params.bs_budget_w[:, None] - eta_b * pbar_b        # (N, Tw)
    free_s = params.sat_budget_w[:, None] - eta_s * pbar_s       # (M, Tw)

    # background-only interference fields
    xi_bg = np.einsum("mt,mkt->kt", eta_s * pbar_s, g)           # (K, Tw)
    phi_bg = np.einsum("nt,nkt->kt", eta_b * pbar_b, h)

    # link variable upper bounds and SINR scales
    if assoc:
        ub_link_b = np.ones((N, tw))
        ub_link_s = np.ones((M, tw))
        sig_b = pbar_b[:, None, :] * h                           # (N, K, Tw)
        sig_s = pbar_s[:, None, :] * g
    else:
        ub_link_b = free_b
        ub_link_s = free_s
        sig_b = h
        sig_s = g

    bld = SpecBuilder()
    big = 1e30

    # Start placement: every variable begins strictly inside its box and
    # every row strictly satisfied.  Powers start at the expansion point
    # floored away from the zero bound; the floor leaks into the modeled
    # interference, so the mu and lambda starts are computed from the
    # floored powers rather than the raw anchor.
    pad_frac = 1e-9
    p0_b = np.clip(point.p_bs, pad_frac * ub_link_b[:, None, :],
                   (1.0 - pad_frac) * ub_link_b[:, None, :])
    p0_s = np.where(fov, np.clip(point.p_sat,
                                 pad_frac * ub_link_s[:, None, :],
                                 (1.0 - pad_frac) * ub_link_s[:, None, :]), 0.0)
    xi_start = xi_bg + np.einsum("mt,mkt->kt", p0_s.sum(axis=1), sig_s)
    phi_start = phi_bg + np.einsum("nt,nkt->kt", p0_b.sum(axis=1), sig_b)
    nz = noise[:, None]
    mu_b0 = point.mu_bs
    mu_s0 = point.mu_sat
    mu_b_start = mu_b0 + np.maximum(
        0.0, (xi_start + nz) / np.exp(mu_b0) - 1.0) + _NUDGE
    mu_s_start = mu_s0 + np.maximum(
        0.0, (phi_start + nz) / np.exp(mu_s0) - 1.0) + _NUDGE

    # ---- variables -----------------------------------------------------
    pb_idx = np.empty((N, K, tw), dtype=int)
    for n in range(N):
        for k in range(K):
            for ti in range(tw):
                pb_idx[n, k, ti] = bld.var(
                    f"pb[{n},{k},{ti}]", 0.0, ub_link_b[n, ti],
                    p0_b[n, k, ti], max(ub_link_b[n, ti], 1e-6))
    ps_idx = np.full((M, K, tw), -1, dtype=int)
    for m in range(M):
        for k in range(K):
            for ti in range(tw):
                if fov[m, k, ti]:
                    ps_idx[m, k, ti] = bld.var(
                        f"ps[{m},{k},{ti}]", 0.0, ub_link_s[m, ti],
                        p0_s[m, k, ti], max(ub_link_s[m, ti], 1e-6))

    lam_floor = -float(np.max(rate_min, initial=0.0)) - 10.0
    lam_start_sum = np.zeros((K, tw))

    lb_idx = np.empty((N, K, tw), dtype=int)
    ls_idx = np.full((M, K, tw), -1, dtype=int)
    mb_idx = np.empty((K, tw), dtype=int)
    ms_idx = np.empty((K, tw), dtype=int)
    for k in range(K):
        for ti in range(tw):
            for n in range(N):
                cap = math.log1p(ub_link_b[n, ti] * sig_b[n, k, ti]
                                 / noise[k]) + 1.0
                start = min(math.log(p0_b[n, k, ti] * sig_b[n, k, ti]
                                     + xi_start[k, ti] + noise[k])
                            - mu_b_start[k, ti], cap) - _NUDGE
                start = max(start, lam_floor + _NUDGE)
                lam_start_sum[k, ti] += start
                lb_idx[n, k, ti] = bld.var(
                    f"lb[{n},{k},{ti}]", lam_floor, cap, start)
            for m in range(M):
                if fov[m, k, ti]:
                    cap = math.log1p(ub_link_s[m, ti] * sig_s[m, k, ti]
                                     / noise[k]) + 1.0
                    start = min(math.log(p0_s[m, k, ti] * sig_s[m, k, ti]
                                         + phi_start[k, ti] + noise[k])
                                - mu_s_start[k, ti], cap) - _NUDGE
                    start = max(start, lam_floor + _NUDGE)
                    lam_start_sum[k, ti] += start
                    ls_idx[m, k, ti] = bld.var(
                        f"ls[{m},{k},{ti}]", lam_floor, cap, start)
            xi_cap = float((ub_link_s[:, ti] * params.psi_sat * sig_s[:, k, ti]).sum()
                           + xi_bg[k, ti])
            phi_cap = float((ub_link_b[:, ti] * params.psi_bs * sig_b[:, k, ti]).sum()
                            + phi_bg[k, ti])
            mb_idx[k, ti] = bld.var(
                f"mb[{k},{ti}]", math.log(noise[k]) - 5.0,
                math.log(xi_cap + noise[k]) + 5.0, mu_b_start[k, ti])
            ms_idx[k, ti] = bld.var(
                f"ms[{k},{ti}]", math.log(noise[k]) - 5.0,
                math.log(phi_cap + noise[k]) + 5.0, mu_s_start[k, ti])

    # connection-change interval slacks (none in the relaxed init problem)
    al_idx = np.full((N, K, tw), -1, dtype=int)
    au_idx = np.full((N, K, tw), -1, dtype=int)
    bl_idx = np.full((M, K, tw), -1, dtype=int)
    bu_idx = np.full((M, K, tw), -1, dtype=int)
    if not relaxed and tw > 1:
        up_cap_b = zeta * float(ub_link_b.max(initial=0.0)) + 2.0
        up_cap_s = zeta * float(ub_link_s.max(initial=0.0)) + 2.0

        def tangent_at_start(p0, anchor):
            return f_apx(anchor, zeta) \
                + zeta * math.exp(-zeta * anchor) * (p0 - anchor)

        for ti in range(1, tw):
            for n in range(N):
                for k in range(K):
                    fa_t = f_apx(p0_b[n, k, ti], zeta)
                    fa_p = f_apx(p0_b[n, k, ti - 1], zeta)
                    ft_t = tangent_at_start(p0_b[n, k, ti],
                                            point.p_bs[n, k, ti])
                    ft_p = tangent_at_start(p0_b[n, k, ti - 1],
                                            point.p_bs[n, k, ti - 1])
                    al_idx[n, k, ti] = bld.var(
                        f"al[{n},{k},{ti}]", -1.0, 1.5,
                        min(fa_t, fa_p) - _NUDGE)
                    au_idx[n, k, ti] = bld.var(
                        f"au[{n},{k},{ti}]", 0.0, up_cap_b,
                        max(ft_t, ft_p) + _NUDGE)
            for m in range(M):
                for k in range(K):
                    if not (fov[m, k, ti] or fov[m, k, ti - 1]):
                        continue
                    fa_t = f_apx(p0_s[m, k, ti], zeta) \
                        if fov[m, k, ti] else 0.0
                    fa_p = f_apx(p0_s[m, k, ti - 1], zeta) \
                        if fov[m, k, ti - 1] else 0.0
                    ft_t = tangent_at_start(p0_s[m, k, ti],
                                            point.p_sat[m, k, ti]) \
                        if fov[m, k, ti] else 0.0
                    ft_p = tangent_at_start(p0_s[m, k, ti - 1],
                                            point.p_sat[m, k, ti - 1]) \
                        if fov[m, k, ti - 1] else 0.0
                    bl_idx[m, k, ti] = bld.var(
                        f"bl[{m},{k},{ti}]", -1.0, 1.5,
                        min(fa_t, fa_p) - _NUDGE)
                    bu_idx[m, k, ti] = bld.var(
                        f"bu[{m},{k},{ti}]", 0.0, up_cap_s,
                        max(ft_t, ft_p) + _NUDGE)

    # Counting-constraint margins.  The smoothed indicator saturates toward
    # 1 exponentially, so the cap rows C1-C4 sit within e^{-zeta P} of their
    # integer right-hand sides once links carry real power, and the coverage
    # row C5 can never reach an exact RHS of 1; both effects pinch the
    # feasible interior below float resolution as the outer loop converges.
    # Backing the caps off by cap_margin (and the coverage RHS down by the
    # same amount) keeps an honest interior: a spurious extra link admitted
    # by the slack carries at most ~cap_margin/zeta watts, which the binary
    # recovery repair prunes.
    cap_margin = max(1e-6, 2.0 * math.exp(-zeta))
    cover_rhs = 1.0 - (0.5 if relaxed else 1.0) * cap_margin

    tau_idx = np.full((K, tw), -1, dtype=int)
    chi_idx = np.full((K, nq), -1, dtype=int)
    lmin_idx = np.full(tw, -1, dtype=int)
    if relaxed:
        for k in range(K):
            for ti in range(tw):
                if assoc:
                    fa = (sum(p0_b[n, k, ti] for n in range(N))
                          + sum(p0_s[m, k, ti]
                                for m in range(M) if fov[m, k, ti]))
                else:
                    fa = (sum(f_apx(p0_b[n, k, ti], zeta) for n in range(N))
                          + sum(f_apx(p0_s[m, k, ti], zeta)
                                for m in range(M) if fov[m, k, ti]))
                tau_idx[k, ti] = bld.var(
                    f"tau[{k},{ti}]", 0.0, N + M + 2.0,
                    max(0.0, cover_rhs - fa) + _NUDGE)
        for k in range(K):
            for q in range(nq):
                q0, q1 = periods[q]
                avg_rate = float(lam_start_sum[k, q0:q1].mean())
                chi_idx[k, q] = bld.var(
                    f"chi[{k},{q}]", 0.0,
                    float(rate_min[k]) + (N + M) * 50.0,
                    max(0.0, float(rate_min[k]) + QOS_PAD - avg_rate) + _NUDGE)
    if objective_mode == "maxmin":
        for ti in range(tw):
            lmin_idx[ti] = bld.var(f"lmin[{ti}]", lam_floor * (N + M),
                                   50.0 * (N + M),
                                   float(lam_start_sum[:, ti].min()) - 1.0)

    # ---- constraints ----------------------------------------------------
    def links_of_ue(k, ti):
        cols = [pb_idx[n, k, ti] for n in range(N)]
        cols += [ps_idx[m, k, ti] for m in range(M) if ps_idx[m, k, ti] >= 0]
        return cols

    def tangent(x0):
        s = zeta * math.exp(-zeta * x0)
        return s, -math.expm1(-zeta * x0) - s * x0   # slope, intercept

    # C1/C3: at most one serving node per system and UE
    for k in range(K):
        for ti in range(tw):
            if assoc:
                cols = [pb_idx[n, k, ti] for n in range(N)]
                bld.affine(cols, [1.0] * len(cols), 1.0 + cap_margin,
                           f"C1[{k},{ti}]")
            else:
                cols, vals, rhs = [], [], 1.0 + cap_margin
                for n in range(N):
                    s, c0 = tangent(point.p_bs[n, k, ti])
                    cols.append(pb_idx[n, k, ti])
                    vals.append(s)
                    rhs -= c0
                bld.affine(cols, vals, rhs, f"C1[{k},{ti}]")
            scols = [ps_idx[m, k, ti] for m in range(M) if ps_idx[m, k, ti] >= 0]
            if scols:
                if assoc:
                    bld.affine(scols, [1.0] * len(scols), 1.0 + cap_margin,
                               f"C3[{k},{ti}]")
                else:
                    vals, rhs = [], 1.0 + cap_margin
                    for m in range(M):
                        if ps_idx[m, k, ti] >= 0:
                            s, c0 = tangent(point.p_sat[m, k, ti])
                            vals.append(s)
                            rhs -= c0
                    bld.affine(scols, vals, rhs, f"C3[{k},{ti}]")

    # C2/C4: node scheduling capacity net of background users
    for ti in range(tw):
        for n in range(N):
            cols, vals = [], []
            rhs = float(params.psi_bs[n] - eta_b[n, ti]) + cap_margin
            for k in range(K):
                if assoc:
                    cols.append(pb_idx[n, k, ti])
                    vals.append(1.0)
                else:
                    s, c0 = tangent(point.p_bs[n, k, ti])
                    cols.append(pb_idx[n, k, ti])
                    vals.append(s)
                    rhs -= c0
            bld.affine(cols, vals, rhs, f"C2[{n},{ti}]")
        for m in range(M):
            cols, vals = [], []
            rhs = float(params.psi_sat[m] - eta_s[m, ti]) + cap_margin
            for k in range(K):
                if ps_idx[m, k, ti] < 0:
                    continue
                if assoc:
                    cols.append(ps_idx[m, k, ti])
                    vals.append(1.0)
                else:
                    s, c0 = tangent(point.p_sat[m, k, ti])
                    cols.append(ps_idx[m, k, ti])
                    vals.append(s)
                    rhs -= c0
            if cols:
                bld.affine(cols, vals, rhs, f"C4[{m},{ti}]")

    # C5: every UE keeps at least one connection (relaxed: minus tau slack).
    # The right-hand side backs off 1 by a small margin (cover_rhs above):
    # the smoothed indicator never reaches 1 at finite power, and an exact
    # RHS pinches this row against the C1 tangent cap into a zero-width set
    # as the outer loop converges.  The margin still forces one real link
    # (about -ln(margin)/zeta watts when active), far above the recovery
    # threshold.  The relaxed variant keeps only half the margin so a
    # zero-penalty init point is strictly interior for the main problem.
    for k in range(K):
        for ti in range(tw):
            cols = links_of_ue(k, ti)
            if assoc:
                acols = list(cols)
                avals = [-1.0] * len(acols)
                if relaxed:
                    acols.append(tau_idx[k, ti])
                    avals.append(-1.0)
                bld.affine(acols, avals, -cover_rhs, f"C5[{k},{ti}]")
            else:
                ucols, uvals = ([tau_idx[k, ti]], [-1.0]) if relaxed else ([], [])
                terms = [([cc], [1.0], 0.0, 1.0, zeta) for cc in cols]
                bld.exprow(ucols, uvals, cover_rhs, terms, f"C5[{k},{ti}]")

    # C6: per-period average rate meets the QoS floor (relaxed: minus chi)
    for k in range(K):
        for q, (q0, q1) in enumerate(periods):
            span = q1 - q0
            cols, vals = [], []
            for ti in range(q0, q1):
                for n in range(N):
                    cols.append(lb_idx[n, k, ti])
                    vals.append(-1.0 / span)
                for m in range(M):
                    if ls_idx[m, k, ti] >= 0:
                        cols.append(ls_idx[m, k, ti])
                        vals.append(-1.0 / span)
            if objective_mode == "maxmin":
                for ti in range(q0, q1):
                    cols.append(lmin_idx[ti])
                    vals.append(1.0 / span)
                rhs = 0.0
            else:
                rhs = -(float(rate_min[k]) + QOS_PAD)
            if relaxed:
                cols.append(chi_idx[k, q])
                vals.append(-1.0)
            bld.affine(cols, vals, rhs, f"C6[{k},{q}]")

    # maxmin epigraph: lmin_t <= total rate of every UE at slot t
    if objective_mode == "maxmin":
        for ti in range(tw):
            for k in range(K):
                cols = [lmin_idx[ti]]
                vals = [1.0]
                for n in range(N):
                    cols.append(lb_idx[n, k, ti])
                    vals.append(-1.0)
                for m in range(M):
                    if ls_idx[m, k, ti] >= 0:
                        cols.append(ls_idx[m, k, ti])
                        vals.append(-1.0)
                bld.affine(cols, vals, 0.0, f"Cmin[{k},{ti}]")

    # C7/C8: transmit power budgets net of background consumption
    for ti in range(tw):
        for n in range(N):
            cols = [pb_idx[n, k, ti] for k in range(K)]
            scale = pbar_b[n, ti] if assoc else 1.0
            bld.affine(cols, [scale] * K, float(free_b[n, ti]), f"C7[{n},{ti}]")
        for m in range(M):
            cols = [ps_idx[m, k, ti] for k in range(K) if ps_idx[m, k, ti] >= 0]
            if cols:
                scale = pbar_s[m, ti] if assoc else 1.0
                bld.affine(cols, [scale] * len(cols), float(free_s[m, ti]),
                           f"C8[{m},{ti}]")

    # C9/C10: epigraph rate rows (log) and linearized interference rows
    for k in range(K):
        inv_noise = 1.0 / noise[k]
        for ti in range(tw):
            # interference columns: satellite powers into UE k
            s_cols, s_vals = [], []
            for m in range(M):
                if g[m, k, ti] <= 0:
                    continue
                coef = (pbar_s[m, ti] if assoc else 1.0) * g[m, k, ti]
                for kk in range(K):
                    if ps_idx[m, kk, ti] >= 0:
                        s_cols.append(ps_idx[m, kk, ti])
                        s_vals.append(coef)
            b_cols, b_vals = [], []
            for n in range(N):
                if h[n, k, ti] <= 0:
                    continue
                coef = (pbar_b[n, ti] if assoc else 1.0) * h[n, k, ti]
                for kk in range(K):
                    b_cols.append(pb_idx[n, kk, ti])
                    b_vals.append(coef)

            for n in range(N):
                wcols = [pb_idx[n, k, ti]] + s_cols
                wvals = [sig_b[n, k, ti] * inv_noise] \
                    + [v * inv_noise for v in s_vals]
                bld.logrow([lb_idx[n, k, ti], mb_idx[k, ti]], [1.0, 1.0],
                           -math.log(noise[k]),
                           wcols, wvals, 1.0 + xi_bg[k, ti] * inv_noise,
                           f"C9r[{n},{k},{ti}]")
            emu = math.exp(mu_b0[k, ti])
            bld.affine(s_cols + [mb_idx[k, ti]],
                       [v / emu for v in s_vals] + [-1.0],
                       1.0 - mu_b0[k, ti] - (xi_bg[k, ti] + noise[k]) / emu,
                       f"C9i[{k},{ti}]")

            for m in range(M):
                if ls_idx[m, k, ti] < 0:
                    continue
                wcols = [ps_idx[m, k, ti]] + b_cols
                wvals = [sig_s[m, k, ti] * inv_noise] \
                    + [v * inv_noise for v in b_vals]
                bld.logrow([ls_idx[m, k, ti], ms_idx[k, ti]], [1.0, 1.0],
                           -math.log(noise[k]),
                           wcols, wvals, 1.0 + phi_bg[k, ti] * inv_noise,
                           f"C10r[{m},{k},{ti}]")
            emu = math.exp(mu_s0[k, ti])
            bld.affine(b_cols + [ms_idx[k, ti]],
                       [v / emu for v in b_vals] + [-1.0],
                       1.0 - mu_s0[k, ti] - (phi_bg[k, ti] + noise[k]) / emu,
                       f"C10i[{k},{ti}]")

    # C11/C12: connection-change interval slacks
    if not relaxed and tw > 1:
        for ti in range(1, tw):
            for n in range(N):
                for k in range(K):
                    il, iu = al_idx[n, k, ti], au_idx[n, k, ti]
                    for tt, xvar in ((ti, pb_idx[n, k, ti]),
                                     (ti - 1, pb_idx[n, k, ti - 1])):
                        bld.exprow([il], [1.0], 0.0,
                                   [([xvar], [1.0], 0.0, 1.0, zeta)],
                                   f"C11l[{n},{k},{ti},{tt}]")
                        s, c0 = tangent(point.p_bs[n, k, tt])
                        bld.affine([xvar, iu], [s, -1.0], -c0,
                                   f"C11u[{n},{k},{ti},{tt}]")
            for m in range(M):
                for k in range(K):
                    il, iu = bl_idx[m, k, ti], bu_idx[m, k, ti]
                    if il < 0:
                        continue
                    for tt in (ti, ti - 1):
                        xvar = ps_idx[m, k, tt]
                        if xvar >= 0:
                            bld.exprow([il], [1.0], 0.0,
                                       [([xvar], [1.0], 0.0, 1.0, zeta)],
                                       f"C12l[{m},{k},{ti},{tt}]")
                            s, c0 = tangent(point.p_sat[m, k, tt])
                            bld.affine([xvar, iu], [s, -1.0], -c0,
                                       f"C12u[{m},{k},{ti},{tt}]")
                        else:
                            bld.affine([il], [1.0], 0.0,
                                       f"C12l[{m},{k},{ti},{tt}]")

    # ---- objective -------------------------------------------------------
    n_var = len(bld._names)
    c = np.zeros(n_var)
    if relaxed:
        sense = "min"
        c[tau_idx[tau_idx >= 0]] = 1.0
        c[chi_idx[chi_idx >= 0]] = 1.0
    else:
        sense = "max"
        w_sr = params.rho / tw
        w_cc = (1.0 - params.rho) / tw
        if objective_mode == "maxmin":
            c[lmin_idx[lmin_idx >= 0]] = w_sr
        else:
            c[lb_idx.ravel()] = w_sr
            c[ls_idx[ls_idx >= 0]] = w_sr
        c[al_idx[al_idx >= 0]] = w_cc
        c[au_idx[au_idx >= 0]] = -w_cc
        c[bl_idx[bl_idx >= 0]] = w_cc
        c[bu_idx[bu_idx >= 0]] = -w_cc

    meta = {
        "mode": mode,
        "objective_mode": objective_mode,
        "relaxed": relaxed,
        "window": (t0, t1),
        "dims": (N, M, K, tw),
        "pb": pb_idx, "ps": ps_idx,
        "lb": lb_idx, "ls": ls_idx,
        "mb": mb_idx, "ms": ms_idx,
        "al": al_idx, "au": au_idx, "bl": bl_idx, "bu": bu_idx,
        "tau": tau_idx, "chi": chi_idx, "lmin": lmin_idx,
        "zeta": zeta,
    }
    return bld.build(c, sense, 0.0, meta)


def build_init_problem(channel: "ChannelTensor", load: "BackgroundLoad",
                       params: "RadioParams", grid: "TimeGrid",
                       window: Optional[tuple] = None,
                       smoothing: Optional[SmoothingParams] = None,
                       mode: str = "power",
                       point: Optional[FeasiblePoint] = None) -> SubproblemSpec:
    """Feasibility-search problem: minimize total coverage/QoS penalty."""
    if point is None:
        point = init_expansion_point(channel, load, params, window)
    return build_subproblem(point, channel, load, params, grid, window,
                            smoothing, mode=mode, objective_mode="sum",
                            relaxed=True)


# =====================================================================
# Solution extraction and recovery
# =====================================================================

def extract_solution(spec: SubproblemSpec, x: np.ndarray) -> dict:
    """Expand a solver vector into named arrays keyed by the spec meta."""
    meta = spec.meta
    N, M, K, tw = meta["dims"]

    def gather(idx):
        out = np.zeros(idx.shape)
        mask = idx >= 0
        out[mask] = x[idx[mask]]
        return out

    out = {
        "p_bs": gather(meta["pb"]),
        "p_sat": gather(meta["ps"]),
        "lambda_bs": gather(meta["lb"]),
        "lambda_sat": gather(meta["ls"]),
        "mu_bs": gather(meta["mb"]),
        "mu_sat": gather(meta["ms"]),
        "a_low": gather(meta["al"]),
        "a_up": gather(meta["au"]),
        "b_low": gather(meta["bl"]),
        "b_up": gather(meta["bu"]),
    }
    if meta["relaxed"]:
        out["tau"] = gather(meta["tau"])
        out["chi"] = gather(meta["chi"])
    if meta["objective_mode"] == "maxmin":
        out["lmin"] = gather(meta["lmin"])
    return out


def point_from_solution(spec: SubproblemSpec, x: np.ndarray) -> FeasiblePoint:
    """Next SCA expansion point from a solver result (Algorithm-style update)."""
    s = extract_solution(spec, x)
    return FeasiblePoint(p_bs=s["p_bs"], p_sat=s["p_sat"],
                         mu_bs=s["mu_bs"], mu_sat=s["mu_sat"])


def recover_binary(p_bs: np.ndarray, p_sat: np.ndarray, epsilon: float = 1e-6
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Threshold powers into binary associations; sub-epsilon powers zeroed."""
    alpha = (p_bs >= epsilon).astype(int)
    beta = (p_sat >= epsilon).astype(int)
    return alpha, beta, p_bs * alpha, p_sat * beta
