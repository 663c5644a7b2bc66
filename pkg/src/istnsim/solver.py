"""Log-barrier interior-point solver for SubproblemSpec programs.

Path-following with damped Newton centering.  The barrier covers the three
functional constraint kinds (affine, log-affine, concave-exp) plus the
mandatory variable boxes; all slack and curvature algebra is assembled
sparsely, so one Newton step costs a handful of sparse matrix products and
one LU factorization regardless of problem structure.

Feasibility phase: when the start point is not strictly interior, a single
slack variable s0 is appended to every functional row (g_i(x) - s0 <= 0)
and minimized until the iterate is strictly feasible; the phase reuses the
same barrier machinery on the augmented problem.

Multipliers come from the barrier optimality conditions (lambda_i = 1 /
(t * slack_i)), which makes the returned point an approximate KKT point with
complementarity gap m/t; kkt_residuals re-verifies this against the original
unscaled problem data.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from .sca import SubproblemSpec

_DOMAIN_EPS = 1e-300


@dataclass
class SolverConfig:
    tol_gap: float = 1e-8           # target complementarity gap m/t
    stat_tol: float = 1e-7          # target stationarity residual (inf norm)
    t0: float = 10.0                # initial barrier weight
    mu_factor: float = 20.0         # barrier weight growth per outer round
    newton_tol: float = 1e-10       # centering stop on half squared decrement
    max_newton_per_t: int = 60
    max_total_newton: int = 4000
    armijo: float = 0.25
    backtrack: float = 0.5
    max_backtracks: int = 60
    phase1_margin: float = 1e-10    # strict-interior margin to leave phase 1
    start_shift_tol: float = 1e-4   # max start violation absorbed by row shifts
    t_max: float = 1e14             # barrier weight ceiling (float64 merit)
    refine_max_n: int = 800         # NNLS multiplier refinement size limit
    ridge: float = 0.0              # optional Hessian regularization
    verbose: bool = False
    log_stream: object = None       # file-like; defaults to stderr


@dataclass
class SolverResult:
    x: np.ndarray
    objective: float                # in the spec's own sense, offset included
    status: str                     # 'optimal' | 'infeasible' | 'max_iter'
    newton_iterations: int
    phase1_newton: int
    comp_gap: float
    stat_residual: float
    max_violation: float
    t_final: float
    multipliers: dict = field(default_factory=dict)
    wall_time: float = 0.0


class _Work:
    """Scaled problem data plus barrier evaluation and assembly routines."""

    def __init__(self, spec: SubproblemSpec):
        s = np.where(spec.var_scale > 0, spec.var_scale, 1.0)
        self.scale = s
        self.n = spec.n_var
        self.A = spec.A.multiply(s[None, :]).tocsr()
        self.b = spec.b
        self.U = spec.U.multiply(s[None, :]).tocsr()
        self.dlog = spec.d
        self.W = spec.W.multiply(s[None, :]).tocsr()
        self.e = spec.e
        self.E = spec.E.multiply(s[None, :]).tocsr()
        self.fexp = spec.f
        self.T = spec.T.multiply(s[None, :]).tocsr()
        self.tw = spec.tw
        self.tz = spec.tzeta
        self.tsv = spec.ts
        self.term_ptr = spec.term_ptr
        self.n_exp = spec.f.shape[0]
        self.row_of_term = np.repeat(
            np.arange(self.n_exp), np.diff(spec.term_ptr)) \
            if self.n_exp else np.zeros(0, dtype=int)
        # selector: per-row sums over terms
        if self.n_exp and self.tw.size:
            self.R = sp.csr_matrix(
                (np.ones(self.tw.size), (self.row_of_term,
                                         np.arange(self.tw.size))),
                shape=(self.n_exp, self.tw.size))
        else:
            self.R = sp.csr_matrix((self.n_exp, self.tw.size))
        self.lb = spec.lb / s
        self.ub = spec.ub / s
        sign = -1.0 if spec.sense == "max" else 1.0
        self.c = sign * spec.c * s
        self.m = (self.b.shape[0] + self.dlog.shape[0] + self.n_exp
                  + 2 * self.n)
        self._perm = None               # fill-reducing order, set lazily

    def factor_solve(self, H: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
        """Solve H x = rhs with a bandwidth-reduced factorization.

        The slot-chain structure scatters badly under COLAMD; a Cuthill-
        McKee order computed once from the (fixed) sparsity pattern more
        than halves the factor time.
        """
        if self._perm is None:
            self._perm = reverse_cuthill_mckee(H.tocsr(), symmetric_mode=True)
        p = self._perm
        lu = splu(H[p][:, p].tocsc(), permc_spec="NATURAL")
        x = np.empty_like(rhs)
        x[p] = lu.solve(rhs[p])
        return x

    def state(self, y: np.ndarray) -> Optional[dict]:
        """Slacks and intermediates at y, or None when out of domain."""
        slb = y - self.lb
        sub = self.ub - y
        if np.any(slb <= 0) or np.any(sub <= 0):
            return None
        sa = self.b - self.A @ y
        if sa.size and sa.min() <= 0:
            return None
        arg = self.W @ y + self.e
        if arg.size and arg.min() <= _DOMAIN_EPS:
            return None
        sl = np.log(arg) - (self.U @ y + self.dlog) if arg.size else arg
        if sl.size and sl.min() <= 0:
            return None
        if self.n_exp:
            u = self.T @ y + self.tsv
            eterm = np.exp(-self.tz * u)
            sums = np.add.reduceat(self.tw * (1.0 - eterm),
                                   self.term_ptr[:-1])
            se = sums - (self.E @ y + self.fexp)
            if se.min() <= 0:
                return None
        else:
            u = np.zeros(0)
            eterm = np.zeros(0)
            se = np.zeros(0)
        return {"slb": slb, "sub": sub, "sa": sa, "arg": arg, "sl": sl,
                "u": u, "eterm": eterm, "se": se}

    def barrier(self, st: dict) -> float:
        val = -(np.log(st["slb"]).sum() + np.log(st["sub"]).sum())
        if st["sa"].size:
            val -= np.log(st["sa"]).sum()
        if st["sl"].size:
            val -= np.log(st["sl"]).sum()
        if st["se"].size:
            val -= np.log(st["se"]).sum()
        return float(val)

    def grad_hess(self, y: np.ndarray, st: dict) -> tuple[np.ndarray, sp.csc_matrix]:
        grad = -1.0 / st["slb"] + 1.0 / st["sub"]
        diag = 1.0 / st["slb"] ** 2 + 1.0 / st["sub"] ** 2
        parts = [sp.diags(diag)]
        if st["sa"].size:
            inv = 1.0 / st["sa"]
            grad = grad + self.A.T @ inv
            parts.append(self.A.T @ sp.diags(inv ** 2) @ self.A)
        if st["sl"].size:
            inv_sl = 1.0 / st["sl"]
            inv_arg = 1.0 / st["arg"]
            D = (self.U - self.W.multiply(inv_arg[:, None])).tocsr()
            grad = grad + D.T @ inv_sl
            parts.append(D.T @ sp.diags(inv_sl ** 2) @ D)
            parts.append(self.W.T @ sp.diags(inv_arg ** 2 * inv_sl) @ self.W)
        if st["se"].size:
            inv_se = 1.0 / st["se"]
            coef = self.tw * self.tz * st["eterm"]          # per term
            P = (self.E - self.R @ sp.diags(coef) @ self.T).tocsr()
            grad = grad + P.T @ inv_se
            parts.append(P.T @ sp.diags(inv_se ** 2) @ P)
            curv = self.tw * self.tz ** 2 * st["eterm"] * inv_se[self.row_of_term]
            parts.append(self.T.T @ sp.diags(curv) @ self.T)
        H = parts[0]
        for p in parts[1:]:
            H = H + p
        return grad, H.tocsc()

    def max_g(self, st: dict) -> float:
        """Largest functional-constraint value (boxes excluded)."""
        worst = -np.inf
        for key in ("sa", "sl", "se"):
            if st[key].size:
                worst = max(worst, float(-st[key].min()))
        return worst


def _center(work: _Work, y: np.ndarray, t: float, cfg: SolverConfig,
            budget: int, log, tag: str,
            stop_when=None) -> tuple[np.ndarray, int, bool]:
    """Damped Newton on t*c.y + barrier(y); returns (y, steps, stopped_early)."""
    steps = 0
    st = work.state(y)
    if st is None:
        raise ValueError("newton centering started outside the domain")
    # anchor the linear term so the merit stays O(barrier) in magnitude;
    # otherwise t*c.y at large t drowns Armijo decreases in float64 ulps
    y_ref = y.copy()
    while steps < min(budget, cfg.max_newton_per_t):
        grad_phi, H = work.grad_hess(y, st)
        grad = t * work.c + grad_phi
        if cfg.ridge > 0:
            H = H + cfg.ridge * sp.eye(work.n, format="csc")
        try:
            step = -work.factor_solve(H, grad)
        except RuntimeError:
            H = (H + 1e-10 * sp.eye(work.n, format="csc")).tocsc()
            step = -work.factor_solve(H, grad)
        decrement = float(-grad @ step)
        if not math.isfinite(decrement) or decrement <= 0:
            break
        # analytic cap at the box walls, then backtracking on the full merit
        with np.errstate(divide="ignore"):
            room_lo = np.where(step < 0, (work.lb - y) / step, np.inf)
            room_hi = np.where(step > 0, (work.ub - y) / step, np.inf)
        alpha = min(1.0, 0.99 * float(np.minimum(room_lo, room_hi).min()))
        merit0 = t * float(work.c @ (y - y_ref)) + work.barrier(st)
        ok = False
        for _ in range(cfg.max_backtracks):
            y_new = y + alpha * step
            st_new = work.state(y_new)
            if st_new is not None:
                merit_new = t * float(work.c @ (y_new - y_ref)) \
                    + work.barrier(st_new)
                if merit_new <= merit0 - cfg.armijo * alpha * decrement:
                    ok = True
                    break
            alpha *= cfg.backtrack
        if not ok:
            break
        stalled = merit0 - merit_new <= 4.0 * np.spacing(max(abs(merit0), 1.0))
        y, st = y_new, st_new
        steps += 1
        if log:
            log.write(f"{tag},{t:.3e},{steps},{merit_new:.12e},"
                      f"{decrement:.3e},{work.max_g(st):.3e}\n")
        if stop_when is not None and stop_when(y, st):
            return y, steps, True
        if stalled or decrement / 2.0 <= cfg.newton_tol:
            break
    return y, steps, False


def _augment_phase1(spec: SubproblemSpec, x0: np.ndarray, viol: float
                    ) -> SubproblemSpec:
    """Append the uniform infeasibility slack s0 to every functional row."""
    n = spec.n_var
    ones = lambda mat: sp.csr_matrix(
        (-np.ones(mat.shape[0]),
         (np.arange(mat.shape[0]), np.full(mat.shape[0], n))),
        shape=(mat.shape[0], n + 1))
    zcol = lambda mat: sp.hstack([mat, sp.csr_matrix((mat.shape[0], 1))]).tocsr()
    s0 = viol + 1.0
    c = np.zeros(n + 1)
    c[n] = 1.0
    return SubproblemSpec(
        n_var=n + 1,
        var_names=spec.var_names + ["_s0"],
        lb=np.concatenate([spec.lb, [-10.0 * (1.0 + abs(viol))]]),
        ub=np.concatenate([spec.ub, [s0 + 10.0]]),
        c=c,
        sense="min",
        obj_offset=0.0,
        A=(zcol(spec.A) + ones(spec.A)).tocsr() if spec.A.shape[0]
        else zcol(spec.A),
        b=spec.b,
        aff_names=spec.aff_names,
        U=(zcol(spec.U) + ones(spec.U)).tocsr() if spec.U.shape[0]
        else zcol(spec.U),
        d=spec.d,
        W=zcol(spec.W),
        e=spec.e,
        log_names=spec.log_names,
        E=(zcol(spec.E) + ones(spec.E)).tocsr() if spec.E.shape[0]
        else zcol(spec.E),
        f=spec.f,
        T=zcol(spec.T),
        tw=spec.tw,
        tzeta=spec.tzeta,
        ts=spec.ts,
        term_ptr=spec.term_ptr,
        exp_names=spec.exp_names,
        start=np.concatenate([x0, [s0]]),
        var_scale=np.concatenate([spec.var_scale, [max(1.0, abs(s0))]]),
        meta={"phase1": True},
    )


def _shift_start_rows(work: _Work, y: np.ndarray,
                      cfg: SolverConfig) -> Optional[dict]:
    """Relax rows the start misses by dust; returns the state or None.

    A warm start built from the previous outer iterate can sit on (or a
    hair past) rows whose gradients have decayed to near zero; no strictly
    interior point is then reachable without O(1) detours and the uniform
    slack phase stalls.  Shifting those rows by the start's own violation
    keeps the barrier strictly feasible, and the shifts stay orders of
    magnitude below the rounding tolerances applied downstream.
    """
    margin = 10.0 * cfg.phase1_margin
    sa = work.b - work.A @ y if work.b.size else np.zeros(0)
    arg = work.W @ y + work.e
    if arg.size and arg.min() <= _DOMAIN_EPS:
        return None
    sl = np.log(arg) - (work.U @ y + work.dlog) if arg.size else np.zeros(0)
    if work.n_exp:
        u = work.T @ y + work.tsv
        sums = np.add.reduceat(work.tw * (1.0 - np.exp(-work.tz * u)),
                               work.term_ptr[:-1])
        se = sums - (work.E @ y + work.fexp)
    else:
        se = np.zeros(0)
    worst = -min([s.min() for s in (sa, sl, se) if s.size], default=0.0)
    if worst >= cfg.start_shift_tol:
        return None
    if sa.size:
        work.b = work.b + np.maximum(0.0, margin - sa)
    if sl.size:
        work.dlog = work.dlog - np.maximum(0.0, margin - sl)
    if se.size:
        work.fexp = work.fexp - np.maximum(0.0, margin - se)
    return work.state(y)


def _pick_start(work: _Work, spec: SubproblemSpec,
                x0: Optional[np.ndarray]) -> np.ndarray:
    """First domain-valid candidate (boxes clipped, log args positive)."""
    # pad matches the builder's own start padding so built starts pass as-is
    span = np.maximum(work.ub - work.lb, 1e-12)
    pad = 1e-9 * span
    for cand in ([x0 / work.scale] if x0 is not None else []) + [spec.start / work.scale]:
        y = np.clip(cand, work.lb + pad, work.ub - pad)
        arg = work.W @ y + work.e
        if arg.size == 0 or arg.min() > _DOMAIN_EPS:
            return y
    raise ValueError("no domain-valid start point (log arguments nonpositive)")


def solve(spec: SubproblemSpec, cfg: Optional[SolverConfig] = None,
          x0: Optional[np.ndarray] = None) -> SolverResult:
    """Solve a SubproblemSpec to KKT tolerance; optional warm start x0."""
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    log = (cfg.log_stream or sys.stderr) if cfg.verbose else None
    if log:
        log.write("phase,t,iter,merit,decrement,max_g\n")
    work = _Work(spec)
    y = _pick_start(work, spec, x0)
    phase1_newton = 0

    st = work.state(y)
    if st is None or work.max_g(st) >= -cfg.phase1_margin:
        st = _shift_start_rows(work, y, cfg)
    if st is None or work.max_g(st) >= -cfg.phase1_margin:
        # far from feasible: minimize the uniform slack.  Phase 1 starts
        # from a deeply interior box point: s0 absorbs whatever row
        # violations the clip creates, while box margins of ~1e-9 would
        # leave the barrier Hessian too ill-conditioned for Newton to move.
        span = np.maximum(work.ub - work.lb, 1e-12)
        for pad_frac in (1e-3, 1e-5, 1e-7, 1e-9):
            y_deep = np.clip(y, work.lb + pad_frac * span,
                             work.ub - pad_frac * span)
            arg = work.W @ y_deep + work.e
            if arg.size == 0 or arg.min() > _DOMAIN_EPS:
                y = y_deep
                break
        arg = work.W @ y + work.e
        sl_raw = (work.U @ y + work.dlog) - np.log(arg) if arg.size else arg
        viol = max(
            float((work.A @ y - work.b).max(initial=-np.inf)),
            float(sl_raw.max(initial=-np.inf)),
        )
        if work.n_exp:
            u = work.T @ y + work.tsv
            sums = np.add.reduceat(work.tw * (1.0 - np.exp(-work.tz * u)),
                                   work.term_ptr[:-1])
            viol = max(viol, float(((work.E @ y + work.fexp) - sums).max()))
        aug = _augment_phase1(spec, y * work.scale, viol)
        w1 = _Work(aug)
        y1 = aug.start / w1.scale

        def interior(_y, _st):
            part = w1.state(_y)
            return part is not None and _feasible_part(work, _y[:-1] * w1.scale[:-1]
                                                       / work.scale, cfg)

        t = cfg.t0
        while phase1_newton < cfg.max_total_newton:
            y1, it, early = _center(w1, y1, t, cfg,
                                    cfg.max_total_newton - phase1_newton,
                                    log, "p1", stop_when=interior)
            phase1_newton += it
            if early or w1.m / t <= cfg.tol_gap or t >= cfg.t_max:
                break
            t = min(t * cfg.mu_factor, cfg.t_max)
        y = np.clip(y1[:-1] * w1.scale[:-1] / work.scale,
                    work.lb + 1e-9 * np.maximum(work.ub - work.lb, 1e-12),
                    work.ub - 1e-9 * np.maximum(work.ub - work.lb, 1e-12))
        st = work.state(y)
        if st is None or work.max_g(st) >= 0:
            x = y * work.scale
            return SolverResult(
                x=x, objective=spec.objective_value(x), status="infeasible",
                newton_iterations=phase1_newton, phase1_newton=phase1_newton,
                comp_gap=float("nan"), stat_residual=float("nan"),
                max_violation=spec.max_violation(x), t_final=0.0,
                wall_time=time.perf_counter() - started)

    # main path following
    t = cfg.t0
    total = 0
    status = "max_iter"
    while total + phase1_newton < cfg.max_total_newton:
        y, it, _ = _center(work, y, t, cfg,
                           cfg.max_total_newton - total - phase1_newton,
                           log, "p2")
        total += it
        if work.m / t <= cfg.tol_gap:
            status = "optimal"
            break
        if t >= cfg.t_max:
            break
        t = min(t * cfg.mu_factor, cfg.t_max)

    x = y * work.scale
    st = work.state(y)
    mult = _multipliers(work, st, t)
    if spec.n_var <= cfg.refine_max_n:
        mult = _refine_multipliers(spec, x, mult, t)
    stat = float(np.abs(_kkt_vector(spec, x, mult)).max())
    return SolverResult(
        x=x,
        objective=spec.objective_value(x),
        status=status,
        newton_iterations=total + phase1_newton,
        phase1_newton=phase1_newton,
        comp_gap=work.m / t,
        stat_residual=stat,
        max_violation=spec.max_violation(x),
        t_final=t,
        multipliers=mult,
        wall_time=time.perf_counter() - started,
    )


def _feasible_part(work: _Work, y: np.ndarray, cfg: SolverConfig) -> bool:
    y = np.clip(y, work.lb, work.ub)
    st = work.state(y)
    return st is not None and work.max_g(st) < -cfg.phase1_margin


def _multipliers(work: _Work, st: dict, t: float) -> dict:
    # functional-row multipliers are invariant under variable scaling; the
    # box slacks live in scaled space, so convert those back to x-space
    return {
        "affine": 1.0 / (t * st["sa"]) if st["sa"].size else np.zeros(0),
        "log": 1.0 / (t * st["sl"]) if st["sl"].size else np.zeros(0),
        "exp": 1.0 / (t * st["se"]) if st["se"].size else np.zeros(0),
        "lb": 1.0 / (t * st["slb"] * work.scale),
        "ub": 1.0 / (t * st["sub"] * work.scale),
    }


def _refine_multipliers(spec: SubproblemSpec, x: np.ndarray, mult: dict,
                        t: float) -> dict:
    """Nonnegative least-squares polish of the barrier multipliers.

    The slack-based estimates carry an O(|grad Phi|/t) stationarity error
    that float64 cannot drive below ~1e-2 on badly conditioned final
    centerings.  Re-fitting the active constraints' multipliers against the
    objective gradient removes that error; inactive rows keep zero.
    """
    from scipy.optimize import nnls

    thr = 1.0 / math.sqrt(max(t, 1.0))
    cols = []
    keys = []
    if mult["affine"].size:
        dense_a = None
        for i in np.nonzero(mult["affine"] >= thr)[0]:
            if dense_a is None:
                dense_a = spec.A.toarray()
            cols.append(dense_a[i])
            keys.append(("affine", i))
    if mult["log"].size:
        arg = spec.W @ x + spec.e
        D = (spec.U - spec.W.multiply((1.0 / arg)[:, None])).tocsr()
        dense_d = None
        for i in np.nonzero(mult["log"] >= thr)[0]:
            if dense_d is None:
                dense_d = D.toarray()
            cols.append(dense_d[i])
            keys.append(("log", i))
    if mult["exp"].size:
        u = spec.T @ x + spec.ts
        coef = spec.tw * spec.tzeta * np.exp(-spec.tzeta * u)
        n_exp = spec.f.shape[0]
        row_of_term = np.repeat(np.arange(n_exp), np.diff(spec.term_ptr))
        R = sp.csr_matrix(
            (np.ones(coef.size), (row_of_term, np.arange(coef.size))),
            shape=(n_exp, coef.size))
        P = (spec.E - R @ sp.diags(coef) @ spec.T).toarray()
        for i in np.nonzero(mult["exp"] >= thr)[0]:
            cols.append(P[i])
            keys.append(("exp", i))
    n = spec.n_var
    for j in np.nonzero(mult["lb"] >= thr)[0]:
        col = np.zeros(n)
        col[j] = -1.0
        cols.append(col)
        keys.append(("lb", j))
    for j in np.nonzero(mult["ub"] >= thr)[0]:
        col = np.zeros(n)
        col[j] = 1.0
        cols.append(col)
        keys.append(("ub", j))
    if not cols or len(cols) > 4000:
        return mult

    sign = -1.0 if spec.sense == "max" else 1.0
    rhs = -(sign * spec.c)
    try:
        lam, _ = nnls(np.column_stack(cols), rhs, maxiter=10 * len(cols) + 200)
    except RuntimeError:
        return mult
    refined = {k: np.zeros_like(v) for k, v in mult.items()}
    for val, (kind, i) in zip(lam, keys):
        refined[kind][i] = val
    old = float(np.abs(_kkt_vector(spec, x, mult)).max())
    new = float(np.abs(_kkt_vector(spec, x, refined)).max())
    return refined if new <= old else mult


def _kkt_vector(spec: SubproblemSpec, x: np.ndarray, mult: dict) -> np.ndarray:
    sign = -1.0 if spec.sense == "max" else 1.0
    r = sign * spec.c.copy()
    if mult["affine"].size:
        r = r + spec.A.T @ mult["affine"]
    if mult["log"].size:
        arg = spec.W @ x + spec.e
        D = (spec.U - spec.W.multiply((1.0 / arg)[:, None])).tocsr()
        r = r + D.T @ mult["log"]
    if mult["exp"].size:
        u = spec.T @ x + spec.ts
        coef = spec.tw * spec.tzeta * np.exp(-spec.tzeta * u)
        n_exp = spec.f.shape[0]
        row_of_term = np.repeat(np.arange(n_exp), np.diff(spec.term_ptr))
        R = sp.csr_matrix(
            (np.ones(coef.size), (row_of_term, np.arange(coef.size))),
            shape=(n_exp, coef.size))
        P = (spec.E - R @ sp.diags(coef) @ spec.T).tocsr()
        r = r + P.T @ mult["exp"]
    r = r - mult["lb"] + mult["ub"]
    return r


def kkt_residuals(spec: SubproblemSpec, result: SolverResult) -> dict:
    """Re-verify KKT conditions of a solve against the original problem data.

    Returns stationarity (inf norm), worst complementarity product, primal
    feasibility (max violation, <= 0 feasible), and the dual sign check.
    """
    x = result.x
    mult = result.multipliers
    stat = float(np.abs(_kkt_vector(spec, x, mult)).max())

    comp = 0.0
    if mult["affine"].size:
        comp = max(comp, float(np.abs(mult["affine"]
                                      * (spec.b - spec.A @ x)).max()))
    if mult["log"].size:
        arg = spec.W @ x + spec.e
        sl = np.log(arg) - (spec.U @ x + spec.d)
        comp = max(comp, float(np.abs(mult["log"] * sl).max()))
    if mult["exp"].size:
        se = -spec.eval_exp(x)
        comp = max(comp, float(np.abs(mult["exp"] * se).max()))
    comp = max(comp, float(np.abs(mult["lb"] * (x - spec.lb)).max()))
    comp = max(comp, float(np.abs(mult["ub"] * (spec.ub - x)).max()))

    dual_min = min(
        float(mult["affine"].min(initial=0.0)),
        float(mult["log"].min(initial=0.0)),
        float(mult["exp"].min(initial=0.0)),
        float(mult["lb"].min(initial=0.0)),
        float(mult["ub"].min(initial=0.0)),
    )
    return {
        "stationarity": stat,
        "complementarity": comp,
        "primal_violation": spec.max_violation(x),
        "dual_min": dual_min,
    }
