"""Ray-based downlink channel model for one shared C-band carrier.

Per-ray data (path loss, phase, arrival/departure directions) is produced by a
small deterministic ray tracer over an axis-aligned box scene: direct path
(with a flat two-wall penetration penalty when blocked), single-bounce ground
and wall reflections via the image method, and optional knife-edge diffraction
over box top edges.  Rays combine coherently in the amplitude domain into one
scalar power gain per link and slot.

Antenna patterns:
    * UE: zenith-facing rectangular patch, separable cos^2m(az) * cos^2n(el)
    * BS: sector pattern with parabolic vertical/horizontal rolloffs and a
      front-to-back floor, mechanical bearing plus downtilt
    * satellite: circular-aperture Bessel pattern, boresight at a fixed aim

Units: meters, seconds, radians, linear power gains internally; file formats
use dB and degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np
from scipy.special import j1

from .scenario import elevation_azimuth

if TYPE_CHECKING:
    from .scenario import Scenario

SPEED_OF_LIGHT = 3e8          # m/s
BOLTZMANN = 1.380649e-23      # J/K
REF_TEMP = 290.0              # K, noise-figure reference


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


# =====================================================================
# Scene geometry
# =====================================================================

@dataclass
class Box:
    """Axis-aligned building: footprint center/size (m), height from ground."""

    center: np.ndarray   # (2,)
    size: np.ndarray     # (2,)
    height: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.size = np.asarray(self.size, dtype=float)

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.center[0] - self.size[0] / 2,
                         self.center[1] - self.size[1] / 2, 0.0])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.center[0] + self.size[0] / 2,
                         self.center[1] + self.size[1] / 2, self.height])


@dataclass
class SceneModel:
    """Propagation scene: boxes, ground plane flag, tracer knobs."""

    boxes: list = field(default_factory=list)
    ground: bool = True
    reflection_loss_db: float = 3.0
    enable_diffraction: bool = False
    max_rays: int = 8
    _lohi: Optional[np.ndarray] = field(default=None, repr=False)

    def box_bounds(self) -> np.ndarray:
        """(B, 2, 3) stacked lo/hi corners; cached."""
        if self._lohi is None or self._lohi.shape[0] != len(self.boxes):
            if self.boxes:
                self._lohi = np.stack([np.stack([b.lo, b.hi]) for b in self.boxes])
            else:
                self._lohi = np.zeros((0, 2, 3))
        return self._lohi


def scene_from_dict(d: dict) -> SceneModel:
    boxes = [Box(center=b["center"], size=b["size"], height=float(b["height"]))
             for b in d.get("boxes", [])]
    return SceneModel(
        boxes=boxes,
        ground=bool(d.get("ground", True)),
        reflection_loss_db=float(d.get("reflection_loss_db", 3.0)),
        enable_diffraction=bool(d.get("enable_diffraction", False)),
        max_rays=int(d.get("max_rays", 8)),
    )


def _segment_blocked(p0: np.ndarray, p1: np.ndarray, lohi: np.ndarray,
                     shrink: float = 1e-6) -> bool:
    """True if the open segment p0->p1 passes through any (slightly shrunk) box."""
    if lohi.shape[0] == 0:
        return False
    d = p1 - p0
    lo = lohi[:, 0, :] + shrink
    hi = lohi[:, 1, :] - shrink
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo - p0) / d
        t1 = (hi - p0) / d
    tmin = np.minimum(t0, t1)
    tmax = np.maximum(t0, t1)
    # degenerate axes: inside the slab -> (-inf, +inf), outside -> no hit
    flat = np.abs(d) < 1e-12
    inside = (p0 >= lo) & (p0 <= hi)
    tmin = np.where(flat, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(flat, np.where(inside, np.inf, -np.inf), tmax)
    enter = tmin.max(axis=1)
    exit_ = tmax.min(axis=1)
    hit = (enter < exit_) & (exit_ > 1e-9) & (enter < 1.0 - 1e-9)
    return bool(hit.any())


def _first_blocking_box(p0: np.ndarray, p1: np.ndarray, scene: SceneModel):
    """Index and entry parameter of the first box the segment crosses, or None."""
    lohi = scene.box_bounds()
    best = None
    d = p1 - p0
    for i in range(lohi.shape[0]):
        lo = lohi[i, 0] + 1e-6
        hi = lohi[i, 1] - 1e-6
        tmin, tmax = -np.inf, np.inf
        ok = True
        for ax in range(3):
            if abs(d[ax]) < 1e-12:
                if not (lo[ax] <= p0[ax] <= hi[ax]):
                    ok = False
                    break
                continue
            a = (lo[ax] - p0[ax]) / d[ax]
            b = (hi[ax] - p0[ax]) / d[ax]
            tmin = max(tmin, min(a, b))
            tmax = min(tmax, max(a, b))
        if ok and tmin < tmax and tmax > 1e-9 and tmin < 1 - 1e-9:
            if best is None or tmin < best[1]:
                best = (i, max(tmin, 0.0))
    return best


# =====================================================================
# Rays
# =====================================================================

@dataclass
class Ray:
    """One propagation path.

    kind: 'los' | 'wall' | 'ground' | 'reflection' | 'diffraction'
    loss: linear power loss >= 1 (free space plus penalties)
    phase: rad, electrical length plus reflection flips
    arr_dir: unit vector at the receiver pointing back along the arriving leg
    dep_dir: unit vector at the transmitter along the departing leg
    doppler: Hz (zero here: terrestrial Doppler negligible, satellite
             Doppler assumed compensated)
    """

    kind: str
    loss: float
    phase: float
    arr_dir: np.ndarray
    dep_dir: np.ndarray
    doppler: float = 0.0

    @property
    def arrival_angles(self) -> tuple[float, float]:
        """(azimuth, elevation) of arrival in the global ENU frame, rad."""
        o = np.zeros(3)
        el, az = elevation_azimuth(o, self.arr_dir)
        return az, el

    @property
    def departure_angles(self) -> tuple[float, float]:
        o = np.zeros(3)
        el, az = elevation_azimuth(o, self.dep_dir)
        return az, el


@dataclass
class RaySet:
    """All traced rays of one link plus a flat extra basic loss (linear)."""

    rays: list
    basic_loss: float = 1.0


def fspl_db(distance: float, fc_hz: float) -> float:
    """Free-space path loss in dB; distance floored at 0.1 m."""
    d = max(float(distance), 0.1)
    return 20.0 * math.log10(4.0 * math.pi * d * fc_hz / SPEED_OF_LIGHT)


def wall_ray_loss(l_fs_db: float, fc_hz: float) -> float:
    """Total dB loss of a through-wall ray: free space + two composite walls.

    Wall material mix: 70% glass, 30% concrete, frequency-dependent per-material
    penetration, plus 5 dB per outer wall.
    """
    f_ghz = fc_hz / 1e9
    l_glass = 23.0 + 0.3 * f_ghz
    l_concrete = 5.0 + 4.0 * f_ghz
    composite = -10.0 * math.log10(0.7 * 10 ** (-l_glass / 10.0)
                                   + 0.3 * 10 ** (-l_concrete / 10.0))
    return l_fs_db + 2.0 * (5.0 + composite)


def _knife_edge_loss_db(v: float) -> float:
    """ITU knife-edge approximation J(v); 0 dB below the validity region."""
    if v <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def trace_rays(scene: SceneModel, tx: np.ndarray, rx: np.ndarray,
               fc_hz: float) -> RaySet:
    """Trace direct, reflected and (optionally) diffracted paths tx -> rx."""
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    lohi = scene.box_bounds()
    lam = SPEED_OF_LIGHT / fc_hz
    rays = []

    # direct path, through-wall when blocked
    d_vec = rx - tx
    dist = float(np.linalg.norm(d_vec))
    l_fs = fspl_db(dist, fc_hz)
    blocked = _segment_blocked(tx, rx, lohi)
    loss_db = wall_ray_loss(l_fs, fc_hz) if blocked else l_fs
    rays.append(Ray(
        kind="wall" if blocked else "los",
        loss=float(db_to_linear(loss_db)),
        phase=2.0 * math.pi * dist / lam,
        arr_dir=_unit(tx - rx),
        dep_dir=_unit(rx - tx),
    ))

    # single-bounce specular reflections (image method)
    refl_candidates = []
    if scene.ground and tx[2] > 0 and rx[2] > 0:
        img = tx.copy()
        img[2] = -img[2]
        refl_candidates.append(("ground", img, None))
    for bi, box in enumerate(scene.boxes):
        lo, hi = box.lo, box.hi
        # four vertical faces: (axis, plane coord, outward sign)
        for axis, plane, sign in ((0, lo[0], -1), (0, hi[0], +1),
                                  (1, lo[1], -1), (1, hi[1], +1)):
            if sign * (tx[axis] - plane) <= 0 or sign * (rx[axis] - plane) <= 0:
                continue
            img = tx.copy()
            img[axis] = 2.0 * plane - img[axis]
            refl_candidates.append(((bi, axis, plane), img, box))
    for tag, img, box in refl_candidates:
        seg = img - rx
        if tag == "ground":
            axis, plane = 2, 0.0
        else:
            _, axis, plane = tag
        denom = seg[axis]
        if abs(denom) < 1e-12:
            continue
        s = (plane - rx[axis]) / denom
        if not (1e-9 < s < 1 - 1e-9):
            continue
        pt = rx + s * seg
        if box is not None:
            lo, hi = box.lo, box.hi
            oth = [ax for ax in range(3) if ax != axis]
            if not all(lo[ax] - 1e-9 <= pt[ax] <= hi[ax] + 1e-9 for ax in oth):
                continue
        if _segment_blocked(tx, pt, lohi) or _segment_blocked(pt, rx, lohi):
            continue
        length = float(np.linalg.norm(img - rx))
        loss_db = fspl_db(length, fc_hz) + scene.reflection_loss_db
        rays.append(Ray(
            kind="ground" if tag == "ground" else "reflection",
            loss=float(db_to_linear(loss_db)),
            phase=2.0 * math.pi * length / lam + math.pi,
            arr_dir=_unit(pt - rx),
            dep_dir=_unit(pt - tx),
        ))

    # knife-edge diffraction over the first blocking box top edge
    if scene.enable_diffraction and blocked:
        hit = _first_blocking_box(tx, rx, scene)
        if hit is not None:
            bi, t_at = hit
            top = scene.boxes[bi].height
            edge = tx + t_at * (rx - tx)
            edge = np.array([edge[0], edge[1], top])
            d1 = float(np.linalg.norm(edge - tx))
            d2 = float(np.linalg.norm(rx - edge))
            line_z = tx[2] + t_at * (rx[2] - tx[2])
            h = top - line_z
            if d1 > 0 and d2 > 0:
                v = h * math.sqrt(2.0 * (d1 + d2) / (lam * d1 * d2))
                loss_db = fspl_db(d1 + d2, fc_hz) + _knife_edge_loss_db(v)
                rays.append(Ray(
                    kind="diffraction",
                    loss=float(db_to_linear(loss_db)),
                    phase=2.0 * math.pi * (d1 + d2) / lam,
                    arr_dir=_unit(edge - rx),
                    dep_dir=_unit(edge - tx),
                ))

    rays.sort(key=lambda r: r.loss)
    return RaySet(rays=rays[:scene.max_rays])


# =====================================================================
# Antenna patterns
# =====================================================================

@dataclass
class AntennaConfig:
    """All antenna and carrier parameters of one scenario."""

    fc_hz: float
    ue_peak_gain_dbi: float = 12.8
    patch_m_order: float = 4.4
    patch_n_order: float = 4.4
    bs_gain_max_dbi: float = 17.0
    bs_bearings: np.ndarray = None      # (N,) rad from north
    bs_downtilts: np.ndarray = None     # (N,) rad below horizon
    bs_am_db: float = 30.0              # front-to-back floor
    bs_slav_db: float = 30.0            # vertical sidelobe floor
    bs_theta3db: float = math.radians(65.0)
    bs_phi3db: float = math.radians(65.0)
    sat_gain_max_dbi: float = 30.0
    sat_aperture_m: float = 1.0
    sat_basic_loss_db: float = 0.0
    sat_aim_enu: np.ndarray = None      # boresight target point

    def __post_init__(self):
        if self.bs_bearings is None:
            self.bs_bearings = np.zeros(0)
        if self.bs_downtilts is None:
            self.bs_downtilts = np.zeros(0)
        if self.sat_aim_enu is None:
            self.sat_aim_enu = np.zeros(3)


def patch_gain(az, el, m_order: float, n_order: float):
    """Relative patch gain in [0, 1] for tangent-plane angles off zenith.

    az = atan2(d_east, d_up), el = atan2(d_north, d_up) of the ray direction d
    leaving the upward-facing patch.  Zero outside the front hemisphere.
    """
    az = np.asarray(az, dtype=float)
    el = np.asarray(el, dtype=float)
    ca = np.maximum(np.cos(az), 0.0)   # clamp: zero behind the patch plane
    ce = np.maximum(np.cos(el), 0.0)
    g = ca ** (2.0 * m_order) * ce ** (2.0 * n_order)
    if g.ndim == 0:
        return float(g)
    return g


def sat_gain(theta, aperture_m: float, fc_hz: float, g_max_dbi: float):
    """Circular-aperture gain (linear) at angle theta off boresight."""
    theta = np.asarray(theta, dtype=float)
    k = 2.0 * math.pi * fc_hz / SPEED_OF_LIGHT
    x = k * aperture_m * np.sin(np.abs(theta))
    small = np.abs(x) < 1e-9
    xs = np.where(small, 1.0, x)
    rel = np.where(small, 1.0, 4.0 * (j1(xs) / xs) ** 2)
    g = db_to_linear(g_max_dbi) * rel
    if g.ndim == 0:
        return float(g)
    return g


def bs_gain(theta, phi, g_max_dbi: float, am_db: float = 30.0,
            slav_db: float = 30.0, theta3db: float = math.radians(65.0),
            phi3db: float = math.radians(65.0)):
    """Sector BS element gain (linear).

    theta: rad from the (tilted) vertical axis, boresight plane at pi/2
    phi: rad from boresight azimuth in the antenna frame
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    a_ev = -np.minimum(12.0 * ((theta - math.pi / 2) / theta3db) ** 2, slav_db)
    a_eh = -np.minimum(12.0 * (phi / phi3db) ** 2, am_db)
    a = -np.minimum(-(a_ev + a_eh), am_db)
    g = db_to_linear(g_max_dbi + a)
    if g.ndim == 0:
        return float(g)
    return g


def bs_frame(bearing: float, downtilt: float) -> np.ndarray:
    """Rows are the antenna frame axes (x boresight, y left, z tilted up) in ENU."""
    sb, cb = math.sin(bearing), math.cos(bearing)
    sd, cd = math.sin(downtilt), math.cos(downtilt)
    x = np.array([sb * cd, cb * cd, -sd])
    z = np.array([sb * sd, cb * sd, cd])
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def make_patch_pattern(cfg: AntennaConfig) -> Callable:
    """Zenith-facing UE patch; input: unit direction(s) away from the UE."""
    peak = db_to_linear(cfg.ue_peak_gain_dbi)
    m, n = cfg.patch_m_order, cfg.patch_n_order

    def pattern(dirs):
        d = np.asarray(dirs, dtype=float)
        az = np.arctan2(d[..., 0], d[..., 2])
        el = np.arctan2(d[..., 1], d[..., 2])
        return peak * patch_gain(az, el, m, n)

    return pattern


def make_bs_pattern(cfg: AntennaConfig, n: int) -> Callable:
    frame = bs_frame(float(cfg.bs_bearings[n]), float(cfg.bs_downtilts[n]))

    def pattern(dirs):
        d = np.asarray(dirs, dtype=float)
        local = d @ frame.T
        theta = np.arccos(np.clip(local[..., 2], -1.0, 1.0))
        phi = np.arctan2(local[..., 1], local[..., 0])
        return bs_gain(theta, phi, cfg.bs_gain_max_dbi, cfg.bs_am_db,
                       cfg.bs_slav_db, cfg.bs_theta3db, cfg.bs_phi3db)

    return pattern


def make_sat_pattern(cfg: AntennaConfig, sat_pos: np.ndarray) -> Callable:
    bore = _unit(np.asarray(cfg.sat_aim_enu, dtype=float) - np.asarray(sat_pos))

    def pattern(dirs):
        d = np.asarray(dirs, dtype=float)
        c = np.clip(d @ bore, -1.0, 1.0)
        return sat_gain(np.arccos(c), cfg.sat_aperture_m, cfg.fc_hz,
                        cfg.sat_gain_max_dbi)

    return pattern


def isotropic_pattern(gain_dbi: float = 0.0) -> Callable:
    g = db_to_linear(gain_dbi)

    def pattern(dirs):
        d = np.asarray(dirs, dtype=float)
        return np.full(d.shape[:-1], g) if d.ndim > 1 else g

    return pattern


# =====================================================================
# Effective link gain and noise
# =====================================================================

def effective_gain(rayset: RaySet, tx_pattern: Callable, rx_pattern: Callable,
                   t: float = 0.0) -> float:
    """Coherent power gain of one link at absolute time t (seconds).

    Amplitude combining: sum_i sqrt(Gt_i * Gr_i / (L_i * L_basic)) with the
    electrical phase of each ray (Doppler contributes 2*pi*t*f_D, zero here).
    """
    total = 0.0 + 0.0j
    for ray in rayset.rays:
        gt = float(tx_pattern(ray.dep_dir))
        gr = float(rx_pattern(ray.arr_dir))
        if gt <= 0.0 or gr <= 0.0:
            continue
        amp = math.sqrt(gt * gr / (ray.loss * rayset.basic_loss))
        ang = -ray.phase + 2.0 * math.pi * t * ray.doppler
        total += amp * complex(math.cos(ang), math.sin(ang))
    return float(abs(total) ** 2)


def noise_power(bandwidth_hz: float, noise_figure_db: float = 0.0,
                antenna_temp_k: float = REF_TEMP) -> float:
    """Receiver noise power in W over the carrier bandwidth."""
    t_eff = antenna_temp_k + REF_TEMP * (10 ** (noise_figure_db / 10.0) - 1.0)
    return BOLTZMANN * t_eff * bandwidth_hz


# =====================================================================
# Channel tensor
# =====================================================================

@dataclass
class ChannelTensor:
    """Link gains per slot: h (N, K, T) BS links, g (M, K, T) satellite links.

    g is zero outside the satellite field of view; fov stores the mask.
    """

    h: np.ndarray
    g: np.ndarray
    fov: np.ndarray = None

    def __post_init__(self):
        if self.fov is None:
            self.fov = self.g > 0

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n, k, t = self.h.shape
        m = self.g.shape[0]
        return n, m, k, t


def build_channel_tensor(scenario: "Scenario", scene: Optional[SceneModel] = None,
                         ue_positions: Optional[np.ndarray] = None,
                         sat_positions: Optional[np.ndarray] = None,
                         slots: Optional[Sequence[int]] = None) -> ChannelTensor:
    """Trace every BS-UE and in-view satellite-UE link over the time grid.

    ue_positions (K, T, 3) and sat_positions (M, T, 3) override the scenario
    geometry when given (used by channel prediction); slots selects a
    sub-window of absolute slot indices (default all).
    """
    scene = scenario.scene if scene is None else scene
    ant = scenario.antennas
    grid = scenario.grid
    N = scenario.nodes.n_bs
    M = scenario.nodes.n_sat
    K = scenario.nodes.ue_count
    slot_list = list(range(grid.n_ts)) if slots is None else list(slots)
    T = len(slot_list)

    h = np.zeros((N, K, T))
    g = np.zeros((M, K, T))
    fov = np.zeros((M, K, T), dtype=bool)

    patch = make_patch_pattern(ant)
    bs_pats = [make_bs_pattern(ant, n) for n in range(N)]
    sat_basic = db_to_linear(ant.sat_basic_loss_db)

    for ti, t in enumerate(slot_list):
        if sat_positions is None:
            sats = [scenario.sat_position_enu(m, t) for m in range(M)]
        else:
            sats = [sat_positions[m, ti] for m in range(M)]
        sat_pats = [make_sat_pattern(ant, sats[m]) for m in range(M)]
        for k in range(K):
            if ue_positions is None:
                ue = scenario.ue_position(k, t)
            else:
                ue = ue_positions[k, ti]
            for n in range(N):
                rays = trace_rays(scene, scenario.nodes.bs_positions[n], ue, ant.fc_hz)
                h[n, k, ti] = effective_gain(rays, bs_pats[n], patch,
                                             grid.slot_time(t))
            for m in range(M):
                el, _ = elevation_azimuth(ue, sats[m])
                if el < scenario.min_elevation:
                    continue
                fov[m, k, ti] = True
                rays = trace_rays(scene, sats[m], ue, ant.fc_hz)
                rays.basic_loss = sat_basic
                g[m, k, ti] = effective_gain(rays, sat_pats[m], patch,
                                             grid.slot_time(t))
    return ChannelTensor(h=h, g=g, fov=fov)


def save_channel_trace(tensor: ChannelTensor, path: str) -> None:
    """Write a columnar text trace; linear gains at full float64 precision.

    Gains are stored linear, not in dB: the log/exp composition of a dB
    round trip costs ULPs, while 17 significant digits reproduce the exact
    binary64 value.
    """
    n, m, k, t = tensor.dims
    with open(path, "w") as fh:
        fh.write("# istnsim channel trace\n")
        fh.write("# dims: N M K T\n")
        fh.write(f"{n} {m} {k} {t}\n")
        fh.write("# columns: system node ue slot gain\n")
        for ni in range(n):
            for ki in range(k):
                for ti in range(t):
                    fh.write(f"B {ni} {ki} {ti} "
                             f"{tensor.h[ni, ki, ti]:.17g}\n")
        for mi in range(m):
            for ki in range(k):
                for ti in range(t):
                    fh.write(f"S {mi} {ki} {ti} "
                             f"{tensor.g[mi, ki, ti]:.17g}\n")


def load_channel_trace(path: str) -> ChannelTensor:
    """Read a trace written by save_channel_trace; exact float round trip."""
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    n, m, k, t = (int(v) for v in lines[0].split())
    h = np.zeros((n, k, t))
    g = np.zeros((m, k, t))
    for ln in lines[1:]:
        sys_, a, b, c, val = ln.split()
        gain = float(val)
        if sys_ == "B":
            h[int(a), int(b), int(c)] = gain
        else:
            g[int(a), int(b), int(c)] = gain
    return ChannelTensor(h=h, g=g)


# =====================================================================
# CINR map
# =====================================================================

def cinr_map(scene: SceneModel, rx_points: np.ndarray, antennas: AntennaConfig,
             bs_positions: np.ndarray, sat_positions: np.ndarray,
             bs_power_w: np.ndarray, sat_power_w: np.ndarray, sigma2: float,
             threshold_db: float = 3.0,
             candidate_bs: Optional[Sequence[int]] = None,
             candidate_sats: Optional[Sequence[int]] = None,
             interferer_bs: Optional[Sequence[int]] = None,
             interferer_sats: Optional[Sequence[int]] = None,
             ) -> tuple[np.ndarray, float]:
    """Best-server CINR (dB) per receive point and the covered fraction.

    Every transmitter radiates its full budget.  A candidate from one system
    sees only the other system's transmitters as interference (in-system
    resources are orthogonal).  The interference field is computed once from
    the interferer sets (default: all transmitters) and held fixed while the
    candidate server set varies, so coverage is monotone in candidates.
    """
    rx_points = np.atleast_2d(np.asarray(rx_points, dtype=float))
    P = rx_points.shape[0]
    N = len(bs_positions)
    M = len(sat_positions)
    candidate_bs = list(range(N)) if candidate_bs is None else list(candidate_bs)
    candidate_sats = list(range(M)) if candidate_sats is None else list(candidate_sats)
    interferer_bs = list(range(N)) if interferer_bs is None else list(interferer_bs)
    interferer_sats = list(range(M)) if interferer_sats is None else list(interferer_sats)

    patch = make_patch_pattern(antennas)
    sat_basic = db_to_linear(antennas.sat_basic_loss_db)
    need_bs = sorted(set(candidate_bs) | set(interferer_bs))
    need_sat = sorted(set(candidate_sats) | set(interferer_sats))

    rx_bs = np.zeros((N, P))
    for n in need_bs:
        pat = make_bs_pattern(antennas, n)
        for p in range(P):
            rays = trace_rays(scene, np.asarray(bs_positions[n], dtype=float),
                              rx_points[p], antennas.fc_hz)
            rx_bs[n, p] = bs_power_w[n] * effective_gain(rays, pat, patch)
    rx_sat = np.zeros((M, P))
    for m in need_sat:
        pat = make_sat_pattern(antennas, sat_positions[m])
        for p in range(P):
            rays = trace_rays(scene, np.asarray(sat_positions[m], dtype=float),
                              rx_points[p], antennas.fc_hz)
            rays.basic_loss = sat_basic
            rx_sat[m, p] = sat_power_w[m] * effective_gain(rays, pat, patch)

    bs_field = rx_bs[interferer_bs].sum(axis=0) if interferer_bs else np.zeros(P)
    sat_field = rx_sat[interferer_sats].sum(axis=0) if interferer_sats else np.zeros(P)

    best = np.full(P, -np.inf)
    for n in candidate_bs:
        best = np.maximum(best, rx_bs[n] / (sat_field + sigma2))
    for m in candidate_sats:
        best = np.maximum(best, rx_sat[m] / (bs_field + sigma2))
    cinr_db = linear_to_db(np.maximum(best, 1e-300))
    coverage = float(np.mean(cinr_db >= threshold_db))
    return cinr_db, coverage
