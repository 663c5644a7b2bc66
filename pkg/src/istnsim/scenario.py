"""Scenario definition: time grid, node geometry, LEO orbits, UE routes, background load.

Everything geometric lives in a local east-north-up (ENU) frame anchored at a
configurable origin on a spherical Earth.  Distances are meters, times seconds,
angles radians (config files use degrees, converted on load).

Features:
    * TimeGrid with QoS-period and prediction-window slicing
    * circular-orbit propagation (spherical Earth, optional nothing else)
    * piecewise-linear UE routes parameterized by arc length
    * field-of-view sets for satellite links (elevation mask, inclusive)
    * clamped-Poisson background user draws per node and slot
    * YAML scenario loader producing the full simulation bundle
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
import yaml

if TYPE_CHECKING:
    from .channel import AntennaConfig, SceneModel
    from .model import RadioParams
    from .sca import SmoothingParams

# =====================================================================
# Physical constants
# =====================================================================

EARTH_RADIUS = 6371e3        # m, spherical model
EARTH_MU = 3.986004418e14    # m^3/s^2 standard gravitational parameter


# =====================================================================
# Time grid
# =====================================================================

@dataclass(frozen=True)
class TimeGrid:
    """Discrete slot grid of one optimization window.

    n_ts: number of time slots
    ts_duration: slot length in seconds
    qos_period: slots per QoS averaging period
    pred_window: slots per prediction sub-window
    """

    n_ts: int
    ts_duration: float
    qos_period: int
    pred_window: int

    def __post_init__(self):
        if self.n_ts < 1:
            raise ValueError("n_ts must be >= 1")
        if self.ts_duration <= 0:
            raise ValueError("ts_duration must be positive")
        for name in ("qos_period", "pred_window"):
            v = getattr(self, name)
            if not (1 <= v <= self.n_ts):
                raise ValueError(f"{name} must lie in [1, n_ts]")

    @property
    def horizon(self) -> float:
        """Total window duration in seconds."""
        return self.n_ts * self.ts_duration

    def slot_time(self, t: int) -> float:
        """Absolute time of slot t (slots are 0-based, sampled at slot start)."""
        return t * self.ts_duration

    def qos_periods(self) -> list[tuple[int, int]]:
        """Half-open slot ranges [(start, stop), ...]; the last may be partial."""
        out = []
        start = 0
        while start < self.n_ts:
            out.append((start, min(start + self.qos_period, self.n_ts)))
            start += self.qos_period
        return out

    def pred_windows(self) -> list[tuple[int, int]]:
        """Half-open prediction sub-window ranges; the last may be partial."""
        out = []
        start = 0
        while start < self.n_ts:
            out.append((start, min(start + self.pred_window, self.n_ts)))
            start += self.pred_window
        return out


# =====================================================================
# Orbits
# =====================================================================

@dataclass(frozen=True)
class OrbitState:
    """Circular LEO orbit.

    altitude: m above the spherical Earth surface
    inclination: rad
    raan: rad, right ascension of ascending node
    phase: rad, argument of latitude at epoch (t = 0)
    """

    altitude: float
    inclination: float
    raan: float = 0.0
    phase: float = 0.0

    @property
    def radius(self) -> float:
        return EARTH_RADIUS + self.altitude

    @property
    def mean_motion(self) -> float:
        """rad/s"""
        return math.sqrt(EARTH_MU / self.radius ** 3)

    @property
    def period(self) -> float:
        """Orbital period in seconds."""
        return 2.0 * math.pi / self.mean_motion


def propagate_orbit(orbit: OrbitState, t: float, grid: TimeGrid) -> np.ndarray:
    """ECEF position (m) of the satellite at slot index t (may be fractional).

    Earth rotation is not modeled: the frame is Earth-fixed and the ground
    track advances only by orbital motion over the short windows simulated.
    """
    u = orbit.phase + orbit.mean_motion * grid.slot_time(t)
    r = orbit.radius
    cu, su = math.cos(u), math.sin(u)
    cO, sO = math.cos(orbit.raan), math.sin(orbit.raan)
    ci, si = math.cos(orbit.inclination), math.sin(orbit.inclination)
    return np.array([
        r * (cO * cu - sO * su * ci),
        r * (sO * cu + cO * su * ci),
        r * (su * si),
    ])


def origin_ecef(lat: float, lon: float) -> np.ndarray:
    """ECEF position of a surface point at geocentric lat/lon (rad)."""
    cl, sl = math.cos(lat), math.sin(lat)
    co, so = math.cos(lon), math.sin(lon)
    return EARTH_RADIUS * np.array([cl * co, cl * so, sl])


def enu_basis(lat: float, lon: float) -> np.ndarray:
    """Rows are the east, north, up unit vectors at (lat, lon) in ECEF."""
    cl, sl = math.cos(lat), math.sin(lat)
    co, so = math.cos(lon), math.sin(lon)
    east = np.array([-so, co, 0.0])
    north = np.array([-sl * co, -sl * so, cl])
    up = np.array([cl * co, cl * so, sl])
    return np.vstack([east, north, up])


def ecef_to_enu(pos: np.ndarray, lat: float, lon: float) -> np.ndarray:
    """Convert an ECEF point to local ENU meters about the given origin."""
    return enu_basis(lat, lon) @ (np.asarray(pos, dtype=float) - origin_ecef(lat, lon))


def elevation_azimuth(observer: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Elevation above horizontal and azimuth (clockwise from north), both rad.

    Both points are ENU.  Azimuth is in [0, 2*pi); elevation in [-pi/2, pi/2].
    """
    d = np.asarray(target, dtype=float) - np.asarray(observer, dtype=float)
    horiz = math.hypot(d[0], d[1])
    el = math.atan2(d[2], horiz)
    az = math.atan2(d[0], d[1]) % (2.0 * math.pi)
    return el, az


# =====================================================================
# Routes
# =====================================================================

@dataclass
class Route:
    """Piecewise-linear ground route with per-waypoint times.

    waypoints: (W, 3) ENU meters
    times: (W,) seconds, strictly increasing, times[0] = 0
    """

    waypoints: np.ndarray
    times: np.ndarray
    arc: np.ndarray = field(init=False)   # cumulative arc length per waypoint

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        self.times = np.asarray(self.times, dtype=float)
        if self.waypoints.shape[0] != self.times.shape[0]:
            raise ValueError("waypoints and times must have equal length")
        if self.waypoints.shape[0] >= 2 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        seg = np.diff(self.waypoints, axis=0)
        self.arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])

    @classmethod
    def from_speeds(cls, waypoints: Sequence, speeds: Sequence[float]) -> "Route":
        """Build from per-segment speeds (m/s); travel times follow from lengths."""
        wp = np.atleast_2d(np.asarray(waypoints, dtype=float))
        sp = np.asarray(speeds, dtype=float)
        if sp.shape[0] != wp.shape[0] - 1:
            raise ValueError("need one speed per segment")
        if np.any(sp <= 0):
            raise ValueError("speeds must be positive")
        seg_len = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        times = np.concatenate([[0.0], np.cumsum(seg_len / sp)])
        return cls(wp, times)

    @property
    def total_length(self) -> float:
        return float(self.arc[-1])

    def distance_at(self, t_seconds: float) -> float:
        """Arc-length distance traveled by absolute time t (clamped to the route)."""
        return float(np.interp(t_seconds, self.times, self.arc))


def route_position(route: Route, d: float) -> np.ndarray:
    """Position at arc-length d along the route; d clamps to [0, total_length]."""
    d = min(max(d, 0.0), route.total_length)
    i = int(np.searchsorted(route.arc, d, side="right")) - 1
    i = min(max(i, 0), route.waypoints.shape[0] - 2) if route.waypoints.shape[0] > 1 else 0
    if route.waypoints.shape[0] == 1:
        return route.waypoints[0].copy()
    seg = route.arc[i + 1] - route.arc[i]
    frac = 0.0 if seg <= 0 else (d - route.arc[i]) / seg
    return route.waypoints[i] + frac * (route.waypoints[i + 1] - route.waypoints[i])


# =====================================================================
# Nodes and load
# =====================================================================

@dataclass
class NodeSet:
    """Static node inventory.

    bs_positions: (N, 3) ENU meters
    bs_capacity: (N,) max co-scheduled users per BS (psi)
    sat_capacity: (M,) max co-scheduled users per satellite
    ue_count: K
    """

    bs_positions: np.ndarray
    bs_capacity: np.ndarray
    sat_capacity: np.ndarray
    ue_count: int

    def __post_init__(self):
        self.bs_positions = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        self.bs_capacity = np.asarray(self.bs_capacity, dtype=int)
        self.sat_capacity = np.asarray(self.sat_capacity, dtype=int)

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def n_sat(self) -> int:
        return self.sat_capacity.shape[0]


@dataclass
class BackgroundLoad:
    """Background (already-scheduled) user counts per node and slot.

    bs_load: (N, T) integers, 0 <= eta < capacity
    sat_load: (M, T)
    """

    bs_load: np.ndarray
    sat_load: np.ndarray


def draw_background_load(
    bs_means: np.ndarray,
    sat_means: np.ndarray,
    bs_caps: np.ndarray,
    sat_caps: np.ndarray,
    seed: int,
    grid: TimeGrid,
) -> BackgroundLoad:
    """Per-slot independent Poisson draws, clamped to capacity minus one.

    The clamp keeps at least one schedulable slot per node so capacity
    constraints stay satisfiable.
    """
    rng = np.random.default_rng(seed)
    bs_means = np.asarray(bs_means, dtype=float)
    sat_means = np.asarray(sat_means, dtype=float)
    bs = rng.poisson(bs_means[:, None], size=(bs_means.shape[0], grid.n_ts))
    sat = rng.poisson(sat_means[:, None], size=(sat_means.shape[0], grid.n_ts))
    bs = np.minimum(bs, np.asarray(bs_caps, dtype=int)[:, None] - 1)
    sat = np.minimum(sat, np.asarray(sat_caps, dtype=int)[:, None] - 1)
    return BackgroundLoad(bs_load=bs.astype(int), sat_load=sat.astype(int))


# =====================================================================
# Scenario bundle
# =====================================================================

@dataclass
class Scenario:
    """Full simulation scenario: geometry, grid, radio, scene, smoothing."""

    grid: TimeGrid
    nodes: NodeSet
    orbits: list[OrbitState]
    routes: list[Route]
    origin_lat: float                 # rad
    origin_lon: float                 # rad
    min_elevation: float              # rad, satellite FoV mask (inclusive)
    radio: "RadioParams"
    antennas: "AntennaConfig"
    scene: "SceneModel"
    smoothing: "SmoothingParams"
    bs_load_means: np.ndarray = None  # (N,) Poisson means
    sat_load_means: np.ndarray = None
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        if len(self.orbits) != self.nodes.n_sat:
            raise ValueError("one orbit per satellite required")
        if len(self.routes) != self.nodes.ue_count:
            raise ValueError("one route per UE required")

    # -- geometry helpers ------------------------------------------------

    def ue_distance(self, k: int, t: float) -> float:
        """Arc distance of UE k at slot t."""
        return self.routes[k].distance_at(self.grid.slot_time(t))

    def ue_position(self, k: int, t: float) -> np.ndarray:
        return route_position(self.routes[k], self.ue_distance(k, t))

    def ue_velocity(self, k: int, t: int) -> float:
        """Backward-difference speed (m/s) over slot t; zero at t = 0."""
        if t <= 0:
            return 0.0
        d1 = self.ue_distance(k, t)
        d0 = self.ue_distance(k, t - 1)
        return (d1 - d0) / self.grid.ts_duration

    def sat_position_enu(self, m: int, t: float) -> np.ndarray:
        ecef = propagate_orbit(self.orbits[m], t, self.grid)
        return ecef_to_enu(ecef, self.origin_lat, self.origin_lon)

    def draw_load(self, seed: Optional[int] = None) -> BackgroundLoad:
        return draw_background_load(
            self.bs_load_means, self.sat_load_means,
            self.nodes.bs_capacity, self.nodes.sat_capacity,
            self.seed if seed is None else seed, self.grid,
        )


def fov_mask(scenario: Scenario, t: float) -> np.ndarray:
    """(M, K) boolean mask of satellite-UE pairs with elevation >= the mask angle."""
    M = scenario.nodes.n_sat
    K = scenario.nodes.ue_count
    mask = np.zeros((M, K), dtype=bool)
    sats = [scenario.sat_position_enu(m, t) for m in range(M)]
    for k in range(K):
        ue = scenario.ue_position(k, t)
        for m in range(M):
            el, _ = elevation_azimuth(ue, sats[m])
            mask[m, k] = el >= scenario.min_elevation
    return mask


def fov_set(scenario: Scenario, t: float) -> set[tuple[int, int]]:
    """Set of (m, k) pairs visible at slot t (elevation mask inclusive)."""
    mask = fov_mask(scenario, t)
    return {(m, k) for m, k in zip(*np.nonzero(mask))}


# =====================================================================
# Config loading
# =====================================================================

def _route_from_dict(d: dict) -> Route:
    wp = d["waypoints"]
    if "speeds" in d and "times" in d:
        raise ValueError("route takes speeds or times, not both")
    if "speeds" in d:
        return Route.from_speeds(wp, d["speeds"])
    if "times" in d:
        return Route(np.asarray(wp, dtype=float), np.asarray(d["times"], dtype=float))
    raise ValueError("route needs speeds or times")


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a Scenario from a parsed config dictionary (file units: deg, dB)."""
    from .channel import AntennaConfig, noise_power, scene_from_dict
    from .model import RadioParams
    from .sca import SmoothingParams

    grid = TimeGrid(**{k: cfg["grid"][k] for k in
                       ("n_ts", "ts_duration", "qos_period", "pred_window")})
    origin = cfg.get("origin", {"lat_deg": 0.0, "lon_deg": 0.0})

    rd = cfg["radio"]
    bs_cfg, sat_cfg, ue_cfg = rd["bs"], rd["sat"], rd["ue"]

    bs_list = cfg["bs"]
    N = len(bs_list)
    bs_pos = np.array([b["pos"] for b in bs_list], dtype=float)
    bearings = np.array([math.radians(b.get("bearing_deg", 0.0)) for b in bs_list])
    tilts = np.array([math.radians(b.get(
        "downtilt_deg", bs_cfg.get("downtilt_deg", 10.0))) for b in bs_list])

    sats = cfg["sats"]
    M = len(sats)
    orbits = [OrbitState(
        altitude=float(s["altitude_m"]),
        inclination=math.radians(s["inclination_deg"]),
        raan=math.radians(s.get("raan_deg", 0.0)),
        phase=math.radians(s.get("phase_deg", 0.0)),
    ) for s in sats]

    ue_height = float(ue_cfg.get("height_m", 1.0))
    routes = []
    for u in cfg["ues"]:
        r = _route_from_dict(u["route"])
        wp = r.waypoints.copy()
        wp[:, 2] = ue_height
        routes.append(Route(wp, r.times))
    K = len(routes)

    nodes = NodeSet(
        bs_positions=bs_pos,
        bs_capacity=np.full(N, int(bs_cfg["capacity"])),
        sat_capacity=np.full(M, int(sat_cfg["capacity"])),
        ue_count=K,
    )

    sigma2 = noise_power(float(rd["bandwidth_hz"]),
                         float(rd.get("noise_figure_db", 0.0)),
                         float(rd.get("antenna_temp_k", 290.0)))
    radio = RadioParams(
        bs_budget_w=np.full(N, 10 ** (float(bs_cfg["power_dbm"]) / 10.0) * 1e-3),
        sat_budget_w=np.full(M, 10 ** (float(sat_cfg["power_dbw"]) / 10.0)),
        noise_w=np.full(K, sigma2),
        psi_bs=np.full(N, int(bs_cfg["capacity"])),
        psi_sat=np.full(M, int(sat_cfg["capacity"])),
        rate_min_bps=np.full(K, float(rd.get("rate_min_bps_hz", 0.0))),
        rho=float(rd.get("rho", 0.9)),
        ue_count=K,
    )

    pattern = bs_cfg.get("pattern", {})
    antennas = AntennaConfig(
        fc_hz=float(rd["fc_hz"]),
        ue_peak_gain_dbi=float(ue_cfg.get("peak_gain_dbi", 12.8)),
        patch_m_order=float(ue_cfg.get("patch_m_order", 4.4)),
        patch_n_order=float(ue_cfg.get("patch_n_order", 4.4)),
        bs_gain_max_dbi=float(bs_cfg.get("gain_max_dbi", 17.0)),
        bs_bearings=bearings,
        bs_downtilts=tilts,
        bs_am_db=float(pattern.get("am_db", 30.0)),
        bs_slav_db=float(pattern.get("slav_db", 30.0)),
        bs_theta3db=math.radians(float(pattern.get("theta3db_deg", 65.0))),
        bs_phi3db=math.radians(float(pattern.get("phi3db_deg", 65.0))),
        sat_gain_max_dbi=float(sat_cfg.get("gain_max_dbi", 30.0)),
        sat_aperture_m=float(sat_cfg.get("aperture_m", 1.0)),
        sat_basic_loss_db=float(sat_cfg.get("basic_loss_db", 0.0)),
        sat_aim_enu=np.asarray(sat_cfg.get("aim_enu", [0.0, 0.0, 0.0]), dtype=float),
    )

    scene = scene_from_dict(cfg.get("scene", {}))
    sm = cfg.get("smoothing", {})
    smoothing = SmoothingParams(zeta=float(sm.get("zeta", 10.0)),
                                epsilon=float(sm.get("epsilon", 1e-6)))

    return Scenario(
        grid=grid,
        nodes=nodes,
        orbits=orbits,
        routes=routes,
        origin_lat=math.radians(float(origin.get("lat_deg", 0.0))),
        origin_lon=math.radians(float(origin.get("lon_deg", 0.0))),
        min_elevation=math.radians(float(rd.get("fov_min_elevation_deg", 60.0))),
        radio=radio,
        antennas=antennas,
        scene=scene,
        smoothing=smoothing,
        bs_load_means=np.full(N, float(bs_cfg.get("background_mean", 0.0))),
        sat_load_means=np.full(M, float(sat_cfg.get("background_mean", 0.0))),
        seed=int(cfg.get("seed", 0)),
        name=str(cfg.get("name", "scenario")),
    )


def load_scenario(path: str) -> Scenario:
    """Load a scenario from a YAML config file."""
    with open(path, "r") as fh:
        cfg = yaml.safe_load(fh)
    return scenario_from_dict(cfg)
