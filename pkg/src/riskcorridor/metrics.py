"""Safety and comfort metrics computed from a finished simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import OrientedRect, rect_rect_distance
from .simulation import RingRoad, SimulationResult, StraightRoad


@dataclass(frozen=True)
class MetricsParams:
    """Thresholds that define the derived metrics, not the physics."""

    near_miss_distance: float = 3.0
    lane_band_fraction: float = 0.1
    settle_lateral_rate: float = 0.1
    min_closing_speed: float = 0.05

    def __post_init__(self) -> None:
        if self.near_miss_distance <= 0.0 or self.min_closing_speed <= 0.0:
            raise ParameterError("distance and speed thresholds must be positive")
        if not 0.0 < self.lane_band_fraction < 0.5:
            raise ParameterError("lane_band_fraction must lie in (0, 0.5)")


@dataclass(frozen=True)
class MetricsReport:
    collided: bool
    collision_time: float | None
    min_center_distance: float
    avg_center_distance: float
    min_footprint_gap: float
    near_miss: bool
    near_miss_count: int
    min_ttc: float
    max_speed: float
    max_lat_accel: float
    avg_jerk: float
    curvature_smoothness: float
    path_length: float
    lane_change_start: float | None
    lane_change_end: float | None
    lane_change_duration: float | None
    lane_change_distance: float | None
    max_radial_offset: float | None
    total_cycles: int
    fallback_cycles: int
    converged_cycles: int
    max_iterations: int
    avg_cycle_ms: float
    max_cycle_ms: float


def min_distance_series(result: SimulationResult) -> np.ndarray:
    """Per plant step, the smallest host-to-obstacle center distance.

    Center distances, not footprint gaps: the near-miss threshold is defined
    on centers, and compute_metrics tracks footprint clearance separately for
    the collision flag. With no obstacles every entry is +inf.
    """
    host = result.host_states[:, :2]
    if not result.scenario.obstacles:
        return np.full(len(host), np.inf)
    centers = result.obstacle_poses[:, :, :2]
    d = np.hypot(centers[:, :, 0] - host[:, None, 0],
                 centers[:, :, 1] - host[:, None, 1])
    return d.min(axis=1)


def _pair_distances(result: SimulationResult):
    """Center distances (M+1, n_obs) and per-step footprint gaps."""
    host = result.host_states[:, :2]
    centers = result.obstacle_poses[:, :, :2]
    d_center = np.hypot(centers[:, :, 0] - host[:, None, 0],
                        centers[:, :, 1] - host[:, None, 1])
    geom = result.scenario.geom
    gaps = np.full(d_center.shape, np.inf)
    for k in range(len(host)):
        row = result.host_states[k]
        host_fp = OrientedRect(row[0], row[1], row[3], geom.body_length, geom.body_width)
        for i, obs in enumerate(result.scenario.obstacles):
            pose = result.obstacle_poses[k, i]
            fp = OrientedRect(pose[0], pose[1], pose[2], obs.body_length, obs.body_width)
            gaps[k, i] = rect_rect_distance(host_fp, fp)
    return d_center, gaps


def _min_ttc(result: SimulationResult, params: MetricsParams) -> float:
    """Smallest time-to-collision seen in the run.

    Car-following convention: per step, the center gap to a vehicle ahead on
    the host's track, projected on the velocity axis and divided by the rate
    at which it closes. A vehicle offset sideways by more than the combined
    half-widths is not on a collision course along that axis and does not
    count; neither do steps where nothing qualifying closes faster than the
    threshold. A stopped host has no velocity axis and contributes infinity.
    """
    host = result.host_states
    axis = np.sign(host[:, 2:3]) * np.stack([np.cos(host[:, 3]),
                                             np.sin(host[:, 3])], axis=1)
    hv = host[:, 2:3] * np.stack([np.cos(host[:, 3]), np.sin(host[:, 3])], axis=1)
    op = result.obstacle_poses
    ov = op[:, :, 3:4] * np.stack([np.cos(op[:, :, 2]), np.sin(op[:, :, 2])], axis=2)
    rel_p = op[:, :, :2] - host[:, None, :2]
    rel_v = ov - hv[:, None, :]
    gap = rel_p[:, :, 0] * axis[:, None, 0] + rel_p[:, :, 1] * axis[:, None, 1]
    lateral = rel_p[:, :, 1] * axis[:, None, 0] - rel_p[:, :, 0] * axis[:, None, 1]
    closing = -(rel_v[:, :, 0] * axis[:, None, 0] + rel_v[:, :, 1] * axis[:, None, 1])
    track_width = 0.5 * (result.scenario.geom.body_width +
                         np.array([o.body_width for o in result.scenario.obstacles]))
    valid = ((gap > 0.0) & (np.abs(lateral) < track_width)
             & (closing > params.min_closing_speed))
    if not valid.any():
        return math.inf
    return float((gap[valid] / closing[valid]).min())


def _lane_change(result: SimulationResult, params: MetricsParams):
    scenario = result.scenario
    road = scenario.road
    if not isinstance(road, StraightRoad):
        return None, None, None, None
    y0 = result.host_states[0, 1]
    source = min(range(road.n_lanes), key=lambda i: abs(road.lane_center(i) - y0))
    c_src = road.lane_center(source)
    c_tgt = road.lane_center(scenario.target_lane)
    if source == scenario.target_lane:
        return None, None, None, None
    band = params.lane_band_fraction * road.lane_width
    y = result.host_states[:, 1]
    vy = result.host_states[:, 2] * np.sin(result.host_states[:, 3])
    started = np.abs(y - c_src) > band
    if not started.any():
        return None, None, None, None
    i0 = int(np.argmax(started))
    settled = (np.abs(y - c_tgt) < band) & (np.abs(vy) < params.settle_lateral_rate)
    settled[:i0] = False
    if not settled.any():
        return float(result.times[i0]), None, None, None
    i1 = int(np.argmax(settled))
    return (float(result.times[i0]), float(result.times[i1]),
            float(result.times[i1] - result.times[i0]),
            float(result.host_states[i1, 0] - result.host_states[i0, 0]))


def compute_metrics(result: SimulationResult,
                    params: MetricsParams | None = None) -> MetricsReport:
    params = params or MetricsParams()
    scenario = result.scenario
    states = result.host_states
    dt = scenario.plant_dt

    if scenario.obstacles:
        d_center, gaps = _pair_distances(result)
        series = d_center.min(axis=1)
        min_center = float(series.min())
        avg_center = float(series.mean())
        min_gap = float(gaps.min())
        per_obstacle_min = d_center.min(axis=0)
        hit = [result.collided and o.obstacle_id == result.collision_obstacle
               for o in scenario.obstacles]
        near_count = int(sum(1 for i, d in enumerate(per_obstacle_min)
                             if d < params.near_miss_distance and not hit[i]))
        near_miss = min_center < params.near_miss_distance and not result.collided
        ttc = _min_ttc(result, params)
    else:
        min_center = math.inf
        avg_center = math.inf
        min_gap = math.inf
        near_count = 0
        near_miss = False
        ttc = math.inf

    lat_accel = states[:, 2] ** 2 * np.abs(np.tan(states[:, 4])) / scenario.geom.wheelbase
    kappa = np.tan(states[:, 4]) / scenario.geom.wheelbase
    dkappa = np.diff(kappa) / dt
    smoothness = 1.0 / (1.0 + float(np.mean(dkappa**2))) if len(dkappa) else 1.0
    if len(result.host_controls) >= 2:
        jerk = float(np.mean(np.abs(np.diff(result.host_controls[:, 0])))) / dt
    else:
        jerk = 0.0

    start, end, duration, distance = _lane_change(result, params)
    seg = np.diff(states[:, :2], axis=0)
    path_length = float(np.hypot(seg[:, 0], seg[:, 1]).sum())

    if isinstance(scenario.road, RingRoad):
        c = scenario.road.center
        radius = scenario.road.lane_radius(scenario.target_lane)
        radial = np.hypot(states[:, 0] - c[0], states[:, 1] - c[1]) - radius
        max_radial = float(np.abs(radial).max())
    else:
        max_radial = None

    wall = [c.wall_ms for c in result.cycles]
    return MetricsReport(
        collided=result.collided,
        collision_time=result.collision_time,
        min_center_distance=min_center,
        avg_center_distance=avg_center,
        min_footprint_gap=min_gap,
        near_miss=near_miss,
        near_miss_count=near_count,
        min_ttc=ttc,
        max_speed=float(states[:, 2].max()),
        max_lat_accel=float(lat_accel.max()),
        avg_jerk=jerk,
        curvature_smoothness=smoothness,
        path_length=path_length,
        lane_change_start=start,
        lane_change_end=end,
        lane_change_duration=duration,
        lane_change_distance=distance,
        max_radial_offset=max_radial,
        total_cycles=len(result.cycles),
        fallback_cycles=result.n_fallback,
        converged_cycles=sum(1 for c in result.cycles if c.converged),
        max_iterations=max((c.iterations for c in result.cycles), default=0),
        avg_cycle_ms=float(np.mean(wall)) if wall else 0.0,
        max_cycle_ms=float(np.max(wall)) if wall else 0.0,
    )
