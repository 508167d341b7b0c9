"""Closed-loop simulation: replan at a fixed rate, actuate at a faster one.

A scenario bundles the road, the host, scripted obstacles, and every model
parameter, so a single object fully specifies an experiment and can be
shipped to worker processes. Each planning cycle predicts obstacle poses
over the horizon, generates a corridor, solves the tracking problem, then
feeds the plant the plan's controls until the next cycle. A cycle whose
corridor or solve fails falls back to the previous plan, indexed by absolute
time so stale plans keep producing sensible controls.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corridor import ConvexRegion, GrowthParams, KinematicLimits, generate_corridor
from .errors import InfeasibleSeedError, ParameterError, SolverFailureError
from .geometry import OrientedRect, rect_rect_distance, wrap_angle
from .ilqr import CostWeights, SolveReport, SolverOptions, Trajectory, plan
from .obstacles import (ArcMotion, ObstacleVehicle, StraightMotion, WaypointMotion,
                        from_motion)
from .risk import HorizonRiskField, RiskFieldParams, RiskGrid, risk_grid
from .vehicle import (N_CONTROLS, N_STATES, VehicleGeometry, VehicleLimits, VehicleState,
                      step_array)


@dataclass(frozen=True)
class StraightRoad:
    """Parallel lanes along +x; lane 0 is centered on y = 0."""

    n_lanes: int = 2
    lane_width: float = 3.5

    def __post_init__(self) -> None:
        if self.n_lanes < 1 or not self.lane_width > 0.0:
            raise ParameterError("need at least one lane of positive width")

    def lane_center(self, lane: int) -> float:
        if not 0 <= lane < self.n_lanes:
            raise ParameterError(f"lane {lane} outside 0..{self.n_lanes - 1}")
        return lane * self.lane_width

    def bounds(self) -> tuple[float, float]:
        return (-0.5 * self.lane_width, (self.n_lanes - 0.5) * self.lane_width)


@dataclass(frozen=True)
class RingRoad:
    """Concentric circular lanes; lane_radii are centerline radii."""

    center: tuple[float, float] = (0.0, 0.0)
    lane_radii: tuple[float, ...] = (20.0, 16.5)
    lane_width: float = 3.5
    direction: int = 1  # +1 counterclockwise, -1 clockwise

    def __post_init__(self) -> None:
        if not self.lane_radii or any(r <= 0.0 for r in self.lane_radii):
            raise ParameterError("lane_radii must be positive")
        if self.direction not in (-1, 1):
            raise ParameterError("direction must be +1 or -1")

    def lane_radius(self, lane: int) -> float:
        if not 0 <= lane < len(self.lane_radii):
            raise ParameterError(f"lane {lane} outside 0..{len(self.lane_radii) - 1}")
        return self.lane_radii[lane]

    def angle_of(self, x: float, y: float) -> float:
        return math.atan2(y - self.center[1], x - self.center[0])


Road = StraightRoad | RingRoad


@dataclass(frozen=True)
class Scenario:
    """A fully specified closed-loop experiment."""

    name: str
    road: Road
    host: VehicleState
    target_lane: int
    target_speed: float
    duration: float
    obstacles: tuple[ObstacleVehicle, ...] = ()
    horizon: int = 30
    plan_dt: float = 0.1
    plant_dt: float = 0.01
    replan_dt: float = 0.1
    init_margin: float = 0.3
    perturb_position: float = 0.0
    perturb_speed: float = 0.0
    geom: VehicleGeometry = field(default_factory=VehicleGeometry)
    limits: VehicleLimits = field(default_factory=VehicleLimits)
    kin_limits: KinematicLimits = field(default_factory=KinematicLimits)
    growth: GrowthParams = field(default_factory=GrowthParams)
    risk: RiskFieldParams = field(default_factory=RiskFieldParams)
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self) -> None:
        if self.duration <= 0.0 or self.horizon < 1:
            raise ParameterError("duration must be positive and horizon >= 1")
        for name in ("plan_dt", "plant_dt", "replan_dt"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive")
        ratio = self.replan_dt / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ParameterError("replan_dt must be an integer multiple of plant_dt")
        if self.perturb_position < 0.0 or self.perturb_speed < 0.0:
            raise ParameterError("perturbation magnitudes must be non-negative")
        ids = [o.obstacle_id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ParameterError(f"duplicate obstacle ids {ids}")

    def corridor_band(self) -> tuple[float, float] | None:
        """Lateral road band for corridor clipping, inset by half the host width.

        Ring roads return None: curved edges have no axis-aligned band, so
        the road there constrains through the reference, not the corridor.
        """
        if isinstance(self.road, StraightRoad):
            lo, hi = self.road.bounds()
            inset = 0.5 * self.geom.body_width
            return (lo + inset, hi - inset)
        return None


def build_reference(scenario: Scenario, start: VehicleState, t0: float,
                    horizon: int, dt: float) -> np.ndarray:
    """(horizon+1, 6) state reference advancing at the target speed.

    Straight roads track the target lane center; ring roads track the target
    lane circle from the host's current angular position.
    """
    k = np.arange(horizon + 1)
    ref = np.zeros((horizon + 1, N_STATES))
    v = scenario.target_speed
    road = scenario.road
    if isinstance(road, StraightRoad):
        ref[:, 0] = start.x + v * k * dt
        ref[:, 1] = road.lane_center(scenario.target_lane)
        ref[:, 2] = v
    else:
        radius = road.lane_radius(scenario.target_lane)
        omega = road.direction * v / radius
        ang = road.angle_of(start.x, start.y) + omega * k * dt
        ref[:, 0] = road.center[0] + radius * np.cos(ang)
        ref[:, 1] = road.center[1] + radius * np.sin(ang)
        ref[:, 2] = v
        ref[:, 3] = wrap_angle(ang + road.direction * 0.5 * math.pi)
    return ref


def predict_obstacles(obstacles: Sequence[ObstacleVehicle], t0: float, horizon: int,
                      dt: float) -> list[list[ObstacleVehicle]]:
    """Scripted obstacle snapshots for steps 0..horizon from absolute t0."""
    return [[o.at_time(t0 + k * dt) for o in obstacles] for k in range(horizon + 1)]


def perturb_scenario(scenario: Scenario, rng: np.random.Generator) -> Scenario:
    """Randomized copy: obstacle start poses and speeds get Gaussian noise.

    Arc motions are perturbed along the arc (angle shift of s/R) so obstacles
    stay on their lane circle; waypoint scripts are shifted rigidly.
    """
    sp, sv = scenario.perturb_position, scenario.perturb_speed
    if sp == 0.0 and sv == 0.0:
        return scenario
    new = []
    for o in scenario.obstacles:
        m = o.motion
        if isinstance(m, StraightMotion):
            m = replace(m, x0=m.x0 + rng.normal(0.0, sp), y0=m.y0 + rng.normal(0.0, sp),
                        speed=max(0.0, m.speed + rng.normal(0.0, sv)))
        elif isinstance(m, ArcMotion):
            dang = rng.normal(0.0, sp) / m.radius
            sign = 1.0 if m.angular_rate >= 0.0 else -1.0
            rate = m.angular_rate + sign * rng.normal(0.0, sv) / m.radius
            m = replace(m, angle0=m.angle0 + dang, angular_rate=rate)
        elif isinstance(m, WaypointMotion):
            dx, dy = rng.normal(0.0, sp), rng.normal(0.0, sp)
            m = replace(m, points=tuple((px + dx, py + dy) for px, py in m.points))
        else:
            new.append(o)
            continue
        new.append(from_motion(m, o.obstacle_id, o.body_length, o.body_width))
    return replace(scenario, obstacles=tuple(new))


@dataclass(frozen=True)
class CycleLog:
    """Planner outcome of one replanning cycle."""

    cycle: int
    t: float
    fallback: bool
    converged: bool
    iterations: int
    cost: float
    gradient_norm: float
    max_violation: float
    status: str
    wall_ms: float


@dataclass(frozen=True)
class SimulationResult:
    scenario: Scenario
    times: np.ndarray            # (M+1,) plant timestamps
    host_states: np.ndarray      # (M+1, 6)
    host_controls: np.ndarray    # (M, 2)
    obstacle_poses: np.ndarray   # (M+1, n_obs, 4) of x, y, heading, speed
    cycles: tuple[CycleLog, ...]
    corridors: tuple[tuple[ConvexRegion, ...], ...]
    plans: tuple[Trajectory, ...]
    collided: bool
    collision_time: float | None
    collision_obstacle: int | None
    risk_grids: dict[float, RiskGrid]

    @property
    def n_fallback(self) -> int:
        return sum(1 for c in self.cycles if c.fallback)


def _obstacle_pose_rows(obstacles, t) -> np.ndarray:
    rows = np.empty((len(obstacles), 4))
    for i, o in enumerate(obstacles):
        snap = o.at_time(t)
        rows[i] = (snap.x, snap.y, snap.heading, snap.speed)
    return rows


def _host_footprint(state_row, geom: VehicleGeometry) -> OrientedRect:
    return OrientedRect(state_row[0], state_row[1], state_row[3],
                        geom.body_length, geom.body_width)


def _grid_bounds(scenario: Scenario, host_state, pad: float = 25.0):
    xs = [host_state[0]] + [o.x for o in scenario.obstacles]
    ys = [host_state[1]] + [o.y for o in scenario.obstacles]
    return (min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)


def check_initial_clearance(scenario: Scenario) -> None:
    """Reject scenarios whose start already violates the safety margin."""
    host_fp = OrientedRect(scenario.host.x, scenario.host.y, scenario.host.theta,
                           scenario.geom.body_length, scenario.geom.body_width)
    for o in scenario.obstacles:
        gap = rect_rect_distance(host_fp, o.footprint())
        if gap < scenario.growth.delta_safe:
            raise InfeasibleSeedError(
                f"obstacle {o.obstacle_id} starts {gap:.2f} m from the host, "
                f"below the {scenario.growth.delta_safe} m safety margin")


def simulate(scenario: Scenario, options: SolverOptions | None = None,
             snapshot_times: Sequence[float] = (),
             grid_resolution: float = 0.5) -> SimulationResult:
    """Run the closed loop for the scenario's duration.

    ``snapshot_times`` requests risk-field grids at the nearest replanning
    cycle. The first cycle must produce a plan; later cycle failures reuse
    the previous plan and are flagged in the log. The loop stops early on a
    footprint collision.
    """
    options = options or SolverOptions()
    check_initial_clearance(scenario)
    steps_per_cycle = int(round(scenario.replan_dt / scenario.plant_dt))
    n_cycles = max(1, int(round(scenario.duration / scenario.replan_dt)))
    n_plant = n_cycles * steps_per_cycle
    shift = max(1, int(round(scenario.replan_dt / scenario.plan_dt)))

    times = np.arange(n_plant + 1) * scenario.plant_dt
    host_states = np.empty((n_plant + 1, N_STATES))
    host_controls = np.zeros((n_plant, N_CONTROLS))
    obstacle_poses = np.empty((n_plant + 1, len(scenario.obstacles), 4))
    host_states[0] = scenario.host.as_array()
    obstacle_poses[0] = _obstacle_pose_rows(scenario.obstacles, 0.0)

    cycles: list[CycleLog] = []
    corridors: list[tuple[ConvexRegion, ...]] = []
    plans: list[Trajectory] = []
    risk_grids: dict[float, RiskGrid] = {}
    snapshot_cycles = {int(round(t / scenario.replan_dt)): float(t) for t in snapshot_times}

    current_plan: Trajectory | None = None
    plan_t0 = 0.0
    prev_controls: np.ndarray | None = None
    collided = False
    collision_time: float | None = None
    collision_obstacle: int | None = None
    step_idx = 0

    for cycle in range(n_cycles):
        t_cycle = cycle * scenario.replan_dt
        state = VehicleState.from_array(host_states[step_idx])
        wall_start = time.perf_counter()
        fallback = False
        report: SolveReport | None = None
        try:
            predictions = predict_obstacles(scenario.obstacles, t_cycle,
                                            scenario.horizon, scenario.plan_dt)
            regions = generate_corridor(state, scenario.horizon, scenario.plan_dt,
                                        predictions, scenario.corridor_band(),
                                        scenario.growth, scenario.kin_limits,
                                        scenario.geom, scenario.init_margin, t0=t_cycle)
            field_ = HorizonRiskField(predictions, scenario.risk, state)
            reference = build_reference(scenario, state, t_cycle,
                                        scenario.horizon, scenario.plan_dt)
            u_init = None
            if prev_controls is not None:
                u_init = np.vstack([prev_controls[shift:],
                                    np.repeat(prev_controls[-1:], shift, axis=0)])
            traj, report = plan(state, reference, regions, field_, scenario.weights,
                                options, scenario.geom, scenario.limits,
                                scenario.plan_dt, u_init=u_init)
            current_plan, plan_t0 = traj, t_cycle
            prev_controls = traj.controls
            corridors.append(tuple(regions))
            plans.append(traj)
        except (InfeasibleSeedError, SolverFailureError):
            if current_plan is None:
                raise
            fallback = True
            corridors.append(())
            plans.append(current_plan)
        wall_ms = (time.perf_counter() - wall_start) * 1e3

        if cycle in snapshot_cycles and not fallback:
            grid = risk_grid(_grid_bounds(scenario, host_states[step_idx]),
                             grid_resolution,
                             [o.at_time(t_cycle) for o in scenario.obstacles],
                             state, scenario.risk)
            risk_grids[snapshot_cycles[cycle]] = grid

        if fallback:
            cycles.append(CycleLog(cycle, t_cycle, True, False, 0, math.nan, math.nan,
                                   math.nan, "fallback to previous plan", wall_ms))
        else:
            cycles.append(CycleLog(cycle, t_cycle, False, report.converged,
                                   report.iterations, report.cost, report.gradient_norm,
                                   report.final_max_violation, report.status, wall_ms))

        for _ in range(steps_per_cycle):
            t_now = times[step_idx]
            idx = int(math.floor((t_now - plan_t0) / scenario.plan_dt + 1e-9))
            idx = min(max(idx, 0), current_plan.horizon - 1)
            u = current_plan.controls[idx]
            host_controls[step_idx] = u
            host_states[step_idx + 1] = step_array(host_states[step_idx], u,
                                                   scenario.plant_dt,
                                                   scenario.geom.wheelbase,
                                                   scenario.limits.phi_max)
            step_idx += 1
            t_next = times[step_idx]
            obstacle_poses[step_idx] = _obstacle_pose_rows(scenario.obstacles, t_next)
            host_fp = _host_footprint(host_states[step_idx], scenario.geom)
            for i, o in enumerate(scenario.obstacles):
                pose = obstacle_poses[step_idx, i]
                obs_fp = OrientedRect(pose[0], pose[1], pose[2],
                                      o.body_length, o.body_width)
                if rect_rect_distance(host_fp, obs_fp) <= 0.0:
                    collided = True
                    collision_time = float(t_next)
                    collision_obstacle = o.obstacle_id
                    break
            if collided:
                break
        if collided:
            break

    end = step_idx + 1
    return SimulationResult(
        scenario=scenario,
        times=times[:end],
        host_states=host_states[:end],
        host_controls=host_controls[:end - 1],
        obstacle_poses=obstacle_poses[:end],
        cycles=tuple(cycles),
        corridors=tuple(corridors),
        plans=tuple(plans),
        collided=collided,
        collision_time=collision_time,
        collision_obstacle=collision_obstacle,
        risk_grids=risk_grids,
    )
