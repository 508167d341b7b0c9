"""Result-file writers and readers.

Every file starts with a "schema=1" line. Numbers are serialized with repr,
which round-trips doubles exactly, so reruns with the same config and seed
produce byte-identical files. Wall-clock measurements are quarantined in
timing.txt; everything else is deterministic.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .ilqr import SolveReport, Trajectory
from .metrics import MetricsReport
from .montecarlo import BatchResult
from .simulation import SimulationResult

SCHEMA_LINE = "schema=1"

TRAJECTORY_COLUMNS = ("t", "x", "y", "v", "theta", "phi", "phi_dot", "a",
                      "phi_ddot", "stage_cost", "region_id")
HOST_COLUMNS = ("t", "x", "y", "v", "theta", "phi", "phi_dot", "a", "phi_ddot")
OBSTACLE_COLUMNS = ("t", "obstacle_id", "x", "y", "heading", "speed")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_lines(path, lines) -> None:
    Path(path).write_text("\n".join([SCHEMA_LINE, *lines]) + "\n",
                          encoding="utf-8", newline="\n")


def _read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise SchemaError(f"{Path(path).name}: expected first line '{SCHEMA_LINE}'")
    return lines[1:]


def write_trajectory_csv(path, trajectory: Trajectory, stage_costs) -> None:
    """One row per step; the terminal row has nan controls."""
    lines = [",".join(TRAJECTORY_COLUMNS)]
    n = trajectory.horizon
    for k in range(n + 1):
        u = trajectory.controls[k] if k < n else (math.nan, math.nan)
        row = [trajectory.times[k], *trajectory.states[k], u[0], u[1], stage_costs[k]]
        lines.append(",".join(_fmt(v) for v in row) + f",{k}")
    _write_lines(path, lines)


def _read_csv(path, expected_header) -> np.ndarray:
    lines = _read_lines(path)
    if not lines or tuple(lines[0].split(",")) != expected_header:
        raise SchemaError(f"{Path(path).name}: unexpected header")
    return np.array([[float(v) for v in line.split(",")] for line in lines[1:]])


def read_trajectory_csv(path) -> np.ndarray:
    return _read_csv(path, TRAJECTORY_COLUMNS)


def write_host_csv(path, result: SimulationResult) -> None:
    lines = [",".join(HOST_COLUMNS)]
    n = len(result.host_controls)
    for k in range(len(result.times)):
        u = result.host_controls[k] if k < n else (math.nan, math.nan)
        row = [result.times[k], *result.host_states[k], u[0], u[1]]
        lines.append(",".join(_fmt(v) for v in row))
    _write_lines(path, lines)


def read_host_csv(path) -> np.ndarray:
    return _read_csv(path, HOST_COLUMNS)


def write_obstacles_csv(path, result: SimulationResult) -> None:
    lines = [",".join(OBSTACLE_COLUMNS)]
    for k in range(len(result.times)):
        for i, obs in enumerate(result.scenario.obstacles):
            pose = result.obstacle_poses[k, i]
            row = [result.times[k], obs.obstacle_id, *pose]
            lines.append(",".join(_fmt(v) for v in row))
    _write_lines(path, lines)


def read_obstacles_csv(path) -> np.ndarray:
    return _read_csv(path, OBSTACLE_COLUMNS)


def _region_fields(region) -> list:
    return [region.x_lower, region.x_upper, region.y_lower, region.y_upper]


def write_corridor_txt(path, regions) -> None:
    """Planner corridor: 'k t x_lower x_upper y_lower y_upper' per step."""
    lines = ["k t x_lower x_upper y_lower y_upper"]
    for k, region in enumerate(regions):
        lines.append(" ".join([str(k), _fmt(region.t),
                               *(_fmt(v) for v in _region_fields(region))]))
    _write_lines(path, lines)


def read_corridor_txt(path) -> np.ndarray:
    lines = _read_lines(path)
    return np.array([[float(v) for v in line.split()[1:]] for line in lines[1:]])


def write_corridors_txt(path, result: SimulationResult) -> None:
    """Simulation corridors, one line per cycle and step; fallback cycles
    contribute no lines."""
    lines = ["cycle k t x_lower x_upper y_lower y_upper"]
    for cycle, regions in enumerate(result.corridors):
        for k, region in enumerate(regions):
            lines.append(" ".join([str(cycle), str(k), _fmt(region.t),
                                   *(_fmt(v) for v in _region_fields(region))]))
    _write_lines(path, lines)


def read_corridors_txt(path) -> np.ndarray:
    lines = _read_lines(path)
    return np.array([[float(v) for v in line.split()] for line in lines[1:]])


def write_cycles_txt(path, result: SimulationResult) -> None:
    """Per-cycle planner log without wall-clock times."""
    lines = ["cycle t fallback converged iterations cost gradient_norm max_violation status"]
    for c in result.cycles:
        lines.append(" ".join([str(c.cycle), _fmt(c.t), _fmt(c.fallback),
                               _fmt(c.converged), str(c.iterations), _fmt(c.cost),
                               _fmt(c.gradient_norm), _fmt(c.max_violation), c.status]))
    _write_lines(path, lines)


def write_timing_txt(path, cycle_wall_ms, total_s: float) -> None:
    """Wall-clock timings; the one result file that is not reproducible."""
    lines = ["# wall-clock measurements, expected to differ between runs",
             f"total_s={total_s!r}"]
    for i, ms in enumerate(cycle_wall_ms):
        lines.append(f"cycle_{i}_ms={ms!r}")
    _write_lines(path, lines)


_METRIC_FIELDS = ("collided", "collision_time", "min_center_distance",
                  "avg_center_distance", "min_footprint_gap", "near_miss",
                  "near_miss_count", "min_ttc", "max_speed", "max_lat_accel",
                  "avg_jerk", "curvature_smoothness", "path_length",
                  "lane_change_start", "lane_change_end", "lane_change_duration",
                  "lane_change_distance", "max_radial_offset",
                  "total_cycles", "fallback_cycles", "converged_cycles",
                  "max_iterations")


def write_metrics_txt(path, report: MetricsReport) -> None:
    """Deterministic metric values; cycle wall-times live in timing.txt."""
    lines = []
    for name in _METRIC_FIELDS:
        value = getattr(report, name)
        if value is None:
            # A lane change that started but never settled is worth telling
            # apart from one that was never attempted.
            if name.startswith("lane_change") and report.lane_change_start is not None:
                text = "incomplete"
            else:
                text = "n/a"
        else:
            text = _fmt(value)
        lines.append(f"{name}={text}")
    _write_lines(path, lines)


def read_key_values(path) -> dict[str, str]:
    out = {}
    for line in _read_lines(path):
        if line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def write_solve_report_txt(path, report: SolveReport) -> None:
    lines = [f"converged={_fmt(report.converged)}",
             f"status={report.status}",
             f"iterations={report.iterations}",
             f"cost={_fmt(report.cost)}",
             f"gradient_norm={_fmt(report.gradient_norm)}",
             f"regularization={_fmt(report.regularization)}",
             f"final_max_violation={_fmt(report.final_max_violation)}",
             "cost_trace=" + ",".join(_fmt(c) for c in report.cost_trace)]
    _write_lines(path, lines)


def write_runs_csv(path, batch: BatchResult) -> None:
    header = ("run", "collided", "near_miss", "min_center_distance",
              "avg_center_distance", "min_footprint_gap", "min_ttc",
              "fallback_cycles", "converged_cycles", "total_cycles")
    lines = [",".join(header)]
    for r in batch.runs:
        lines.append(",".join([str(r.run), _fmt(r.collided), _fmt(r.near_miss),
                               _fmt(r.min_center_distance), _fmt(r.avg_center_distance),
                               _fmt(r.min_footprint_gap), _fmt(r.min_ttc),
                               str(r.fallback_cycles), str(r.converged_cycles),
                               str(r.total_cycles)]))
    _write_lines(path, lines)


def write_batch_summary_txt(path, batch: BatchResult) -> None:
    lines = [f"runs={len(batch.runs)}",
             f"seed={batch.seed}",
             f"collision_count={batch.collision_count}",
             f"collision_rate={_fmt(batch.collision_rate)}",
             f"near_miss_count={batch.near_miss_count}",
             f"near_miss_rate={_fmt(batch.near_miss_rate)}",
             f"clearance_threshold={_fmt(batch.clearance_threshold)}",
             f"clearance_rate={_fmt(batch.clearance_rate)}",
             f"worst_min_center_distance={_fmt(batch.worst_min_center_distance)}",
             f"mean_min_center_distance={_fmt(batch.mean_min_center_distance)}",
             f"mean_avg_center_distance={_fmt(batch.mean_avg_center_distance)}",
             f"fallback_rate={_fmt(batch.fallback_rate)}"]
    _write_lines(path, lines)


def write_manifest_txt(path, command: str, scenario_name: str, files,
                       seed: int | None = None, runs: int | None = None) -> None:
    lines = [f"command={command}", f"scenario={scenario_name}"]
    if seed is not None:
        lines.append(f"seed={seed}")
    if runs is not None:
        lines.append(f"runs={runs}")
    for name in files:
        lines.append(f"file={name}")
    _write_lines(path, lines)
