"""INI scenario configs: strict parsing, defaults, and effective-config echo.

Parsing resolves every key to a concrete string first (user value or
default), then builds the typed objects from the resolved table. The echo
writes the resolved table back out, so an effective config re-parses to the
exact same run and serves as the determinism fingerprint of a result
directory. Unknown sections or keys are errors, not warnings.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corridor import GrowthParams, KinematicLimits
from .errors import ConfigError, ParameterError
from .geometry import wrap_angle
from .ilqr import CostWeights, SolverOptions
from .metrics import MetricsParams
from .obstacles import ArcMotion, Motion, StraightMotion, WaypointMotion, from_motion
from .risk import RiskFieldParams
from .simulation import RingRoad, Scenario, StraightRoad
from .vehicle import VehicleGeometry, VehicleLimits, VehicleState

_REQUIRED = object()

_VEHICLE = [("wheelbase", "2.7"), ("body_length", "4.5"), ("body_width", "1.8"),
            ("phi_max", "0.6"), ("a_max", "3.0"), ("phi_ddot_max", "4.0"),
            ("v_max", "30.0"), ("yaw_accel_max", "4.0")]
_RISK = [("a_static", "1.0"), ("a_dynamic", "0.8"), ("sigma_x", "4.0"),
         ("sigma_y", "1.2"), ("beta", "1.0"), ("k_v", "0.5"), ("alpha_shift", "1.0"),
         ("decay_length", "20.0"), ("sigma_v_min", "0.5")]
_GROWTH = [("eta", "0.5"), ("alpha_max", "2.0"), ("v_ref", "10.0"), ("gamma0", "8.0"),
           ("decay_rate", "0.8"), ("delta_safe", "0.5")]
_WEIGHTS = [("state", "1.0, 1.0, 0.5, 0.1, 0.01, 0.01"), ("control", "0.5, 0.1"),
            ("terminal", ""), ("risk_weight", "5.0"), ("corridor_weight", "200.0")]
_SOLVER = [("max_iterations", "100"), ("tol_cost", "1e-06"), ("tol_grad", "0.0001"),
           ("mu_init", "1e-06"), ("mu_max", "1000000.0"), ("mu_factor", "10.0"),
           ("n_alphas", "11"), ("clamp_reference", "true"), ("reference_margin", "0.3")]
_OUTPUT = [("snapshot_times", ""), ("grid_resolution", "0.5"),
           ("near_miss_distance", "3.0"), ("lane_band_fraction", "0.1"),
           ("settle_lateral_rate", "0.1"), ("min_closing_speed", "0.05")]
_SCENARIO_COMMON = [("name", "scenario"), ("type", _REQUIRED), ("duration", "8.0"),
                    ("horizon", "30"), ("plan_dt", "0.1"), ("plant_dt", "0.01"),
                    ("replan_dt", "0.1"), ("init_margin", "0.3"),
                    ("perturb_position", "0.0"), ("perturb_speed", "0.0"),
                    ("target_lane", "0"), ("target_speed", "10.0"),
                    ("host_lane", "0"), ("host_v", "10.0")]
_SCENARIO_STRAIGHT = [("lanes", "2"), ("lane_width", "3.5"), ("host_x", "0.0"),
                      ("host_y", ""), ("host_theta", "0.0")]
_SCENARIO_RING = [("center_x", "0.0"), ("center_y", "0.0"),
                  ("lane_radii", "20.0, 16.5"), ("lane_width", "3.5"),
                  ("direction", "1"), ("host_angle", "3.49")]

_SECTION_ORDER = ["scenario", "vehicle", "risk", "growth", "weights", "solver",
                  "output"]
_OBSTACLE_KEY = re.compile(r"^obstacle_(\d+)$")


@dataclass(frozen=True)
class RunConfig:
    """A parsed config: the typed objects plus the resolved key table."""

    scenario: Scenario
    solver: SolverOptions
    metrics: MetricsParams
    snapshot_times: tuple[float, ...]
    grid_resolution: float
    resolved: dict[str, dict[str, str]]


class _Section:
    def __init__(self, source: str, name: str, table: dict[str, str]):
        self.source = source
        self.name = name
        self.table = table

    def _fail(self, key: str, detail: str):
        raise ConfigError(f"{self.source}: [{self.name}] {key}: {detail}")

    def raw(self, key: str) -> str:
        return self.table[key]

    def floatv(self, key: str) -> float:
        try:
            return float(self.table[key])
        except ValueError:
            self._fail(key, f"expected a number, got {self.table[key]!r}")

    def intv(self, key: str) -> int:
        try:
            return int(self.table[key])
        except ValueError:
            self._fail(key, f"expected an integer, got {self.table[key]!r}")

    def boolv(self, key: str) -> bool:
        value = self.table[key].strip().lower()
        if value in ("true", "yes", "on", "1"):
            return True
        if value in ("false", "no", "off", "0"):
            return False
        self._fail(key, f"expected a boolean, got {self.table[key]!r}")

    def float_list(self, key: str, count: int | None = None) -> tuple[float, ...]:
        text = self.table[key].strip()
        if not text:
            return ()
        try:
            values = tuple(float(p) for p in text.split(","))
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {text!r}")
        if count is not None and len(values) != count:
            self._fail(key, f"expected {count} values, got {len(values)}")
        return values


def _resolve_section(source: str, name: str, given: dict[str, str],
                     spec: list[tuple[str, object]],
                     extra_ok=None) -> dict[str, str]:
    known = {k for k, _ in spec}
    table = {}
    for key in given:
        if key in known or (extra_ok and extra_ok(key)):
            continue
        raise ConfigError(f"{source}: [{name}] unknown key {key!r}")
    for key, default in spec:
        if key in given:
            table[key] = given[key].strip()
        elif default is _REQUIRED:
            raise ConfigError(f"{source}: [{name}] missing required key {key!r}")
        else:
            table[key] = default
    if extra_ok:
        for key in sorted(given, key=_obstacle_sort_key):
            if extra_ok(key):
                table[key] = given[key].strip()
    return table


def _obstacle_sort_key(key: str):
    m = _OBSTACLE_KEY.match(key)
    return (1, int(m.group(1))) if m else (0, 0)


def _parse_motion(sec: _Section, key: str) -> tuple[Motion, float, float]:
    parts = sec.raw(key).split()
    if not parts:
        sec._fail(key, "empty obstacle definition")
    kind, args = parts[0], parts[1:]

    def floats(values):
        try:
            return [float(v) for v in values]
        except ValueError:
            sec._fail(key, f"non-numeric obstacle field in {sec.raw(key)!r}")

    length, width = 4.5, 1.8
    if kind == "straight":
        if len(args) not in (4, 6):
            sec._fail(key, "straight needs: x y heading speed [length width]")
        vals = floats(args)
        if len(vals) == 6:
            length, width = vals[4], vals[5]
        return StraightMotion(vals[0], vals[1], vals[2], vals[3]), length, width
    if kind == "arc":
        if len(args) not in (5, 7):
            sec._fail(key, "arc needs: cx cy radius angle0 angular_rate [length width]")
        vals = floats(args)
        if len(vals) == 7:
            length, width = vals[5], vals[6]
        return ArcMotion(vals[0], vals[1], vals[2], vals[3], vals[4]), length, width
    if kind == "waypoints":
        vals = floats(args)
        if len(vals) % 3 == 2:
            length, width = vals[-2], vals[-1]
            vals = vals[:-2]
        if len(vals) < 6 or len(vals) % 3 != 0:
            sec._fail(key, "waypoints needs at least two t x y triplets")
        times = tuple(vals[0::3])
        points = tuple((vals[i + 1], vals[i + 2]) for i in range(0, len(vals), 3))
        return WaypointMotion(times, points), length, width
    sec._fail(key, f"unknown obstacle kind {kind!r} (straight, arc, waypoints)")


def _motion_text(motion: Motion, length: float, width: float) -> str:
    dims = f" {length!r} {width!r}"
    if isinstance(motion, StraightMotion):
        return f"straight {motion.x0!r} {motion.y0!r} {motion.heading!r} {motion.speed!r}{dims}"
    if isinstance(motion, ArcMotion):
        return (f"arc {motion.cx!r} {motion.cy!r} {motion.radius!r} "
                f"{motion.angle0!r} {motion.angular_rate!r}{dims}")
    triplets = " ".join(f"{t!r} {p[0]!r} {p[1]!r}"
                        for t, p in zip(motion.times, motion.points))
    return f"waypoints {triplets}{dims}"


def _build_scenario(source: str, table: dict[str, str], geom: VehicleGeometry,
                    limits: VehicleLimits, kin: KinematicLimits, growth: GrowthParams,
                    risk: RiskFieldParams, weights: CostWeights) -> Scenario:
    sec = _Section(source, "scenario", table)
    kind = sec.raw("type")
    if kind == "straight":
        road = StraightRoad(n_lanes=sec.intv("lanes"), lane_width=sec.floatv("lane_width"))
        host_lane = sec.intv("host_lane")
        host_y = sec.floatv("host_y") if table["host_y"] else road.lane_center(host_lane)
        host = VehicleState(sec.floatv("host_x"), host_y, sec.floatv("host_v"),
                            sec.floatv("host_theta"), 0.0, 0.0)
    else:
        radii = sec.float_list("lane_radii")
        if not radii:
            sec._fail("lane_radii", "need at least one radius")
        road = RingRoad(center=(sec.floatv("center_x"), sec.floatv("center_y")),
                        lane_radii=radii, lane_width=sec.floatv("lane_width"),
                        direction=sec.intv("direction"))
        angle = sec.floatv("host_angle")
        radius = road.lane_radius(sec.intv("host_lane"))
        host = VehicleState(road.center[0] + radius * math.cos(angle),
                            road.center[1] + radius * math.sin(angle),
                            sec.floatv("host_v"),
                            float(wrap_angle(angle + road.direction * 0.5 * math.pi)),
                            0.0, 0.0)
    obstacles = []
    for key in table:
        m = _OBSTACLE_KEY.match(key)
        if not m:
            continue
        motion, length, width = _parse_motion(sec, key)
        obstacles.append(from_motion(motion, int(m.group(1)), length, width))
    return Scenario(
        name=sec.raw("name"), road=road, host=host,
        target_lane=sec.intv("target_lane"), target_speed=sec.floatv("target_speed"),
        duration=sec.floatv("duration"), obstacles=tuple(obstacles),
        horizon=sec.intv("horizon"), plan_dt=sec.floatv("plan_dt"),
        plant_dt=sec.floatv("plant_dt"), replan_dt=sec.floatv("replan_dt"),
        init_margin=sec.floatv("init_margin"),
        perturb_position=sec.floatv("perturb_position"),
        perturb_speed=sec.floatv("perturb_speed"),
        geom=geom, limits=limits, kin_limits=kin, growth=growth, risk=risk,
        weights=weights)


def load_config(path) -> RunConfig:
    """Parse and validate a scenario config file.

    Raises ConfigError with the file, section, and key on any problem.
    """
    path = Path(path)
    source = path.name
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       delimiters=("=",), comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"{source}: cannot read config: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"{source}: malformed config: {err}") from err

    known = set(_SECTION_ORDER)
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{source}: unknown section [{section}]")
    if parser.defaults():
        raise ConfigError(f"{source}: the DEFAULT section is not supported")

    def given(name):
        return dict(parser.items(name)) if parser.has_section(name) else {}

    resolved: dict[str, dict[str, str]] = {}
    resolved["vehicle"] = _resolve_section(source, "vehicle", given("vehicle"), _VEHICLE)
    resolved["risk"] = _resolve_section(source, "risk", given("risk"), _RISK)
    resolved["growth"] = _resolve_section(source, "growth", given("growth"), _GROWTH)
    resolved["weights"] = _resolve_section(source, "weights", given("weights"), _WEIGHTS)
    resolved["solver"] = _resolve_section(source, "solver", given("solver"), _SOLVER)
    resolved["output"] = _resolve_section(source, "output", given("output"), _OUTPUT)

    scen_given = given("scenario")
    kind = scen_given.get("type", "").strip()
    if kind not in ("straight", "ring"):
        raise ConfigError(f"{source}: [scenario] type must be 'straight' or 'ring', "
                          f"got {kind!r}")
    spec = _SCENARIO_COMMON + (_SCENARIO_STRAIGHT if kind == "straight" else _SCENARIO_RING)
    resolved["scenario"] = _resolve_section(source, "scenario", scen_given, spec,
                                            extra_ok=_OBSTACLE_KEY.match)

    def typed(section: str, build):
        # Constructor invariants (positivity and the like) fire here; tag
        # them with the section so the report points into the file.
        try:
            return build()
        except ParameterError as err:
            raise ConfigError(f"{source}: [{section}] {err}") from err

    veh = _Section(source, "vehicle", resolved["vehicle"])
    geom = typed("vehicle", lambda: VehicleGeometry(
        veh.floatv("wheelbase"), veh.floatv("body_length"), veh.floatv("body_width")))
    limits = typed("vehicle", lambda: VehicleLimits(
        veh.floatv("phi_max"), veh.floatv("a_max"), veh.floatv("phi_ddot_max")))
    kin = typed("vehicle", lambda: KinematicLimits(
        veh.floatv("phi_max"), veh.floatv("v_max"), veh.floatv("yaw_accel_max")))
    rk = _Section(source, "risk", resolved["risk"])
    risk = typed("risk", lambda: RiskFieldParams(
        rk.floatv("a_static"), rk.floatv("a_dynamic"),
        rk.floatv("sigma_x"), rk.floatv("sigma_y"), rk.floatv("beta"),
        rk.floatv("k_v"), rk.floatv("alpha_shift"),
        rk.floatv("decay_length"), rk.floatv("sigma_v_min")))
    gr = _Section(source, "growth", resolved["growth"])
    growth = typed("growth", lambda: GrowthParams(
        gr.floatv("eta"), gr.floatv("alpha_max"), gr.floatv("v_ref"),
        gr.floatv("gamma0"), gr.floatv("decay_rate"), gr.floatv("delta_safe")))
    wt = _Section(source, "weights", resolved["weights"])
    state_diag = wt.float_list("state", 6)
    terminal_diag = wt.float_list("terminal") or tuple(10.0 * v for v in state_diag)
    if len(terminal_diag) != 6:
        wt._fail("terminal", f"expected 6 values, got {len(terminal_diag)}")
    resolved["weights"]["terminal"] = ", ".join(repr(v) for v in terminal_diag)
    weights = typed("weights", lambda: CostWeights(
        state=np.diag(state_diag),
        control=np.diag(wt.float_list("control", 2)),
        terminal=np.diag(terminal_diag),
        risk_weight=wt.floatv("risk_weight"),
        corridor_weight=wt.floatv("corridor_weight")))
    sv = _Section(source, "solver", resolved["solver"])
    solver = typed("solver", lambda: SolverOptions(
        max_iterations=sv.intv("max_iterations"),
        tol_cost=sv.floatv("tol_cost"), tol_grad=sv.floatv("tol_grad"),
        mu_init=sv.floatv("mu_init"), mu_max=sv.floatv("mu_max"),
        mu_factor=sv.floatv("mu_factor"), n_alphas=sv.intv("n_alphas"),
        clamp_reference=sv.boolv("clamp_reference"),
        reference_margin=sv.floatv("reference_margin")))
    out = _Section(source, "output", resolved["output"])
    metrics = typed("output", lambda: MetricsParams(
        out.floatv("near_miss_distance"), out.floatv("lane_band_fraction"),
        out.floatv("settle_lateral_rate"), out.floatv("min_closing_speed")))
    snapshot_times = out.float_list("snapshot_times")
    grid_resolution = out.floatv("grid_resolution")
    if grid_resolution <= 0.0:
        out._fail("grid_resolution", "must be positive")

    scenario = typed("scenario", lambda: _build_scenario(
        source, resolved["scenario"], geom, limits, kin, growth, risk, weights))
    if kind == "straight":
        resolved["scenario"]["host_y"] = repr(scenario.host.y)
    # Echo back canonical forms so a round trip is byte-stable.
    for key in list(resolved["scenario"]):
        m = _OBSTACLE_KEY.match(key)
        if m:
            o = next(ob for ob in scenario.obstacles if ob.obstacle_id == int(m.group(1)))
            resolved["scenario"][key] = _motion_text(o.motion, o.body_length, o.body_width)
    return RunConfig(scenario=scenario, solver=solver, metrics=metrics,
                     snapshot_times=snapshot_times, grid_resolution=grid_resolution,
                     resolved=resolved)


def write_effective_config(path, cfg: RunConfig) -> None:
    """Write the fully resolved key table; re-parsing yields the same run."""
    lines = []
    for section in _SECTION_ORDER:
        lines.append(f"[{section}]")
        for key, value in cfg.resolved[section].items():
            lines.append(f"{key} = {value}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8", newline="\n")
