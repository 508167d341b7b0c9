"""Time-varying convex feasible space around the host vehicle.

Regions are axis-aligned rectangles stamped with a validity time. A region
grows outward at a rate set by a speed- and heading-dependent tensor with an
exponential time decay, then gets clipped back so that a separating
hyperplane with a safety margin exists against every predicted obstacle
footprint. Faces stay axis-aligned: the growth tensor acts on each face's
outward normal and only the along-axis component displaces the face.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InfeasibleSeedError, ParameterError
from .geometry import OrientedRect, wrap_angle
from .obstacles import ObstacleVehicle
from .vehicle import VehicleGeometry, VehicleState

_AXES = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])  # xl, xu, yl, yu


@dataclass(frozen=True)
class GrowthParams:
    """Growth-rate and safety parameters of the feasible space."""

    eta: float = 0.5
    alpha_max: float = 2.0
    v_ref: float = 10.0
    gamma0: float = 8.0
    decay_rate: float = 0.8
    delta_safe: float = 0.5

    def __post_init__(self) -> None:
        for name in ("eta", "alpha_max", "v_ref", "gamma0", "decay_rate", "delta_safe"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"growth parameter {name} must be positive")
        if self.alpha_max < 1.0:
            raise ParameterError("alpha_max below 1 would shrink the base growth rate")


@dataclass(frozen=True)
class KinematicLimits:
    """Feasibility bounds: steering angle, speed, yaw acceleration."""

    phi_max: float = 0.6
    v_max: float = 30.0
    yaw_accel_max: float = 4.0

    def __post_init__(self) -> None:
        if not (0.0 < self.phi_max < 0.5 * math.pi):
            raise ParameterError("phi_max must lie in (0, pi/2)")
        if not (self.v_max > 0.0 and self.yaw_accel_max > 0.0):
            raise ParameterError("v_max and yaw_accel_max must be positive")


class Certificate(NamedTuple):
    """Separating hyperplane: normal . p <= offset on the region side and
    normal . q >= offset + delta_safe on the obstacle side."""

    normal: tuple[float, float]
    offset: float
    obstacle_id: int


@dataclass(frozen=True)
class ConvexRegion:
    """Axis-aligned rectangle valid at time t, with per-obstacle certificates."""

    x_lower: float
    x_upper: float
    y_lower: float
    y_upper: float
    t: float
    certificates: tuple[Certificate, ...] = ()

    def __post_init__(self) -> None:
        if self.x_lower > self.x_upper or self.y_lower > self.y_upper:
            raise ParameterError(f"empty region bounds ({self.x_lower}, {self.x_upper}, "
                                 f"{self.y_lower}, {self.y_upper})")

    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x_lower, self.x_upper, self.y_lower, self.y_upper)

    def corners(self) -> np.ndarray:
        return np.array([[self.x_lower, self.y_lower], [self.x_upper, self.y_lower],
                         [self.x_upper, self.y_upper], [self.x_lower, self.y_upper]])

    def contains(self, point, tol: float = 0.0) -> bool:
        x, y = float(point[0]), float(point[1])
        return (self.x_lower - tol <= x <= self.x_upper + tol
                and self.y_lower - tol <= y <= self.y_upper + tol)

    def clamp(self, points) -> np.ndarray:
        """Componentwise projection of points (..., 2) onto the rectangle."""
        pts = np.asarray(points, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = np.clip(pts[..., 0], self.x_lower, self.x_upper)
        out[..., 1] = np.clip(pts[..., 1], self.y_lower, self.y_upper)
        return out

    def distance_outside(self, points) -> np.ndarray:
        """Euclidean distance from points (..., 2) to the rectangle; zero inside."""
        pts = np.asarray(points, dtype=float)
        ex = np.maximum(np.maximum(self.x_lower - pts[..., 0], pts[..., 0] - self.x_upper), 0.0)
        ey = np.maximum(np.maximum(self.y_lower - pts[..., 1], pts[..., 1] - self.y_upper), 0.0)
        return np.hypot(ex, ey)

    def area(self) -> float:
        return (self.x_upper - self.x_lower) * (self.y_upper - self.y_lower)


def contains(region: ConvexRegion, point, tol: float = 0.0) -> bool:
    """Closed-inequality membership test; boundary points count as inside."""
    return region.contains(point, tol)


def growth_tensor(state: VehicleState, age: float, params: GrowthParams) -> np.ndarray:
    """2x2 growth tensor at a given region age (seconds since corridor start).

    Composition of a speed gain min(1 + eta v / v_ref, alpha_max), a heading
    map [[|cos|, -sin], [sin, |cos|]] and an isotropic exponential decay
    gamma0 exp(-decay_rate age).
    """
    if age < 0.0:
        raise ParameterError(f"region age must be non-negative, got {age}")
    alpha = min(1.0 + params.eta * state.v / params.v_ref, params.alpha_max)
    c, s = math.cos(state.theta), math.sin(state.theta)
    heading_map = np.array([[abs(c), -s], [s, abs(c)]])
    return alpha * params.gamma0 * math.exp(-params.decay_rate * age) * heading_map


def init_region(state: VehicleState, geom: VehicleGeometry, margin: float,
                t: float = 0.0) -> ConvexRegion:
    """Axis-aligned bounding box of the host footprint, inflated by margin."""
    if margin < 0.0:
        raise ParameterError(f"margin must be non-negative, got {margin}")
    hx = 0.5 * (geom.body_length * abs(math.cos(state.theta))
                + geom.body_width * abs(math.sin(state.theta))) + margin
    hy = 0.5 * (geom.body_length * abs(math.sin(state.theta))
                + geom.body_width * abs(math.cos(state.theta))) + margin
    return ConvexRegion(state.x - hx, state.x + hx, state.y - hy, state.y + hy, t)


def _axis_gaps(bounds, footprint: OrientedRect) -> list[tuple[float, np.ndarray, float]]:
    """Per-axis (gap, oriented normal, region offset) between a rectangle
    given by bounds and an oriented footprint.

    Candidate axes are the two world axes plus the footprint's body axes,
    which is exhaustive for a pair of convex polygons. The normal is oriented
    so the footprint lies on its positive side; offset is the supporting
    value max(n . p) over the region."""
    region_corners = np.array([[bounds[0], bounds[2]], [bounds[1], bounds[2]],
                               [bounds[1], bounds[3]], [bounds[0], bounds[3]]])
    fp_corners = footprint.corners()
    axes = np.vstack([np.array([[1.0, 0.0], [0.0, 1.0]]), footprint.axes()])
    out = []
    for axis in axes:
        rp = region_corners @ axis
        fp = fp_corners @ axis
        gap_pos = fp.min() - rp.max()
        gap_neg = rp.min() - fp.max()
        if gap_pos >= gap_neg:
            out.append((float(gap_pos), axis.copy(), float(rp.max())))
        else:
            out.append((float(gap_neg), -axis, float(-rp.min())))
    return out


def separating_certificate(region: ConvexRegion, footprint: OrientedRect,
                           delta_safe: float, obstacle_id: int = -1) -> Certificate | None:
    """Best separating hyperplane with margin delta_safe, or None.

    Search is restricted to the two region axes plus the two footprint axes,
    which is exact for this pair of convex polygons.
    """
    gaps = _axis_gaps(region.bounds(), footprint)
    gap, normal, offset = max(gaps, key=lambda g: g[0])
    if gap < delta_safe - 1e-12:
        return None
    return Certificate((float(normal[0]), float(normal[1])), offset, obstacle_id)


def _separation_margin(bounds, footprint: OrientedRect) -> float:
    return max(g[0] for g in _axis_gaps(bounds, footprint))


def _clip_footprint(bounds, old_bounds, footprint: OrientedRect, delta_safe: float,
                    anchor) -> tuple[float, float, float, float] | None:
    """Shrink one face of bounds so the footprint clears delta_safe.

    Preference order: candidates that keep the anchor point, then candidates
    that keep the whole pre-growth region, then largest remaining area. The
    anchor is a preference rather than a constraint: when a predicted
    footprint sweeps over it, the region follows the side that still
    separates instead of failing. Returns None when no single-face clip
    restores separation.
    """
    fx_lo, fx_hi, fy_lo, fy_hi = footprint.aabb()
    xl, xu, yl, yu = bounds
    # The hair of extra clearance keeps the recomputed margin from landing a
    # rounding error below delta_safe.
    pad = delta_safe + 1e-10
    candidates = [(xl, fx_lo - pad, yl, yu),
                  (fx_hi + pad, xu, yl, yu),
                  (xl, xu, yl, fy_lo - pad),
                  (xl, xu, fy_hi + pad, yu)]
    ax, ay = anchor
    best = None
    best_key = None
    for cand in candidates:
        cxl, cxu, cyl, cyu = cand
        if cxl > cxu or cyl > cyu:
            continue
        if _separation_margin(cand, footprint) < delta_safe - 1e-12:
            continue
        holds_anchor = (cxl - 1e-9 <= ax <= cxu + 1e-9 and cyl - 1e-9 <= ay <= cyu + 1e-9)
        keeps_old = (cxl <= old_bounds[0] + 1e-12 and cxu >= old_bounds[1] - 1e-12
                     and cyl <= old_bounds[2] + 1e-12 and cyu >= old_bounds[3] - 1e-12)
        area = (cxu - cxl) * (cyu - cyl)
        key = (holds_anchor, keeps_old, area)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return best


def _clip_bounds(bounds, old_bounds, footprints: Sequence[OrientedRect], delta_safe: float,
                 anchor, obstacle_ids: Sequence[int]) -> tuple[tuple, list[Certificate]]:
    for i, fp in enumerate(footprints):
        if _separation_margin(bounds, fp) >= delta_safe:
            continue
        clipped = _clip_footprint(bounds, old_bounds, fp, delta_safe, anchor)
        if clipped is None:
            raise InfeasibleSeedError(
                f"no axis-aligned clip separates obstacle {obstacle_ids[i]} from the "
                f"region around ({anchor[0]:.2f}, {anchor[1]:.2f}) by {delta_safe} m")
        bounds = clipped
    region_probe = ConvexRegion(*bounds, t=0.0)
    certificates = []
    for i, fp in enumerate(footprints):
        cert = separating_certificate(region_probe, fp, delta_safe, obstacle_ids[i])
        if cert is None:
            raise InfeasibleSeedError(f"clipping failed to separate obstacle {obstacle_ids[i]}")
        certificates.append(cert)
    return bounds, certificates


def grow(region: ConvexRegion, state: VehicleState, age: float, dt: float,
         footprints: Sequence[OrientedRect], road: tuple[float, float] | None,
         params: GrowthParams, limits: KinematicLimits,
         obstacle_ids: Sequence[int] | None = None) -> ConvexRegion:
    """One evolution step of a region.

    Each face moves outward along its axis by the axis component of
    G dt n for its outward normal n, capped at v_max dt so no boundary point
    outruns the vehicle speed limit. The result is clipped to the road band
    and against every footprint (already inflated by the caller) so a
    separating hyperplane with margin delta_safe exists. ``age`` is the time
    since corridor start that anchors the growth decay; the region timestamp
    advances by dt.

    Raises InfeasibleSeedError when the state lies outside the input region
    or when no single-face clip can restore separation.
    """
    if dt < 0.0:
        raise ParameterError(f"dt must be non-negative, got {dt}")
    if not region.contains((state.x, state.y), tol=1e-9):
        raise InfeasibleSeedError(
            f"vehicle position ({state.x:.3f}, {state.y:.3f}) outside the region "
            f"{region.bounds()}")
    if obstacle_ids is None:
        obstacle_ids = list(range(len(footprints)))
    tensor = growth_tensor(state, age, params)
    moves = np.minimum(np.einsum("fi,ij,fj->f", _AXES, tensor, _AXES), limits.v_max) * dt
    xl = region.x_lower - moves[0]
    xu = region.x_upper + moves[1]
    yl = region.y_lower - moves[2]
    yu = region.y_upper + moves[3]
    if road is not None:
        yl = max(yl, road[0])
        yu = min(yu, road[1])
    old = (max(region.x_lower, xl), min(region.x_upper, xu),
           max(region.y_lower, yl), min(region.y_upper, yu))
    anchor = (state.x, state.y)
    bounds, certificates = _clip_bounds((xl, xu, yl, yu), old, footprints,
                                        params.delta_safe, anchor, obstacle_ids)
    return ConvexRegion(*bounds, t=region.t + dt, certificates=tuple(certificates))


def generate_corridor(x0: VehicleState, horizon: int, dt: float,
                      predictions: Sequence[Sequence[ObstacleVehicle]],
                      road: tuple[float, float] | None, params: GrowthParams,
                      limits: KinematicLimits, geom: VehicleGeometry,
                      margin: float = 0.3, t0: float = 0.0) -> list[ConvexRegion]:
    """Regions for steps 0..horizon, each separated from that step's obstacles.

    ``predictions[k]`` lists the obstacle snapshots expected at t0 + k dt.
    Footprints are inflated by half the host width before separation, on top
    of the delta_safe margin of the hyperplane itself.

    Region k is anchored at the constant-velocity continuation of x0 to step
    k (clamped into the previous region), not at x0 itself. That mirrors the
    prediction model used for the obstacles, and a fast obstacle predicted to
    sweep over the start position must not wipe out regions the vehicle can
    still reach by simply driving on.
    """
    if horizon < 0:
        raise ParameterError(f"horizon must be non-negative, got {horizon}")
    if not dt > 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if len(predictions) < horizon + 1:
        raise ParameterError(f"need {horizon + 1} prediction steps, got {len(predictions)}")
    inflation = 0.5 * geom.body_width

    def step_footprints(k):
        rects = [o.footprint().inflate(inflation) for o in predictions[k]]
        ids = [o.obstacle_id for o in predictions[k]]
        return rects, ids

    seed = init_region(x0, geom, margin, t=t0)
    if road is not None:
        seed = replace(seed, y_lower=max(seed.y_lower, road[0]),
                       y_upper=min(seed.y_upper, road[1]))
    rects, ids = step_footprints(0)
    try:
        bounds, certs = _clip_bounds(seed.bounds(), seed.bounds(), rects,
                                     params.delta_safe, (x0.x, x0.y), ids)
    except InfeasibleSeedError as err:
        raise InfeasibleSeedError(f"infeasible at corridor start: {err}") from err
    regions = [ConvexRegion(*bounds, t=t0, certificates=tuple(certs))]
    vx = x0.v * math.cos(x0.theta)
    vy = x0.v * math.sin(x0.theta)
    for k in range(1, horizon + 1):
        rects, ids = step_footprints(k)
        prev = regions[-1]
        anchored = replace(
            x0,
            x=min(max(x0.x + vx * k * dt, prev.x_lower), prev.x_upper),
            y=min(max(x0.y + vy * k * dt, prev.y_lower), prev.y_upper))
        regions.append(grow(prev, anchored, (k - 1) * dt,
                            dt, rects, road, params, limits, ids))
    return regions


@dataclass(frozen=True)
class FeasibilityResult:
    """Outcome of the polyline feasibility check.

    The pass/fail verdict uses the yaw acceleration bound; the peak yaw rate
    is reported alongside for callers that want to bound the rate instead.
    """

    feasible: bool
    violation_kind: str | None
    violation_index: int | None
    max_speed: float
    max_curvature: float
    max_yaw_rate: float
    max_yaw_accel: float


def kinematic_feasible(path, limits: KinematicLimits, geom: VehicleGeometry) -> FeasibilityResult:
    """Check a timestamped polyline (rows of t, x, y) against kinematic bounds.

    Segment speeds must stay at or below v_max, the three-point circumscribed
    circle curvature at interior samples at or below tan(phi_max)/wheelbase,
    and the second difference of segment headings at or below yaw_accel_max.
    """
    arr = np.asarray(path, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 3:
        raise ParameterError("path must be an (n >= 3, 3) array of t, x, y rows")
    t, pts = arr[:, 0], arr[:, 1:]
    dts = np.diff(t)
    if np.any(dts <= 0.0):
        raise ParameterError("path timestamps must be strictly increasing")

    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    speeds = seg_len / dts
    tol = 1e-9

    # Three-point circumscribed-circle curvature at interior samples.
    a, b, c = pts[:-2], pts[1:-1], pts[2:]
    ab, ac, bc = b - a, c - a, c - b
    cross = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
    denom = (np.hypot(ab[:, 0], ab[:, 1]) * np.hypot(ac[:, 0], ac[:, 1])
             * np.hypot(bc[:, 0], bc[:, 1]))
    curvatures = np.where(denom > 0.0, 2.0 * np.abs(cross) / np.maximum(denom, 1e-300), 0.0)
    kappa_max = math.tan(limits.phi_max) / geom.wheelbase

    headings = np.arctan2(seg[:, 1], seg[:, 0])
    mids = 0.5 * (t[:-1] + t[1:])
    if len(headings) >= 2:
        rates = wrap_angle(np.diff(headings)) / np.diff(mids)
    else:
        rates = np.zeros(0)
    if len(rates) >= 2:
        accels = np.diff(rates) / np.diff(0.5 * (mids[:-1] + mids[1:]))
    else:
        accels = np.zeros(0)

    kind, index = None, None
    if np.any(speeds > limits.v_max + tol):
        kind, index = "speed", int(np.argmax(speeds > limits.v_max + tol))
    elif np.any(curvatures > kappa_max + tol):
        kind, index = "curvature", int(np.argmax(curvatures > kappa_max + tol)) + 1
    elif len(accels) and np.any(np.abs(accels) > limits.yaw_accel_max + tol):
        kind, index = "yaw_accel", int(np.argmax(np.abs(accels) > limits.yaw_accel_max + tol)) + 1

    return FeasibilityResult(
        feasible=kind is None,
        violation_kind=kind,
        violation_index=index,
        max_speed=float(speeds.max()),
        max_curvature=float(curvatures.max()) if len(curvatures) else 0.0,
        max_yaw_rate=float(np.abs(rates).max()) if len(rates) else 0.0,
        max_yaw_accel=float(np.abs(accels).max()) if len(accels) else 0.0,
    )
