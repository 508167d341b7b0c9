"""Dynamic risk field around surrounding vehicles.

Each obstacle contributes a static bell shape aligned with its body axes plus
a velocity-dependent lobe shifted toward the side the relative motion makes
dangerous. The sum is attenuated by an exponential factor in the distance
from the host vehicle, so remote obstacles fade from the planning cost.

All kernels broadcast over numpy arrays; query points, obstacle poses, or
both may be batched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SchemaError
from .obstacles import ObstacleVehicle
from .vehicle import VehicleState

_TINY = 1e-300


@dataclass(frozen=True)
class RiskFieldParams:
    """Shape parameters of the risk field.

    a_static / a_dynamic are peak amplitudes, sigma_x / sigma_y body-aligned
    spreads, beta the bell sharpness, k_v the speed-to-spread coupling of the
    dynamic lobe, alpha_shift its longitudinal displacement in units of
    sigma_x, decay_length the range of the host-distance attenuation and
    sigma_v_min the floor that keeps the dynamic spread positive at zero
    relative speed.
    """

    a_static: float = 1.0
    a_dynamic: float = 0.8
    sigma_x: float = 4.0
    sigma_y: float = 1.2
    beta: float = 1.0
    k_v: float = 0.5
    alpha_shift: float = 1.0
    decay_length: float = 20.0
    sigma_v_min: float = 0.5

    def __post_init__(self) -> None:
        positive = {"a_static": self.a_static, "a_dynamic": self.a_dynamic,
                    "sigma_x": self.sigma_x, "sigma_y": self.sigma_y,
                    "k_v": self.k_v, "alpha_shift": self.alpha_shift,
                    "decay_length": self.decay_length, "sigma_v_min": self.sigma_v_min}
        for name, value in positive.items():
            if not value > 0.0:
                raise ParameterError(f"risk parameter {name} must be positive, got {value}")
        if not self.beta >= 0.5:
            raise ParameterError(f"beta must be at least 0.5, got {self.beta}")


def _sigmoid(z):
    """Numerically stable 1 / (1 + exp(-z))."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _frame_offsets(px, py, ox, oy, heading):
    """World offsets rotated into the obstacle frame: longitudinal, lateral."""
    c, s = np.cos(heading), np.sin(heading)
    dx, dy = px - ox, py - oy
    return c * dx + s * dy, -s * dx + c * dy, c, s


def _static_kernel(dxp, dyp, params: RiskFieldParams):
    """Static bell value and its partials w.r.t. the frame offsets."""
    ex = (dxp / params.sigma_x) ** 2 + (dyp / params.sigma_y) ** 2
    value = params.a_static * np.exp(-np.power(ex, params.beta))
    # d(value)/dE = -value * beta * E^(beta-1); guarded at E = 0 where the
    # gradient of the smooth maximum vanishes for beta >= 0.5.
    with np.errstate(divide="ignore", invalid="ignore"):
        dv_de = -value * params.beta * np.power(ex, params.beta - 1.0)
    dv_de = np.where(ex > 0.0, dv_de, 0.0)
    return value, dv_de * 2.0 * dxp / params.sigma_x ** 2, dv_de * 2.0 * dyp / params.sigma_y ** 2


def _dynamic_kernel(dxp, dyp, v_rel, params: RiskFieldParams):
    """Dynamic lobe value and partials; v_rel = obstacle speed - host speed."""
    sign = np.sign(v_rel)
    sigma_v = np.maximum(params.k_v * np.abs(v_rel), params.sigma_v_min)
    bell = np.exp(-(dxp / sigma_v) ** 2 - (dyp / params.sigma_y) ** 2)
    z = -sign * (dxp - params.alpha_shift * params.sigma_x * sign)
    gate = _sigmoid(-z)  # 1 / (1 + exp(z))
    value = params.a_dynamic * bell * gate
    ddxp = value * (-2.0 * dxp / sigma_v ** 2 + sign * _sigmoid(z))
    ddyp = value * (-2.0 * dyp / params.sigma_y ** 2)
    return value, ddxp, ddyp


def _decay_kernel(px, py, hx, hy, decay_length):
    """Host-distance attenuation and its world-frame gradient."""
    dx, dy = px - hx, py - hy
    dist = np.hypot(dx, dy)
    value = np.exp(-dist / decay_length)
    scale = np.where(dist > 0.0, -value / (decay_length * np.maximum(dist, _TINY)), 0.0)
    return value, scale * dx, scale * dy


def _field_eval(px, py, ox, oy, oheading, ospeed, hx, hy, hv, params, want_gradient):
    """Summed risk over the obstacle axis (the trailing axis of the o* arrays)."""
    dxp, dyp, c, s = _frame_offsets(px[..., None], py[..., None], ox, oy, oheading)
    sv, gsx, gsy = _static_kernel(dxp, dyp, params)
    dv, gdx, gdy = _dynamic_kernel(dxp, dyp, ospeed - hv, params)
    decay, dfx, dfy = _decay_kernel(px, py, hx, hy, params.decay_length)
    shape = sv + dv
    total = (shape * decay[..., None]).sum(axis=-1)
    if not want_gradient:
        return total, None
    gx_f, gy_f = gsx + gdx, gsy + gdy
    # Rotate frame partials back to world axes.
    gx_w = c * gx_f - s * gy_f
    gy_w = s * gx_f + c * gy_f
    grad_x = (gx_w * decay[..., None]).sum(axis=-1) + shape.sum(axis=-1) * dfx
    grad_y = (gy_w * decay[..., None]).sum(axis=-1) + shape.sum(axis=-1) * dfy
    return total, np.stack([grad_x, grad_y], axis=-1)


def _obstacle_arrays(obstacles) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    ox = np.array([o.x for o in obstacles], dtype=float)
    oy = np.array([o.y for o in obstacles], dtype=float)
    oh = np.array([o.heading for o in obstacles], dtype=float)
    ov = np.array([o.speed for o in obstacles], dtype=float)
    return ox, oy, oh, ov


def to_obstacle_frame(point, obstacle: ObstacleVehicle) -> np.ndarray:
    """Rotate a world point into the obstacle's body frame (longitudinal, lateral)."""
    pts = np.asarray(point, dtype=float)
    dxp, dyp, _, _ = _frame_offsets(pts[..., 0], pts[..., 1], obstacle.x, obstacle.y, obstacle.heading)
    return np.stack([np.asarray(dxp), np.asarray(dyp)], axis=-1)


def static_risk(point, obstacle: ObstacleVehicle, params: RiskFieldParams):
    """Static risk of a single obstacle at a query point."""
    offsets = to_obstacle_frame(point, obstacle)
    value, _, _ = _static_kernel(offsets[..., 0], offsets[..., 1], params)
    return float(value) if np.ndim(value) == 0 else value

def dynamic_risk(point, obstacle: ObstacleVehicle, host_speed: float, params: RiskFieldParams):
    """Velocity-dependent risk lobe of a single obstacle at a query point."""
    offsets = to_obstacle_frame(point, obstacle)
    value, _, _ = _dynamic_kernel(offsets[..., 0], offsets[..., 1], obstacle.speed - host_speed, params)
    return float(value) if np.ndim(value) == 0 else value


def decay_factor(point, host_position, decay_length: float):
    """Attenuation factor exp(-distance to host / decay_length)."""
    if not decay_length > 0.0:
        raise ParameterError(f"decay_length must be positive, got {decay_length}")
    pts = np.asarray(point, dtype=float)
    host = np.asarray(host_position, dtype=float)
    value, _, _ = _decay_kernel(pts[..., 0], pts[..., 1], host[0], host[1], decay_length)
    return float(value) if np.ndim(value) == 0 else value


def total_risk(point, obstacles, host_state: VehicleState, params: RiskFieldParams):
    """Summed, host-attenuated risk of all obstacles at a query point.

    The host state anchors both the attenuation (its position) and the
    relative speeds of the dynamic lobes (its speed).
    """
    if len(obstacles) == 0:
        pts = np.asarray(point, dtype=float)
        zero = np.zeros(pts.shape[:-1])
        return float(zero) if zero.ndim == 0 else zero
    pts = np.asarray(point, dtype=float)
    ox, oy, oh, ov = _obstacle_arrays(obstacles)
    value, _ = _field_eval(pts[..., 0], pts[..., 1], ox, oy, oh, ov,
                           host_state.x, host_state.y, host_state.v, params, False)
    return float(value) if np.ndim(value) == 0 else value


def risk_gradient(point, obstacles, host_state: VehicleState, params: RiskFieldParams):
    """Spatial gradient of :func:`total_risk` w.r.t. the query point."""
    pts = np.asarray(point, dtype=float)
    if len(obstacles) == 0:
        return np.zeros(pts.shape)
    ox, oy, oh, ov = _obstacle_arrays(obstacles)
    _, grad = _field_eval(pts[..., 0], pts[..., 1], ox, oy, oh, ov,
                          host_state.x, host_state.y, host_state.v, params, True)
    return grad


@dataclass(frozen=True)
class RiskGrid:
    """Sampled risk field; values[iy, ix] corresponds to (xs[ix], ys[iy])."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray


def risk_grid(bounds, resolution: float, obstacles, host_state: VehicleState,
              params: RiskFieldParams) -> RiskGrid:
    """Sample the total risk on a regular grid.

    bounds is (xmin, xmax, ymin, ymax); equal bounds give a single sample
    along that axis, inverted bounds are rejected.
    """
    xmin, xmax, ymin, ymax = map(float, bounds)
    if xmin > xmax or ymin > ymax:
        raise ParameterError(f"inverted grid bounds {bounds}")
    if not resolution > 0.0:
        raise ParameterError(f"grid resolution must be positive, got {resolution}")
    nx = int(math.floor((xmax - xmin) / resolution + 1e-9)) + 1
    ny = int(math.floor((ymax - ymin) / resolution + 1e-9)) + 1
    xs = xmin + resolution * np.arange(nx)
    ys = ymin + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1)
    values = total_risk(pts, obstacles, host_state, params)
    return RiskGrid(xs=xs, ys=ys, values=np.asarray(values, dtype=float).reshape(ny, nx))


def write_risk_grid(path, grid: RiskGrid) -> None:
    """Persist a grid: schema line, bounds header, then row-major values."""
    xs, ys = grid.xs, grid.ys
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("schema=1\n")
        fh.write(f"# risk_grid {xs[0]!r} {xs[-1]!r} {ys[0]!r} {ys[-1]!r} {len(xs)} {len(ys)}\n")
        for row in grid.values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_risk_grid(path) -> RiskGrid:
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().strip() != "schema=1":
            raise SchemaError(f"{path}: missing schema=1 header")
        header = fh.readline().split()
        if len(header) != 8 or header[:2] != ["#", "risk_grid"]:
            raise SchemaError(f"{path}: malformed risk_grid header")
        xmin, xmax, ymin, ymax = map(float, header[2:6])
        nx, ny = int(header[6]), int(header[7])
        values = np.loadtxt(fh, dtype=float).reshape(ny, nx)
    xs = np.linspace(xmin, xmax, nx) if nx > 1 else np.array([xmin])
    ys = np.linspace(ymin, ymax, ny) if ny > 1 else np.array([ymin])
    return RiskGrid(xs=xs, ys=ys, values=values)


class HorizonRiskField:
    """Risk evaluated along a planning horizon with per-step obstacle poses.

    The host anchor (position for the attenuation, speed for relative
    velocities) is frozen at the state the plan starts from, so the field is
    a pure function of the query position at each step.
    """

    def __init__(self, predictions, params: RiskFieldParams, anchor: VehicleState):
        self.params = params
        self.anchor = anchor
        self.n_steps = len(predictions)
        counts = {len(row) for row in predictions}
        self.n_obstacles = max(counts) if counts else 0
        if self.n_obstacles and counts != {self.n_obstacles}:
            raise ParameterError("every prediction step must list the same obstacles")
        if self.n_obstacles:
            self._ox = np.array([[o.x for o in row] for row in predictions])
            self._oy = np.array([[o.y for o in row] for row in predictions])
            self._oh = np.array([[o.heading for o in row] for row in predictions])
            self._ov = np.array([[o.speed for o in row] for row in predictions])

    def _eval(self, positions, want_gradient):
        pts = np.asarray(positions, dtype=float)
        if pts.shape[-2:] != (self.n_steps, 2):
            raise ParameterError(f"expected positions of shape (..., {self.n_steps}, 2), got {pts.shape}")
        if self.n_obstacles == 0:
            return np.zeros(pts.shape[:-1]), np.zeros(pts.shape)
        value, grad = _field_eval(pts[:, 0], pts[:, 1], self._ox, self._oy, self._oh, self._ov,
                                  self.anchor.x, self.anchor.y, self.anchor.v,
                                  self.params, want_gradient)
        return value, grad

    def values(self, positions) -> np.ndarray:
        return self._eval(positions, False)[0]

    def gradients(self, positions) -> np.ndarray:
        return self._eval(positions, True)[1]

    def hessians(self, positions, exact: bool = False) -> np.ndarray:
        """Per-step 2x2 curvature of the risk term.

        Default is a positive-semidefinite Gauss-Newton surrogate built from
        the gradient outer product through the square-root composition
        R = (sqrt(R))^2, i.e. grad grad^T / (2 R). With ``exact=True`` the
        true (possibly indefinite) Hessian is formed by central differences
        of the analytic gradient.
        """
        pts = np.asarray(positions, dtype=float)
        if exact:
            h = 1e-5
            out = np.empty((self.n_steps, 2, 2))
            for j in range(2):
                shift = np.zeros(2)
                shift[j] = h
                out[:, :, j] = (self.gradients(pts + shift) - self.gradients(pts - shift)) / (2.0 * h)
            return 0.5 * (out + np.swapaxes(out, 1, 2))
        value, grad = self._eval(pts, True)
        scale = np.where(value > 0.0, 0.5 / np.maximum(value, _TINY), 0.0)
        return scale[:, None, None] * grad[:, :, None] * grad[:, None, :]
