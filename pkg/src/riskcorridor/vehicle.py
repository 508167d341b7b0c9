"""Discrete-time kinematic bicycle model with a steering-rate chain.

State vector (6 entries): ``[x, y, v, theta, phi, phi_dot]``
Control vector (2 entries): ``[a, phi_ddot]``

Forward-Euler update over a sampling period dt:

    x       += v cos(theta) dt
    y       += v sin(theta) dt
    v       += a dt
    theta   += v tan(phi) / L dt        (rewrapped to (-pi, pi])
    phi     += phi_dot dt               (clamped to [-phi_max, phi_max])
    phi_dot += phi_ddot dt              (zeroed when the phi clamp saturates)

L is the wheelbase. The model has no reverse gear in any bundled scenario;
scenarios are expected to keep v >= 0 at all times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError, ParameterError, SingularSteeringError
from .geometry import wrap_angle

N_STATES = 6
N_CONTROLS = 2


@dataclass(frozen=True)
class VehicleGeometry:
    """Host body dimensions in meters."""

    wheelbase: float = 2.7
    body_length: float = 4.5
    body_width: float = 1.8

    def __post_init__(self) -> None:
        if not (self.wheelbase > 0.0 and self.body_length > 0.0 and self.body_width > 0.0):
            raise ParameterError("vehicle dimensions must be positive")
        if not self.wheelbase < self.body_length:
            raise ParameterError("wheelbase must be shorter than the body length")


@dataclass(frozen=True)
class VehicleLimits:
    """Actuation bounds: steering angle, acceleration, steering acceleration."""

    phi_max: float = 0.6
    a_max: float = 3.0
    phi_ddot_max: float = 4.0

    def __post_init__(self) -> None:
        if not (0.0 < self.phi_max < 0.5 * math.pi):
            raise ParameterError("phi_max must lie in (0, pi/2)")
        if not (self.a_max > 0.0 and self.phi_ddot_max > 0.0):
            raise ParameterError("control bounds must be positive")


@dataclass(frozen=True)
class VehicleState:
    """Vehicle state; theta is stored wrapped to (-pi, pi]."""

    x: float
    y: float
    v: float
    theta: float
    phi: float
    phi_dot: float

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.v, self.theta, self.phi, self.phi_dot)
        if not all(math.isfinite(f) for f in values):
            raise InvalidStateError(f"non-finite vehicle state {values}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.theta, self.phi, self.phi_dot])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (N_STATES,):
            raise InvalidStateError(f"expected a length-{N_STATES} state vector, got shape {arr.shape}")
        return cls(*map(float, arr))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def space_state(self) -> np.ndarray:
        """Projection [x, y, theta, v, phi] used by the corridor machinery."""
        return np.array([self.x, self.y, self.theta, self.v, self.phi])


@dataclass(frozen=True)
class ControlInput:
    """Longitudinal acceleration and steering acceleration."""

    a: float
    phi_ddot: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.phi_ddot)):
            raise InvalidStateError(f"non-finite control ({self.a}, {self.phi_ddot})")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.phi_ddot])


def step_array(states, controls, dt: float, wheelbase: float, phi_max: float) -> np.ndarray:
    """Euler step on raw arrays; states (..., 6), controls (..., 2).

    Vectorized over leading dimensions. The steering clamp and its phi_dot
    zeroing match :func:`step`.
    """
    x = np.asarray(states, dtype=float)
    u = np.asarray(controls, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (N_STATES,))
    v, theta, phi = x[..., 2], x[..., 3], x[..., 4]
    out[..., 0] = x[..., 0] + v * np.cos(theta) * dt
    out[..., 1] = x[..., 1] + v * np.sin(theta) * dt
    out[..., 2] = v + u[..., 0] * dt
    out[..., 3] = wrap_angle(theta + v * np.tan(phi) / wheelbase * dt)
    phi_new = phi + x[..., 5] * dt
    phi_dot_new = x[..., 5] + u[..., 1] * dt
    saturated = np.abs(phi_new) > phi_max
    out[..., 4] = np.clip(phi_new, -phi_max, phi_max)
    out[..., 5] = np.where(saturated, 0.0, phi_dot_new)
    return out


def step(state: VehicleState, control: ControlInput, dt: float,
         geom: VehicleGeometry, limits: VehicleLimits | None = None) -> VehicleState:
    """Advance the state by one Euler step of length dt.

    Raises ParameterError for dt <= 0. Non-finite inputs are rejected by the
    state/control constructors.
    """
    if not dt > 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    limits = limits or VehicleLimits()
    nxt = step_array(state.as_array(), control.as_array(), dt, geom.wheelbase, limits.phi_max)
    return VehicleState.from_array(nxt)


def jacobians_array(states, controls, dt: float, wheelbase: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of the unclamped Euler step on raw arrays.

    Returns (A, B) with shapes (..., 6, 6) and (..., 6, 2). Valid away from
    the steering clamp and the theta wrap boundary, where the step map is
    smooth.
    """
    x = np.asarray(states, dtype=float)
    lead = x.shape[:-1]
    v, theta, phi = x[..., 2], x[..., 3], x[..., 4]
    A = np.zeros(lead + (N_STATES, N_STATES))
    idx = np.arange(N_STATES)
    A[..., idx, idx] = 1.0
    A[..., 0, 2] = np.cos(theta) * dt
    A[..., 0, 3] = -v * np.sin(theta) * dt
    A[..., 1, 2] = np.sin(theta) * dt
    A[..., 1, 3] = v * np.cos(theta) * dt
    A[..., 3, 2] = np.tan(phi) / wheelbase * dt
    A[..., 3, 4] = v * dt / (wheelbase * np.cos(phi) ** 2)
    A[..., 4, 5] = dt
    B = np.zeros(lead + (N_STATES, N_CONTROLS))
    B[..., 2, 0] = dt
    B[..., 5, 1] = dt
    return A, B


def jacobians(state: VehicleState, control: ControlInput, dt: float,
              geom: VehicleGeometry) -> tuple[np.ndarray, np.ndarray]:
    """State and control Jacobians (6x6, 6x2) of the Euler step."""
    if not dt > 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if abs(state.phi) >= 0.5 * math.pi:
        raise SingularSteeringError(f"|phi| = {abs(state.phi)} >= pi/2")
    A, B = jacobians_array(state.as_array(), control.as_array(), dt, geom.wheelbase)
    return A, B


def curvature(phi: float, geom: VehicleGeometry) -> float:
    """Instantaneous path curvature tan(phi) / wheelbase."""
    if not math.isfinite(phi):
        raise InvalidStateError(f"non-finite steering angle {phi}")
    if abs(phi) >= 0.5 * math.pi:
        raise SingularSteeringError(f"|phi| = {abs(phi)} >= pi/2")
    return math.tan(phi) / geom.wheelbase
