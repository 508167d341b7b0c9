"""Surrounding vehicles and their scripted motion.

Scripts are closed-form functions of absolute time, so repeated queries never
accumulate integration error; arc followers stay on their circle exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidStateError, ParameterError
from .geometry import OrientedRect, wrap_angle


@dataclass(frozen=True)
class StraightMotion:
    """Constant speed along a fixed heading, starting from (x0, y0) at t=0."""

    x0: float
    y0: float
    heading: float
    speed: float

    def __post_init__(self) -> None:
        if self.speed < 0.0:
            raise ParameterError(f"speed must be non-negative, got {self.speed}")

    def pose_at(self, t: float) -> tuple[float, float, float, float]:
        return (self.x0 + self.speed * t * math.cos(self.heading),
                self.y0 + self.speed * t * math.sin(self.heading),
                self.heading, self.speed)


@dataclass(frozen=True)
class ArcMotion:
    """Constant angular rate on a circle; heading stays tangent."""

    cx: float
    cy: float
    radius: float
    angle0: float
    angular_rate: float

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise ParameterError(f"radius must be positive, got {self.radius}")

    def pose_at(self, t: float) -> tuple[float, float, float, float]:
        angle = self.angle0 + self.angular_rate * t
        heading = wrap_angle(angle + math.copysign(0.5 * math.pi, self.angular_rate)
                             if self.angular_rate != 0.0 else angle + 0.5 * math.pi)
        return (self.cx + self.radius * math.cos(angle),
                self.cy + self.radius * math.sin(angle),
                heading, abs(self.angular_rate) * self.radius)


@dataclass(frozen=True)
class WaypointMotion:
    """Piecewise-linear interpolation through timestamped waypoints.

    Beyond the final waypoint the pose is held with zero speed.
    """

    times: tuple[float, ...]
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.points) or len(self.times) < 2:
            raise ParameterError("waypoint script needs matching times/points, at least two")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ParameterError("waypoint times must be strictly increasing")

    def _segment_heading(self, i: int) -> float:
        (xa, ya), (xb, yb) = self.points[i], self.points[i + 1]
        return math.atan2(yb - ya, xb - xa)

    def pose_at(self, t: float) -> tuple[float, float, float, float]:
        times = self.times
        if t >= times[-1]:
            x, y = self.points[-1]
            return x, y, self._segment_heading(len(times) - 2), 0.0
        if t <= times[0]:
            x, y = self.points[0]
            seg = 0
            frac = 0.0
        else:
            seg = int(np.searchsorted(times, t, side="right")) - 1
            frac = (t - times[seg]) / (times[seg + 1] - times[seg])
        (xa, ya), (xb, yb) = self.points[seg], self.points[seg + 1]
        x = xa + frac * (xb - xa)
        y = ya + frac * (yb - ya)
        speed = math.hypot(xb - xa, yb - ya) / (times[seg + 1] - times[seg])
        return x, y, self._segment_heading(seg), speed


Motion = StraightMotion | ArcMotion | WaypointMotion


@dataclass(frozen=True)
class ObstacleVehicle:
    """Snapshot of a surrounding vehicle; immutable, safe to share across threads."""

    x: float
    y: float
    heading: float
    speed: float
    body_length: float = 4.5
    body_width: float = 1.8
    motion: Motion | None = None
    obstacle_id: int = 0

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.heading, self.speed)
        if not all(math.isfinite(f) for f in values):
            raise InvalidStateError(f"non-finite obstacle state {values}")
        if self.speed < 0.0:
            raise ParameterError(f"obstacle speed must be non-negative, got {self.speed}")
        if not (self.body_length > 0.0 and self.body_width > 0.0):
            raise ParameterError("obstacle footprint dimensions must be positive")

    def at_time(self, t: float) -> "ObstacleVehicle":
        """Snapshot at absolute time t per the motion script; static without one."""
        if self.motion is None:
            return self
        x, y, heading, speed = self.motion.pose_at(t)
        return replace(self, x=x, y=y, heading=wrap_angle(heading), speed=speed)

    def footprint(self) -> OrientedRect:
        return OrientedRect(self.x, self.y, self.heading, self.body_length, self.body_width)

    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])


def from_motion(motion: Motion, obstacle_id: int = 0, body_length: float = 4.5,
                body_width: float = 1.8) -> ObstacleVehicle:
    """Build the t=0 snapshot of a scripted obstacle."""
    x, y, heading, speed = motion.pose_at(0.0)
    return ObstacleVehicle(x, y, wrap_angle(heading), speed, body_length, body_width,
                           motion=motion, obstacle_id=obstacle_id)
