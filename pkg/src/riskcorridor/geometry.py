"""Planar geometry helpers: oriented rectangles and distance queries.

Rectangles are described by their center, heading and full body dimensions.
Distances are Euclidean, zero when shapes touch or overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to the interval (-pi, pi]."""
    wrapped = np.remainder(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle with center (cx, cy), heading (rad) and full length/width (m)."""

    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def __post_init__(self) -> None:
        if not (self.length > 0.0 and self.width > 0.0):
            raise ParameterError(f"rectangle dimensions must be positive, got {self.length} x {self.width}")

    def axes(self) -> np.ndarray:
        """Unit axes as rows: longitudinal first, lateral second."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    def corners(self) -> np.ndarray:
        """Corner coordinates, shape (4, 2), counter-clockwise."""
        ax = self.axes()
        hl, hw = 0.5 * self.length, 0.5 * self.width
        center = np.array([self.cx, self.cy])
        signs = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
        return center + signs @ (ax * np.array([[hl], [hw]]))

    def inflate(self, margin: float) -> "OrientedRect":
        """Grow every side outward by ``margin`` meters."""
        return OrientedRect(self.cx, self.cy, self.heading,
                            self.length + 2.0 * margin, self.width + 2.0 * margin)

    def aabb(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounding box (x_lower, x_upper, y_lower, y_upper)."""
        corners = self.corners()
        return (float(corners[:, 0].min()), float(corners[:, 0].max()),
                float(corners[:, 1].min()), float(corners[:, 1].max()))

    def point_distance(self, points) -> np.ndarray:
        """Distance from points (..., 2) to this rectangle; zero inside."""
        pts = np.asarray(points, dtype=float)
        rel = pts - np.array([self.cx, self.cy])
        ax = self.axes()
        local = rel @ ax.T
        excess = np.maximum(np.abs(local) - np.array([0.5 * self.length, 0.5 * self.width]), 0.0)
        return np.hypot(excess[..., 0], excess[..., 1])

    def contains_point(self, point, tol: float = 0.0) -> bool:
        return bool(self.point_distance(np.asarray(point)) <= tol)


def _segment_point_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point (n, 2) to the segment [seg_a, seg_b]."""
    direction = seg_b - seg_a
    denom = float(direction @ direction)
    if denom == 0.0:
        return np.linalg.norm(points - seg_a, axis=-1)
    t = np.clip((points - seg_a) @ direction / denom, 0.0, 1.0)
    closest = seg_a + t[:, None] * direction
    return np.linalg.norm(points - closest, axis=-1)


def _polygons_intersect(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons given as corner arrays."""
    for corners in (corners_a, corners_b):
        edges = np.roll(corners, -1, axis=0) - corners
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        for n in normals:
            pa = corners_a @ n
            pb = corners_b @ n
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def rect_rect_distance(a: OrientedRect, b: OrientedRect) -> float:
    """Euclidean clearance between two rectangles; zero when they overlap."""
    ca, cb = a.corners(), b.corners()
    if _polygons_intersect(ca, cb):
        return 0.0
    best = math.inf
    for corners, other in ((ca, cb), (cb, ca)):
        for i in range(4):
            d = _segment_point_distance(corners, other[i], other[(i + 1) % 4])
            best = min(best, float(d.min()))
    return best
