"""Independent reference implementations the test suite compares against.

Every function here recomputes something the library also computes, by a
deliberately different route: finite differences instead of analytic
derivatives, a standalone Riccati recursion instead of the iLQR backward
pass, brute-force grid scans instead of certificate algebra, closed-form
kinematics instead of simulated ones. None of them import solver internals.
"""
from __future__ import annotations

import math

import numpy as np

from riskcorridor.vehicle import ControlInput, VehicleGeometry, VehicleLimits, VehicleState, step


def fd_step_jacobians(state: VehicleState, u: ControlInput, dt: float,
                      geom: VehicleGeometry, limits: VehicleLimits,
                      h: float = 1e-6):
    """Central-difference Jacobians of the public `step` operation."""

    def f(xv, uv):
        s = VehicleState(*xv)
        nxt = step(s, ControlInput(uv[0], uv[1]), dt, geom, limits)
        return nxt.as_array()

    x0 = state.as_array()
    u0 = np.array([u.a, u.phi_ddot])
    a = np.empty((6, 6))
    b = np.empty((6, 2))
    for j in range(6):
        dx = np.zeros(6)
        dx[j] = h
        a[:, j] = (f(x0 + dx, u0) - f(x0 - dx, u0)) / (2.0 * h)
    for j in range(2):
        du = np.zeros(2)
        du[j] = h
        b[:, j] = (f(x0, u0 + du) - f(x0, u0 - du)) / (2.0 * h)
    return a, b


def euler_bicycle_step(x, y, v, theta, phi, phi_dot, a, phi_ddot, dt, wheelbase):
    """The forward-Euler bicycle update written out longhand."""
    return (x + v * math.cos(theta) * dt,
            y + v * math.sin(theta) * dt,
            v + a * dt,
            theta + v * math.tan(phi) / wheelbase * dt,
            phi + phi_dot * dt,
            phi_dot + phi_ddot * dt)


def rk4_bicycle_step(state6, control2, dt, wheelbase):
    """Classic fourth-order step of the continuous bicycle model.

    Reference integrator for the sub-stepping convergence property; returns
    the unclamped, unwrapped state.
    """

    def deriv(s):
        x, y, v, theta, phi, phi_dot = s
        return np.array([v * math.cos(theta), v * math.sin(theta), control2[0],
                         v * math.tan(phi) / wheelbase, phi_dot, control2[1]])

    s = np.asarray(state6, dtype=float)
    k1 = deriv(s)
    k2 = deriv(s + 0.5 * dt * k1)
    k3 = deriv(s + 0.5 * dt * k2)
    k4 = deriv(s + dt * k3)
    return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def fd_gradient(f, p, h: float = 1e-5) -> np.ndarray:
    """Central-difference spatial gradient of a scalar field at point p."""
    p = np.asarray(p, dtype=float)
    g = np.empty(2)
    for j in range(2):
        dp = np.zeros(2)
        dp[j] = h
        g[j] = (f(p + dp) - f(p - dp)) / (2.0 * h)
    return g


def rotate(p, angle):
    """Plain 2x2 rotation, the oracle-side frame transform."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]])


def lq_tracking_riccati(a_mat, b_mat, q, r, q_term, refs, x0):
    """Finite-horizon tracking LQR by backward Riccati recursion.

    Minimizes sum_k (x_k - r_k)' q (x_k - r_k) + u_k' r u_k plus the terminal
    q_term form, subject to x_{k+1} = a_mat x_k + b_mat u_k. The value
    function is carried as x' P x + 2 g' x. Returns (states, controls,
    feedback gains).
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b_mat = np.asarray(b_mat, dtype=float)
    refs = np.asarray(refs, dtype=float)
    n_steps = len(refs) - 1
    p = np.asarray(q_term, dtype=float)
    g = -p @ refs[-1]
    gains = [None] * n_steps
    shifts = [None] * n_steps
    for k in range(n_steps - 1, -1, -1):
        huu = r + b_mat.T @ p @ b_mat
        gain = -np.linalg.solve(huu, b_mat.T @ p @ a_mat)
        shift = -np.linalg.solve(huu, b_mat.T @ g)
        closed = a_mat + b_mat @ gain
        drift = b_mat @ shift
        p_new = q + gain.T @ r @ gain + closed.T @ p @ closed
        g = -q @ refs[k] + gain.T @ r @ shift + closed.T @ (p @ drift + g)
        p = 0.5 * (p_new + p_new.T)
        gains[k] = gain
        shifts[k] = shift
    states = np.empty((n_steps + 1, len(x0)))
    controls = np.empty((n_steps, b_mat.shape[1]))
    states[0] = x0
    for k in range(n_steps):
        controls[k] = gains[k] @ states[k] + shifts[k]
        states[k + 1] = a_mat @ states[k] + b_mat @ controls[k]
    return states, controls, gains


def lq_tracking_lstsq(a_mat, b_mat, q, r, q_term, refs, x0):
    """The same tracking problem solved as one batch least-squares system.

    Cross-checks the Riccati oracle by an unrelated algorithm: stack the
    whitened state and control residuals of the full horizon and solve the
    normal equations once.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b_mat = np.asarray(b_mat, dtype=float)
    refs = np.asarray(refs, dtype=float)
    n = a_mat.shape[0]
    m = b_mat.shape[1]
    n_steps = len(refs) - 1

    def sqrtm(mat):
        vals, vecs = np.linalg.eigh(np.asarray(mat, dtype=float))
        return vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0))) @ vecs.T

    wq, wr, wt = sqrtm(q), sqrtm(r), sqrtm(q_term)
    # x_k = a^k x0 + sum_j a^(k-1-j) b u_j, assembled row-block by row-block.
    powers = [np.eye(n)]
    for _ in range(n_steps):
        powers.append(a_mat @ powers[-1])
    rows = []
    rhs = []
    for k in range(n_steps + 1):
        w = wt if k == n_steps else wq
        block = np.zeros((n, n_steps * m))
        for j in range(k):
            block[:, j * m:(j + 1) * m] = powers[k - 1 - j] @ b_mat
        rows.append(w @ block)
        rhs.append(w @ (refs[k] - powers[k] @ x0))
    for j in range(n_steps):
        block = np.zeros((m, n_steps * m))
        block[:, j * m:(j + 1) * m] = np.eye(m)
        rows.append(wr @ block)
        rhs.append(np.zeros(m))
    sol, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    controls = sol.reshape(n_steps, m)
    states = np.empty((n_steps + 1, n))
    states[0] = x0
    for k in range(n_steps):
        states[k + 1] = a_mat @ states[k] + b_mat @ controls[k]
    return states, controls


def point_rect_distance(points, cx, cy, heading, length, width) -> np.ndarray:
    """Distance from points (..., 2) to an oriented rectangle, zero inside.

    Independent of the geometry module: rotate into the body frame, clamp to
    the half extents, measure the remainder.
    """
    pts = np.asarray(points, dtype=float)
    dx = pts[..., 0] - cx
    dy = pts[..., 1] - cy
    c, s = math.cos(heading), math.sin(heading)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    ex = np.maximum(np.abs(lx) - 0.5 * length, 0.0)
    ey = np.maximum(np.abs(ly) - 0.5 * width, 0.0)
    return np.hypot(ex, ey)


def region_grid(region, resolution: float) -> np.ndarray:
    """All grid points of the region at the given spacing, corners included."""
    nx = max(int(math.ceil((region.x_upper - region.x_lower) / resolution)), 1)
    ny = max(int(math.ceil((region.y_upper - region.y_lower) / resolution)), 1)
    xs = np.linspace(region.x_lower, region.x_upper, nx + 1)
    ys = np.linspace(region.y_lower, region.y_upper, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def audit_corridor(regions, predictions, resolution: float = 0.05) -> float:
    """Smallest grid-point-to-footprint distance over a whole corridor.

    Brute force: every region is rasterized at `resolution` and every point
    is measured against every obstacle footprint predicted for that step.
    """
    worst = math.inf
    for k, region in enumerate(regions):
        pts = region_grid(region, resolution)
        for obs in predictions[k]:
            d = point_rect_distance(pts, obs.x, obs.y, obs.heading,
                                    obs.body_length, obs.body_width)
            worst = min(worst, float(d.min()))
    return worst


def closest_approach(p0, v0, q0, u0, t_max: float):
    """Minimum distance of two constant-velocity points over [0, t_max].

    Closed-form quadratic minimization of |dp + dv t|^2, clamped to the
    window. Returns (distance, time).
    """
    dp = np.asarray(p0, dtype=float) - np.asarray(q0, dtype=float)
    dv = np.asarray(v0, dtype=float) - np.asarray(u0, dtype=float)
    denom = float(dv @ dv)
    t_star = 0.0 if denom == 0.0 else float(-(dp @ dv) / denom)
    t_star = min(max(t_star, 0.0), t_max)
    return float(np.linalg.norm(dp + dv * t_star)), t_star


def corridor_face_positions(seed_bounds, alpha, gamma0, decay_rate, dt, n_steps):
    """Closed-form face positions of an unobstructed corridor at theta = 0.

    Face k has accumulated the geometric series of decayed growth increments
    alpha * gamma0 * e^(-decay_rate * j * dt) * dt for j < k.
    """
    ratio = math.exp(-decay_rate * dt)
    out = []
    for k in range(n_steps + 1):
        total = alpha * gamma0 * dt * sum(ratio**j for j in range(k))
        xl, xu, yl, yu = seed_bounds
        out.append((xl - total, xu + total, yl - total, yu + total))
    return out
