"""Corridor-constrained trajectory optimizer.

Iterative LQR over the kinematic bicycle with a quadratic tracking cost, a
risk term evaluated on the planned positions, and a soft containment penalty
against the convex corridor. The forward rollout projects positions back into
their region whenever a candidate step leaves it and records the violation
distance; the recorded violation feeds both the cost and its expansion, so
the backward pass keeps steering the solution inward until the projection
goes inactive. The returned trajectory is always a pure unprojected rollout
of the final controls, so dynamics consistency is exact and any residual
containment error is reported honestly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corridor import ConvexRegion
from .errors import InfeasibleSeedError, ParameterError, SolverFailureError
from .geometry import wrap_angle
from .risk import HorizonRiskField
from .vehicle import (N_CONTROLS, N_STATES, VehicleGeometry, VehicleLimits, VehicleState,
                      jacobians_array, step_array)

_THETA = 3  # angular component of the state; deviations get wrapped


@dataclass(frozen=True)
class CostWeights:
    """Quadratic tracking weights plus the risk and containment multipliers."""

    state: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 0.5, 0.1, 0.01, 0.01]))
    control: np.ndarray = field(default_factory=lambda: np.diag([0.5, 0.1]))
    terminal: np.ndarray | None = None
    risk_weight: float = 5.0
    corridor_weight: float = 200.0

    def __post_init__(self) -> None:
        q = np.asarray(self.state, dtype=float)
        r = np.asarray(self.control, dtype=float)
        if q.shape != (N_STATES, N_STATES) or r.shape != (N_CONTROLS, N_CONTROLS):
            raise ParameterError("state weights must be 6x6 and control weights 2x2")
        term = 10.0 * q if self.terminal is None else np.asarray(self.terminal, dtype=float)
        if term.shape != (N_STATES, N_STATES):
            raise ParameterError("terminal weights must be 6x6")
        for m, name in ((q, "state"), (r, "control"), (term, "terminal")):
            if not np.allclose(m, m.T):
                raise ParameterError(f"{name} weight matrix must be symmetric")
        if self.risk_weight < 0.0 or self.corridor_weight < 0.0:
            raise ParameterError("risk and corridor weights must be non-negative")
        object.__setattr__(self, "state", q)
        object.__setattr__(self, "control", r)
        object.__setattr__(self, "terminal", term)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    tol_cost: float = 1e-6
    tol_grad: float = 1e-4
    mu_init: float = 1e-6
    mu_max: float = 1e6
    mu_factor: float = 10.0
    n_alphas: int = 11  # line search over 2**0 .. 2**-(n_alphas-1)
    clamp_reference: bool = True
    reference_margin: float = 0.3

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be at least 1")
        if not (0.0 < self.mu_init <= self.mu_max):
            raise ParameterError("need 0 < mu_init <= mu_max")
        if self.mu_factor <= 1.0:
            raise ParameterError("mu_factor must exceed 1")
        if self.n_alphas < 1 or self.reference_margin < 0.0:
            raise ParameterError("n_alphas must be >= 1 and reference_margin >= 0")


@dataclass(frozen=True)
class Trajectory:
    """Planned motion: states (N+1, 6), controls (N, 2), absolute times (N+1,)."""

    states: np.ndarray
    controls: np.ndarray
    times: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.controls)
        if self.states.shape != (n + 1, N_STATES) or self.times.shape != (n + 1,):
            raise ParameterError("inconsistent trajectory array shapes")

    @property
    def horizon(self) -> int:
        return len(self.controls)

    def positions(self) -> np.ndarray:
        return self.states[:, :2]


@dataclass(frozen=True)
class SolveReport:
    converged: bool
    status: str
    iterations: int
    cost: float
    cost_trace: tuple[float, ...]
    gradient_norm: float
    regularization: float
    final_max_violation: float
    stage_costs: tuple[float, ...]


@dataclass(frozen=True)
class BackwardPassResult:
    ok: bool
    gains: np.ndarray        # (N, m, n) feedback
    feedforward: np.ndarray  # (N, m)
    qu_max: float            # largest stationarity residual
    dv_linear: float         # sum k . Qu
    dv_quadratic: float      # 0.5 sum k . Quu k


def backward_pass(a_mats, b_mats, lx, lu, lxx, luu, mu: float = 0.0) -> BackwardPassResult:
    """Riccati sweep over a time-varying linear-quadratic expansion.

    Inputs are raw derivative arrays: lx (N+1, n), lxx (N+1, n, n) include the
    terminal entry, lu and luu cover the N stages, and a_mats/b_mats are the
    dynamics Jacobians. Regularization mu is added to Quu before inversion;
    a non-positive-definite Quu aborts with ok=False.
    """
    a_mats = np.asarray(a_mats, dtype=float)
    b_mats = np.asarray(b_mats, dtype=float)
    n_steps, n, m = b_mats.shape[0], b_mats.shape[1], b_mats.shape[2]
    gains = np.zeros((n_steps, m, n))
    feedforward = np.zeros((n_steps, m))
    vx = lx[-1].copy()
    vxx = lxx[-1].copy()
    qu_max = 0.0
    dv1 = 0.0
    dv2 = 0.0
    for k in range(n_steps - 1, -1, -1):
        a_k, b_k = a_mats[k], b_mats[k]
        qx = lx[k] + a_k.T @ vx
        qu = lu[k] + b_k.T @ vx
        qxx = lxx[k] + a_k.T @ vxx @ a_k
        quu = luu[k] + b_k.T @ vxx @ b_k
        qux = b_k.T @ vxx @ a_k
        quu_reg = quu + mu * np.eye(m)
        try:
            chol = np.linalg.cholesky(quu_reg)
        except np.linalg.LinAlgError:
            return BackwardPassResult(False, gains, feedforward, qu_max, dv1, dv2)
        sol = np.linalg.solve(chol.T, np.linalg.solve(chol, np.column_stack([qu[:, None], qux])))
        kff = -sol[:, 0]
        gain = -sol[:, 1:]
        feedforward[k] = kff
        gains[k] = gain
        qu_max = max(qu_max, float(np.abs(qu).max()))
        dv1 += float(kff @ qu)
        dv2 += 0.5 * float(kff @ quu_reg @ kff)
        vx = qx + gain.T @ quu_reg @ kff + gain.T @ qu + qux.T @ kff
        vxx = qxx + gain.T @ quu_reg @ gain + gain.T @ qux + qux.T @ gain
        vxx = 0.5 * (vxx + vxx.T)
    return BackwardPassResult(True, gains, feedforward, qu_max, dv1, dv2)


def _clamp_controls(controls, limits: VehicleLimits) -> np.ndarray:
    out = np.empty_like(controls)
    out[..., 0] = np.clip(controls[..., 0], -limits.a_max, limits.a_max)
    out[..., 1] = np.clip(controls[..., 1], -limits.phi_ddot_max, limits.phi_ddot_max)
    return out


class _Problem:
    """Bundles the pieces the solver iterates over.

    Containment is handled as an augmented Lagrangian over the four region
    faces per step. A quadratic penalty alone leaves an O(1/weight) residual
    whenever tracking pushes against an active face; the per-face multipliers
    absorb that force so the solution lands exactly on or inside the
    boundary. The rollout itself is unconstrained, which keeps the local
    quadratic model exact.
    """

    def __init__(self, x0, reference, corridor, risk_field, weights, options,
                 geom, limits, dt):
        self.x0 = x0
        self.reference = reference
        self.corridor = corridor
        self.field = risk_field
        self.weights = weights
        self.options = options
        self.geom = geom
        self.limits = limits
        self.dt = dt
        self.horizon = len(reference) - 1
        # Face order per step: x_lower, x_upper, y_lower, y_upper.
        self._face_bounds = np.array(
            [[r.x_lower, r.x_upper, r.y_lower, r.y_upper] for r in corridor])
        # With this penalty scale the multiplier-free gradients match a plain
        # quadratic corridor_weight penalty, so behavior is unchanged until a
        # face actually binds.
        self.mu_phr = 2.0 * weights.corridor_weight
        self.lam = np.zeros((self.horizon + 1, 4))
        # Soft steering bound below the hard clamp. The dynamics Jacobians
        # describe the unclamped step, so iterates that ride the clamp break
        # the local model; this term keeps them just under it.
        self.phi_soft = 0.9 * limits.phi_max
        self.w_phi = 500.0

    def face_gaps(self, states) -> np.ndarray:
        """Signed distance past each face (negative inside) per step."""
        b = self._face_bounds
        g = np.empty(states.shape[:-1] + (4,))
        g[..., 0] = b[:, 0] - states[..., 0]
        g[..., 1] = states[..., 0] - b[:, 1]
        g[..., 2] = b[:, 2] - states[..., 1]
        g[..., 3] = states[..., 1] - b[:, 3]
        return g

    def max_gap(self, states) -> float:
        """Largest outward face excess along the trajectory; <= 0 inside."""
        return float(self.face_gaps(states).max(initial=0.0))

    def update_multipliers(self, states) -> None:
        self.lam = np.maximum(0.0, self.lam + self.mu_phr * self.face_gaps(states))

    def rollout(self, controls, base_states=None, gains=None, feedforward=None,
                alpha: float = 1.0):
        """Roll controls forward, optionally with feedback off base_states."""
        n = self.horizon
        states = np.empty((n + 1, N_STATES))
        new_controls = np.empty((n, N_CONTROLS))
        states[0] = self.x0.as_array()
        for k in range(n):
            u = controls[k]
            if gains is not None:
                dx = states[k] - base_states[k]
                dx[_THETA] = wrap_angle(dx[_THETA])
                u = u + alpha * feedforward[k] + gains[k] @ dx
            u = _clamp_controls(u, self.limits)
            new_controls[k] = u
            states[k + 1] = step_array(states[k], u, self.dt, self.geom.wheelbase,
                                       self.limits.phi_max)
        return states, new_controls

    def rollout_candidates(self, controls, base_states, gains, feedforward,
                           alphas):
        """Roll out every line-search step size in one batched horizon sweep.

        Equivalent to calling ``rollout`` once per alpha, but the per-step
        work is shared across candidates, which is what keeps a line search
        with many rejections affordable.
        """
        n = self.horizon
        m = len(alphas)
        states = np.empty((m, n + 1, N_STATES))
        new_controls = np.empty((m, n, N_CONTROLS))
        states[:, 0] = self.x0.as_array()
        scaled = np.asarray(alphas)[:, None]
        for k in range(n):
            dx = states[:, k] - base_states[k]
            dx[:, _THETA] = wrap_angle(dx[:, _THETA])
            u = controls[k] + scaled * feedforward[k] + dx @ gains[k].T
            u = _clamp_controls(u, self.limits)
            new_controls[:, k] = u
            states[:, k + 1] = step_array(states[:, k], u, self.dt,
                                          self.geom.wheelbase, self.limits.phi_max)
        return states, new_controls

    def stage_costs(self, states, controls, internal: bool = False) -> np.ndarray:
        """Per-step cost including the terminal entry at index N.

        ``internal=True`` evaluates the augmented-Lagrangian containment term
        the solver optimizes; the default is the plain reporting objective
        with a quadratic penalty on the outward excess.
        """
        w = self.weights
        dev = states - self.reference
        dev[:, _THETA] = wrap_angle(dev[:, _THETA])
        costs = np.empty(self.horizon + 1)
        costs[:-1] = np.einsum("ki,ij,kj->k", dev[:-1], w.state, dev[:-1])
        costs[-1] = dev[-1] @ w.terminal @ dev[-1]
        costs[:-1] += np.einsum("ki,ij,kj->k", controls, w.control, controls)
        if self.field is not None and w.risk_weight > 0.0:
            costs += w.risk_weight * self.field.values(states[:, :2])
        gaps = self.face_gaps(states)
        if internal:
            shifted = np.maximum(0.0, self.lam + self.mu_phr * gaps)
            costs += np.sum(shifted**2 - self.lam**2, axis=1) / (2.0 * self.mu_phr)
            costs += self.w_phi * np.maximum(0.0, np.abs(states[:, 4]) - self.phi_soft) ** 2
        else:
            costs += w.corridor_weight * np.sum(np.maximum(0.0, gaps)**2, axis=1)
        return costs

    def total_cost(self, states, controls, internal: bool = False) -> float:
        return float(self.stage_costs(states, controls, internal).sum())

    def expansions(self, states, controls):
        """First and second derivative arrays of the cost along a rollout."""
        w = self.weights
        n = self.horizon
        dev = states - self.reference
        dev[:, _THETA] = wrap_angle(dev[:, _THETA])
        lx = np.empty((n + 1, N_STATES))
        lxx = np.empty((n + 1, N_STATES, N_STATES))
        lx[:-1] = 2.0 * dev[:-1] @ w.state
        lx[-1] = 2.0 * w.terminal @ dev[-1]
        lxx[:-1] = 2.0 * w.state
        lxx[-1] = 2.0 * w.terminal
        lu = 2.0 * controls @ w.control
        luu = np.broadcast_to(2.0 * w.control, (n, N_CONTROLS, N_CONTROLS)).copy()
        if self.field is not None and w.risk_weight > 0.0:
            lx[:, :2] += w.risk_weight * self.field.gradients(states[:, :2])
            lxx[:, :2, :2] += w.risk_weight * self.field.hessians(states[:, :2])
        force = np.maximum(0.0, self.lam + self.mu_phr * self.face_gaps(states))
        lx[:, 0] += force[:, 1] - force[:, 0]
        lx[:, 1] += force[:, 3] - force[:, 2]
        active = (force > 0.0).astype(float)
        lxx[:, 0, 0] += self.mu_phr * (active[:, 0] + active[:, 1])
        lxx[:, 1, 1] += self.mu_phr * (active[:, 2] + active[:, 3])
        phi = states[:, 4]
        excess = np.maximum(0.0, np.abs(phi) - self.phi_soft)
        lx[:, 4] += 2.0 * self.w_phi * np.sign(phi) * excess
        lxx[:, 4, 4] += 2.0 * self.w_phi * (excess > 0.0)
        return lx, lu, lxx, luu


def _clamped_reference(reference, corridor, margin: float, a_brake: float,
                       dt: float, fold_angle: float = 0.3) -> np.ndarray:
    """Pull reference positions into their regions and make them trackable.

    The per-step box clamp (inset by margin, saturating at just under half
    the region extent) keeps the tracking optimum strictly interior. Two
    follow-ups repair what clamping breaks. Where a region face cuts
    diagonally across the nominal path, clamping folds the reference around
    the face's corner; a mild fold just gets rounded off by the tracking
    cost, but past fold_angle the demanded turn is far inside the vehicle's
    minimum radius and chasing it contorts the solve, so the reference is
    pinned at the fold: brake and hold beats an impossible hairpin. And
    since a face cutting into the nominal progression can demand impossible
    deceleration, the polyline is re-traced with step lengths whose decrease
    is limited to a_brake per step, braking early instead of asking for a
    teleport.
    """
    ref = reference.copy()
    for k, region in enumerate(corridor):
        mx = min(margin, 0.49 * (region.x_upper - region.x_lower))
        my = min(margin, 0.49 * (region.y_upper - region.y_lower))
        ref[k, 0] = np.clip(ref[k, 0], region.x_lower + mx, region.x_upper - mx)
        ref[k, 1] = np.clip(ref[k, 1], region.y_lower + my, region.y_upper - my)
    seg = np.diff(ref[:, :2], axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    for k in range(1, len(seg)):
        # Short segments are reference points stacking up against a face;
        # their headings are noise, not a commanded turn, and the braking
        # re-trace below already handles the pile-up.
        if min(lengths[k - 1], lengths[k]) < 0.3:
            continue
        if abs(wrap_angle(headings[k] - headings[k - 1])) <= fold_angle:
            continue
        # A real fold has the raw path still far outside the boxes beyond
        # the corner. A sharp bend whose downstream points sit freely inside
        # theirs is clamp distortion (step k's box can be much smaller than
        # step k+1's, e.g. at the start), and those points are trackable.
        ahead = slice(k + 1, min(k + 4, len(ref)))
        displaced = np.hypot(ref[ahead, 0] - reference[ahead, 0],
                             ref[ahead, 1] - reference[ahead, 1])
        if displaced.size == 0 or displaced.mean() < 0.5:
            continue
        ref[k + 1:, 0] = ref[k, 0]
        ref[k + 1:, 1] = ref[k, 1]
        ref[k + 1:, _THETA] = ref[k, _THETA]
        break
    seg = np.diff(ref[:, :2], axis=0)
    speeds = np.hypot(seg[:, 0], seg[:, 1]) / dt
    for k in range(len(speeds) - 2, -1, -1):
        speeds[k] = min(speeds[k], speeds[k + 1] + a_brake * dt)
    s_orig = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    s_new = np.concatenate([[0.0], np.cumsum(speeds * dt)])
    if s_new[-1] < s_orig[-1] - 1e-12:
        ref[:, 0] = np.interp(s_new, s_orig, ref[:, 0])
        ref[:, 1] = np.interp(s_new, s_orig, ref[:, 1])
        ref[:, _THETA] = wrap_angle(np.interp(s_new, s_orig, np.unwrap(ref[:, _THETA])))
        ref[:-1, 2] = speeds
        ref[-1, 2] = speeds[-1]
    return ref


def plan(x0: VehicleState, reference, corridor, risk_field: HorizonRiskField | None,
         weights: CostWeights | None = None, options: SolverOptions | None = None,
         geom: VehicleGeometry | None = None, limits: VehicleLimits | None = None,
         dt: float = 0.1, u_init=None) -> tuple[Trajectory, SolveReport]:
    """Solve for a corridor-contained, risk-aware tracking trajectory.

    ``reference`` is an (N+1, 6) state reference, ``corridor`` the matching
    N+1 regions, and ``risk_field`` a horizon field with N+1 steps (or None
    to drop the risk term). ``u_init`` warm-starts the controls. The report
    carries the accepted-cost trace and the containment residual of the
    returned pure rollout.

    Raises InfeasibleSeedError when the start position is outside the first
    region, and SolverFailureError if the rollout ever goes non-finite.
    """
    weights = weights or CostWeights()
    options = options or SolverOptions()
    geom = geom or VehicleGeometry()
    limits = limits or VehicleLimits()
    reference = np.asarray(reference, dtype=float)
    if reference.ndim != 2 or reference.shape[1] != N_STATES or len(reference) < 2:
        raise ParameterError("reference must be an (N+1 >= 2, 6) array")
    n = len(reference) - 1
    if len(corridor) != n + 1:
        raise ParameterError(f"corridor must hold {n + 1} regions, got {len(corridor)}")
    if risk_field is not None and risk_field.n_steps != n + 1:
        raise ParameterError(f"risk field covers {risk_field.n_steps} steps, expected {n + 1}")
    if not corridor[0].contains((x0.x, x0.y), tol=1e-9):
        raise InfeasibleSeedError(
            f"start position ({x0.x:.3f}, {x0.y:.3f}) outside the first region "
            f"{corridor[0].bounds()}")
    if options.clamp_reference:
        reference = _clamped_reference(reference, corridor, options.reference_margin,
                                       limits.a_max, dt)

    prob = _Problem(x0, reference, corridor, risk_field, weights, options, geom, limits, dt)
    if u_init is None:
        controls = np.zeros((n, N_CONTROLS))
    else:
        controls = np.asarray(u_init, dtype=float).copy()
        if controls.shape != (n, N_CONTROLS):
            raise ParameterError(f"u_init must have shape ({n}, {N_CONTROLS})")
    states, controls = prob.rollout(controls)
    cost = prob.total_cost(states, controls, internal=True)
    if not np.isfinite(cost):
        raise SolverFailureError("initial rollout cost is not finite")

    mu = options.mu_init
    alphas = 2.0 ** -np.arange(options.n_alphas)
    trace = [cost]
    qu_max = np.inf
    converged = False
    status = "iteration limit"
    iterations = 0
    # Residual this small is numerically clean, far inside the 1e-9
    # containment the returned rollout must satisfy.
    contained_tol = 1e-12
    prev_gap = np.inf

    def outer_update():
        # Inner solve settled but a face still binds: absorb the boundary
        # force into the multipliers and restart the inner iteration. When
        # an update barely moves the residual the penalty scale is too weak
        # for the boundary force, so it escalates.
        nonlocal cost, mu, prev_gap
        prob.update_multipliers(states)
        gap = prob.max_gap(states)
        if gap > 0.25 * prev_gap:
            prob.mu_phr = min(4.0 * prob.mu_phr, 1e9)
        prev_gap = gap
        cost = prob.total_cost(states, controls, internal=True)
        mu = options.mu_init

    for iteration in range(1, options.max_iterations + 1):
        iterations = iteration
        a_mats, b_mats = jacobians_array(states[:-1], controls, dt, geom.wheelbase)
        lx, lu, lxx, luu = prob.expansions(states, controls)
        while True:
            bp = backward_pass(a_mats, b_mats, lx, lu, lxx, luu, mu)
            if bp.ok:
                break
            mu *= options.mu_factor
            if mu > options.mu_max:
                status = "regularization limit during backward pass"
                break
        if not bp.ok:
            break
        qu_max = bp.qu_max
        contained = prob.max_gap(states) <= contained_tol
        if qu_max < options.tol_grad:
            if contained:
                converged = True
                status = "gradient tolerance"
                break
            outer_update()
            continue

        cand_states, cand_controls = prob.rollout_candidates(
            controls, states, bp.gains, bp.feedforward, alphas)
        accepted = False
        for idx in range(len(alphas)):
            new_states = cand_states[idx]
            if not np.all(np.isfinite(new_states)):
                continue
            new_controls = cand_controls[idx]
            new_cost = prob.total_cost(new_states, new_controls, internal=True)
            if np.isfinite(new_cost) and new_cost < cost:
                accepted = True
                break
        if accepted:
            drop = cost - new_cost
            states, controls = new_states, new_controls
            cost = new_cost
            trace.append(cost)
            mu = max(mu / options.mu_factor, 1e-12)
            if drop < options.tol_cost * max(1.0, abs(cost)):
                if prob.max_gap(states) <= contained_tol:
                    converged = True
                    status = "cost tolerance"
                    break
                outer_update()
        else:
            mu *= options.mu_factor
            if mu > options.mu_max:
                if contained:
                    status = "line search stalled at maximum regularization"
                    break
                outer_update()

    # states is already an exact rollout of controls; the report carries the
    # plain objective and the true containment residual of that rollout.
    if not np.all(np.isfinite(states)):
        raise SolverFailureError("final rollout is not finite")
    final_violation = float(max(
        corridor[k].distance_outside(states[k, :2]) for k in range(n + 1)))
    stage = prob.stage_costs(states, controls)
    t0 = corridor[0].t
    trajectory = Trajectory(states=states, controls=controls,
                            times=t0 + dt * np.arange(n + 1))
    report = SolveReport(converged=converged, status=status, iterations=iterations,
                         cost=float(stage.sum()), cost_trace=tuple(trace),
                         gradient_norm=float(qu_max), regularization=float(mu),
                         final_max_violation=final_violation,
                         stage_costs=tuple(float(c) for c in stage))
    return trajectory, report
