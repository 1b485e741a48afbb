"""Plan optimization and two-stage plan reoptimization for the driving cost."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import Scene, Trajectory, project_to_lane, rollout, wrap_angle
from .cost import (DRIVE6, CostModel, Window, evaluate_plan, grad_hess_controls,
                   trajectory_cost, window_from_scene)

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptResult:
    controls: np.ndarray
    objective: float
    iterations: int
    converged: bool


def optimize_controls(model: CostModel, window: Window, init, max_iter: int = 500,
                      rtol: float = 1e-8, gtol: float = 1e-9) -> OptResult:
    """Minimize the plan cost over controls.

    Newton steps on the analytic Hessian with eigenvalue clamping (falls back
    to a scaled gradient step where the Hessian is indefinite) and Armijo
    backtracking, so the objective never increases.
    """
    U = np.array(init, dtype=float).reshape(-1, 2)
    shape = U.shape
    f = trajectory_cost(model, window, U)
    if not np.isfinite(f):
        raise OptimizationError("initial plan cost is not finite")
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g, H = grad_hess_controls(model, window, U)
        if np.linalg.norm(g) <= gtol * max(1.0, abs(f)):
            converged = True
            break
        w, V = np.linalg.eigh(H)
        floor = max(1e-8, 1e-10 * np.max(np.abs(w)))
        w = np.maximum(np.abs(w), floor)
        d = -(V @ ((V.T @ g) / w))
        slope = g @ d
        alpha = 1.0
        while True:
            U_new = U + alpha * d.reshape(shape)
            f_new = trajectory_cost(model, window, U_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                f_new = f
                U_new = U
                break
        change = f - f_new
        U, f = U_new, f_new
        if change <= rtol * max(1.0, abs(f)):
            converged = True
            break
    return OptResult(U, float(f), it, converged)


@dataclass
class ReoptResult:
    trajectory: Trajectory
    controls: np.ndarray
    stage1_objective: float
    stage2_objective: float
    max_x_error: float
    max_y_error: float
    converged: bool
    stage1_controls: np.ndarray


def _lane_frame(lanes, point):
    proj = project_to_lane(point, lanes)
    t = proj.tangent
    return proj.point, t, np.array([-t[1], t[0]])


def _stage1(model: CostModel, window: Window, steps: int) -> np.ndarray:
    """Quadratic surrogate: positions p_2..p_N under a double-integrator model.

    Lane offset and heading error are linearized about a constant-speed
    lane-following reference; control effort uses longitudinal and lateral
    accelerations. Returns controls recovered by dynamics inversion.
    """
    th = model.theta
    dt = window.dt
    s0 = window.start
    p0 = s0[:2]
    v0 = max(abs(s0[3]), 0.5)
    p1 = p0 + s0[3] * np.array([np.cos(s0[2]), np.sin(s0[2])]) * dt
    N = steps
    nv = 2 * (N + 1)  # p_0 .. p_N stacked

    # lane-following reference
    ref = [p1]
    for _ in range(2, N + 1):
        q, t, _ = _lane_frame(window.lanes, ref[-1])
        ref.append(ref[-1] + v0 * dt * t)
    frames = [_lane_frame(window.lanes, p0)] + [_lane_frame(window.lanes, r) for r in ref]

    rows, rhs = [], []

    def add(weight, coefs, target):
        if weight <= 0:
            return
        r = np.zeros(nv)
        for k, vec in coefs:
            r[2 * k:2 * k + 2] += vec
        sw = np.sqrt(weight)
        rows.append(sw * r)
        rhs.append(sw * target)

    for k in range(1, N + 1):
        q, t, n = frames[k]
        add(th[0], [(k, n)], n @ q)
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = 1.0
            add(th[2], [(k, e)], window.goal[axis])
        kk = min(k, N - 1)
        # heading error ~ lateral component of the step direction
        scale = 1.0 / (v0 * dt)
        add(th[1], [(kk + 1, scale * n), (kk, -scale * n)], 0.0)
    for k in range(1, N):
        _, t, n = frames[k]
        # u_{k-1}: accel ~ longitudinal second difference, yaw rate ~ lateral one
        add(th[4], [(k + 1, t / dt**2), (k, -2 * t / dt**2), (k - 1, t / dt**2)],
            0.0)
        add(th[4], [(k + 1, n / (v0 * dt**2)), (k, -2 * n / (v0 * dt**2)),
                    (k - 1, n / (v0 * dt**2))], 0.0)
    A = np.array(rows)
    b = np.array(rhs)
    # equality constraints: p_0 and p_1 are fixed by the initial state
    C = np.zeros((4, nv))
    C[:, :4] = np.eye(4)
    d = np.concatenate([p0, p1])
    K = np.block([[2 * A.T @ A + 1e-9 * np.eye(nv), C.T], [C, np.zeros((4, 4))]])
    sol = np.linalg.solve(K, np.concatenate([2 * A.T @ b, d]))
    P = sol[:nv].reshape(N + 1, 2)
    return invert_positions(s0, P, dt)


def initial_plan(model: CostModel, window: Window, steps: int) -> np.ndarray:
    """Starting controls for plan optimization.

    Driving models with lanes use the convex stage-1 solution; anything else
    starts from zero controls.
    """
    if model.feature_set == DRIVE6 and window.lanes and steps >= 2:
        return _stage1(model, window, steps)
    return np.zeros((steps, 2))


def invert_positions(s0, P, dt: float) -> np.ndarray:
    """Extended-unicycle controls whose rollout from ``s0`` visits ``P[2:]``.

    ``P[1]`` must equal the position implied by ``s0``.
    """
    N = len(P) - 1
    step = np.diff(P, axis=0)
    heads = np.empty(N + 1)
    speeds = np.empty(N + 1)
    heads[0], speeds[0] = s0[2], s0[3]
    for k in range(1, N):
        heads[k] = np.arctan2(step[k, 1], step[k, 0])
        speeds[k] = np.hypot(*step[k]) / dt
    heads[N], speeds[N] = heads[N - 1], speeds[N - 1]
    U = np.empty((N, 2))
    U[:, 0] = np.diff(speeds) / dt
    U[:, 1] = wrap_angle(np.diff(heads)) / dt
    return U


def reopt_error(result_or_traj, gt_ego: Trajectory) -> tuple[float, float]:
    """Per-axis maximum absolute deviation over timesteps."""
    traj = getattr(result_or_traj, "trajectory", result_or_traj)
    a = traj.positions if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    b = gt_ego.positions
    if a.shape != b.shape:
        raise ValueError(f"trajectory lengths differ: {len(a)} vs {len(b)}")
    err = np.abs(a - b).max(axis=0)
    return float(err[0]), float(err[1])


def reoptimize(scene: Scene, model: CostModel, include_prediction_term: bool = True,
               goal: str = "scene", max_iter: int = 500) -> ReoptResult:
    """Reproduce the scene's ego motion by minimizing the driving cost.

    Stage 1 solves the convex surrogate of the lane, heading, goal and control
    terms; stage 2 refines the full cost from that initialization.
    ``goal='final'`` uses the recorded final ego position as the goal.
    """
    if model.feature_set != DRIVE6:
        raise ValueError("reoptimization needs a drive6 model")
    if not scene.lanes:
        raise ValueError("scene has no lanes")
    steps = scene.n_steps
    if steps < 2:
        raise ValueError("scene ego trajectory too short")
    window = window_from_scene(scene, 0)
    if goal == "final":
        window = Window(window.start, window.dt, scene.ego.positions[-1], window.lanes,
                        window.agents)
    full = model if include_prediction_term else model.with_theta(
        np.where(np.arange(6) == 5, 0.0, model.theta))
    U1 = _stage1(full, window, steps)
    f1 = trajectory_cost(full, window, U1)
    try:
        opt = optimize_controls(full, window, U1, max_iter=max_iter)
        U, f2, ok = opt.controls, opt.objective, opt.converged
    except (OptimizationError, np.linalg.LinAlgError) as exc:
        log.warning("stage 2 failed (%s); keeping stage-1 plan", exc)
        U, f2, ok = U1, f1, False
    states = rollout(window.start, U, window.dt)
    traj = Trajectory.from_states(states, window.dt)
    ex, ey = reopt_error(traj, scene.ego)
    return ReoptResult(traj, U, f1, f2, ex, ey, ok, U1)


def closest_expected_approach(model: CostModel, window: Window, controls) -> float:
    """Smallest expected closest approach (the proactive term's argument) along a plan."""
    ev = evaluate_plan(model, window, controls)
    S = ev.states
    T = len(S) - 1
    best = np.inf
    for k in range(1, T + 1):
        for af in window.agents.values():
            taus = range(k + 1, k + model.horizon + 1)
            E = np.array([S[min(t, T), :2] if t <= T else
                          S[T, :2] + (t - T) * (S[T, :2] - S[T - 1, :2]) for t in taus])
            dist = np.linalg.norm(af.positions(taus) - E[None], axis=2).min(axis=1)
            best = min(best, float(af.probs @ dist))
    return best
