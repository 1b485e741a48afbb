"""Synthetic scenes with a cost-optimizing expert, plus perturbation generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (BASIC, EXTENDED, Box, DetectionSet, Lane, PredictionSet, Scene,
                   Trajectory, unicycle_step, wrap_angle)
from .cost import CostModel, window_from_scene
from .planner import initial_plan, optimize_controls

# planted weights used for synthetic experts
PLANTED_TOY = (1.0, 4.0, 0.4, 0.4)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    radius: float = 5.0
    n_agents: int | None = None          # None draws 1-4 agents
    speed_range: tuple = (0.5, 1.5)
    dynamics: str = BASIC
    dt: float = 0.5
    episode_length: int = 40
    horizon: int = 5
    spread: float = 8.0                  # driving: agents cross within +-spread of the ego
    layout: str = "crossing"             # driving: "crossing" or "traffic" (adjacent lanes)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("arena radius must be positive")
        if min(self.speed_range) < 0 or self.speed_range[0] > self.speed_range[1]:
            raise ValueError("speed range must be non-negative and ordered")
        if self.n_agents is not None and self.n_agents < 0:
            raise ValueError("agent count must be >= 0")
        if self.dynamics not in (BASIC, EXTENDED):
            raise ValueError(f"unknown dynamics {self.dynamics!r}")
        if self.layout not in ("crossing", "traffic"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")
        if not self.dt > 0 or self.episode_length < 1:
            raise ValueError("dt and episode length must be positive")

    @classmethod
    def driving(cls, seed: int = 0, **kw) -> "ScenarioSpec":
        base = dict(seed=seed, radius=40.0, speed_range=(1.0, 3.0), dynamics=EXTENDED,
                    dt=0.5, episode_length=16, horizon=6)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class PerturbationSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise std must be >= 0")


def _spec_meta(spec: ScenarioSpec) -> dict:
    return {"seed": spec.seed, "radius": spec.radius, "n_agents": spec.n_agents,
            "speed_range": list(spec.speed_range), "dynamics": spec.dynamics,
            "dt": spec.dt, "episode_length": spec.episode_length, "horizon": spec.horizon,
            "spread": spec.spread, "layout": spec.layout}


def generate_scenario(spec: ScenarioSpec) -> Scene:
    """Deterministic scene for ``spec``; the ego holds only its initial state."""
    if spec.dynamics == EXTENDED:
        return _driving_scene(spec)
    rng = np.random.default_rng(spec.seed)
    R = spec.radius
    r = math.sqrt(rng.uniform(0.25 * R * R, R * R))
    ang = rng.uniform(-math.pi, math.pi)
    start = np.array([r * math.cos(ang), r * math.sin(ang)])
    heading = wrap_angle(ang + math.pi + rng.uniform(-math.pi / 4, math.pi / 4))
    ego = Trajectory(start[None], spec.dt, [heading])
    n = spec.n_agents if spec.n_agents is not None else int(rng.integers(1, 5))
    agents = {}
    k = np.arange(spec.episode_length + 1)[:, None]
    for i in range(n):
        c = R / 2 * math.sqrt(rng.uniform()) * _unit(rng.uniform(-math.pi, math.pi))
        direction = _unit(rng.uniform(-math.pi, math.pi))
        speed = rng.uniform(*spec.speed_range)
        t_cross = rng.uniform(0.0, spec.episode_length * spec.dt / 2)
        agents[f"agent{i}"] = Trajectory(c + (k * spec.dt - t_cross) * speed * direction,
                                         spec.dt)
    return Scene(spec.dt, spec.horizon, np.zeros(2), ego, agents, (),
                 {"spec": _spec_meta(spec)})


def _unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def _driving_scene(spec: ScenarioSpec) -> Scene:
    """A gently curving lane with the ego cruising on it while agents cross ahead."""
    rng = np.random.default_rng(spec.seed)
    heading = 0.0
    pts = [np.zeros(2)]
    for _ in range(10):
        pts.append(pts[-1] + 20.0 * _unit(heading))
        heading += rng.uniform(-0.12, 0.12)
    lane = Lane(np.array(pts))
    v0 = rng.uniform(4.0, 7.0)
    s_start = 5.0
    base = _along(lane, s_start)
    normal = _unit(base[1] + math.pi / 2)
    start = base[0] + rng.uniform(-0.5, 0.5) * normal
    psi0 = wrap_angle(base[1] + rng.uniform(-0.05, 0.05))
    ego = Trajectory(start[None], spec.dt, [psi0], [v0])
    horizon_s = spec.episode_length * spec.dt
    goal = _along(lane, s_start + v0 * horizon_s)[0]
    n = spec.n_agents if spec.n_agents is not None else int(rng.integers(1, 5))
    k = np.arange(spec.episode_length + 1)[:, None]
    agents = {}
    for i in range(n):
        if spec.layout == "traffic":
            agents[f"agent{i}"] = _adjacent_track(rng, lane, s_start, v0, spec, k)
            continue
        t_cross = rng.uniform(0.2, 0.8) * horizon_s
        # cross at roughly where the ego will be, shifted a few metres
        s_cross = s_start + v0 * t_cross + rng.uniform(-spec.spread, spec.spread)
        point, lane_heading = _along(lane, s_cross)
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        direction = _unit(lane_heading - side * math.pi / 2 + rng.uniform(-0.3, 0.3))
        speed = rng.uniform(*spec.speed_range)
        agents[f"agent{i}"] = Trajectory(point + (k * spec.dt - t_cross) * speed * direction,
                                         spec.dt)
    return Scene(spec.dt, spec.horizon, goal, ego, agents, (lane,),
                 {"spec": _spec_meta(spec)})


def _adjacent_track(rng, lane: Lane, s_start: float, v0: float, spec: ScenarioSpec, k):
    """Agent driving parallel to the lane 6-12 m to one side, with or against the ego."""
    s0 = s_start + rng.uniform(-10.0, 10.0 + v0 * spec.episode_length * spec.dt)
    offset = rng.uniform(6.0, 12.0) * (1.0 if rng.uniform() < 0.5 else -1.0)
    speed = rng.uniform(*spec.speed_range) * (1.0 if rng.uniform() < 0.5 else -1.0)
    pts = []
    for j in k[:, 0]:
        point, heading = _along(lane, s0 + speed * j * spec.dt)
        pts.append(point + offset * _unit(heading + math.pi / 2))
    return Trajectory(np.array(pts), spec.dt)


def _along(lane: Lane, s: float):
    """Point and heading at arclength ``s`` along a lane."""
    pts = lane.centerline
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    acc = 0.0
    for i, ln in enumerate(lens):
        if s <= acc + ln or i == len(lens) - 1:
            t = (s - acc) / ln
            return pts[i] + t * seg[i], float(math.atan2(seg[i, 1], seg[i, 0]))
        acc += ln
    raise AssertionError("unreachable")


def expert_rollout(scene: Scene, model: CostModel, horizon: int | None = None,
                   noise_std: float = 0.0, seed: int = 0, steps: int | None = None,
                   goal_tol: float = 0.1, max_iter: int = 200):
    """Cost-optimizing expert for a planted cost.

    ``horizon=None`` plans the whole episode once and executes that plan open
    loop. With an integer ``horizon`` the expert replans every step: the next
    ``horizon`` controls are optimized from the previous plan (shifted, last
    control held) and the first one is applied. Gaussian control noise is
    added to every applied control.
    Returns the ego :class:`Trajectory` and the applied controls.
    """
    if steps is None:
        steps = int(scene.meta.get("spec", {}).get("episode_length", 40))
    rng = np.random.default_rng(seed)
    state = scene.ego.states()[0]
    states = [state]
    applied = []
    plan = None
    for j in range(steps):
        if horizon is not None or plan is None:
            h = steps - j if horizon is None else horizon
            window = window_from_scene(scene, j, start=state,
                                       extent=h + model.horizon + 2)
            if plan is None:
                init = initial_plan(model, window, h)
            else:
                init = np.vstack([plan[1:], plan[-1:]])
                if model.dynamics == EXTENDED:
                    init[-1] = 0.0
            res = optimize_controls(model, window, init, max_iter=max_iter)
            if not np.all(np.isfinite(res.controls)):
                raise RuntimeError(f"expert optimizer diverged at step {j}")
            plan = res.controls
        u = plan[j if horizon is None else 0]
        if noise_std > 0:
            u = u + rng.normal(0.0, noise_std, 2)
        applied.append(u)
        state = unicycle_step(state, u, scene.dt)
        states.append(state)
        if model.dynamics == BASIC and np.linalg.norm(state[:2] - scene.goal) < goal_tol:
            break
    return Trajectory.from_states(np.array(states), scene.dt), np.array(applied)


def with_expert(scene: Scene, model: CostModel, **kw) -> Scene:
    """Copy of ``scene`` whose ego trajectory is an expert rollout."""
    traj, _ = expert_rollout(scene, model, **kw)
    meta = dict(scene.meta)
    meta["expert"] = {"model": model.to_dict(), "horizon": kw.get("horizon"),
                      **{k: v for k, v in kw.items() if k in ("noise_std", "seed")}}
    return replace(scene, ego=traj, meta=meta)


def perturb_detections(scene: Scene, spec: PerturbationSpec, t: int = 0,
                       extent=(1.8, 4.5), score: float = 1.0) -> DetectionSet:
    """Detections at ground-truth positions plus iid N(0, sigma^2) per coordinate.

    The standard-normal draws depend only on the seed, so sweeping ``sigma``
    with a fixed seed scales one common noise pattern.
    """
    rng = np.random.default_rng(spec.seed)
    boxes = []
    for aid, traj in scene.agents.items():
        z = rng.standard_normal(2)
        pos = traj.position_at(t) + spec.sigma * z
        nxt = traj.position_at(t + 1) - traj.position_at(t)
        boxes.append(Box(float(pos[0]), float(pos[1]), extent[0], extent[1],
                         math.atan2(nxt[1], nxt[0]), score, aid))
    return DetectionSet(boxes)


def make_errant_prediction_pair(gt_future, ego_position, ade_target: float):
    """Two predictions with identical ADE/FDE, displaced toward and away from the ego.

    The offset grows linearly from 0 at the first waypoint to ``2*ade_target``
    at the last, so ADE = ``ade_target`` and FDE = ``2*ade_target`` (a single
    waypoint is displaced by ``2*ade_target``).
    """
    gt = np.asarray(gt_future, dtype=float).reshape(-1, 2)
    if not ade_target > 0:
        raise ValueError("ade_target must be positive")
    T = len(gt)
    to_ego = np.asarray(ego_position, dtype=float) - gt
    norm = np.linalg.norm(to_ego, axis=1)
    if np.any(norm < 1e-12):
        raise ValueError("ego coincides with a ground-truth waypoint")
    frac = np.arange(T) / (T - 1) if T > 1 else np.ones(1)
    offset = (2.0 * ade_target * frac / norm)[:, None] * to_ego
    return gt + offset, gt - offset



def head_on_scenario(gap: float = 6.0, steps: int = 5, speed: float = 1.0,
                     agent_speed: float = 1.0, lateral: float = 0.0,
                     dt: float = 0.5) -> Scene:
    """Ego driving along +x toward an agent coming the other way.

    The ego starts at ``(-gap/2, 0)`` and the agent at ``(gap/2, lateral)``;
    both move at constant speed for ``steps`` steps (the agent's track runs
    one step longer so it covers every look-ahead waypoint).
    """
    k = np.arange(steps + 1)[:, None]
    ego = np.array([-gap / 2, 0.0]) + k * np.array([speed * dt, 0.0])
    kk = np.arange(steps + 2)[:, None]
    agent = np.array([gap / 2, lateral]) - kk * np.array([agent_speed * dt, 0.0])
    return Scene(dt, steps, np.zeros(2), Trajectory(ego, dt, np.zeros(steps + 1)),
                 {"agent0": Trajectory(agent, dt)}, (), {"scenario": "head_on"})


def far_agent_scenario(distance: float = 10.0, steps: int = 5, dt: float = 0.5) -> Scene:
    """Ego driving along +x with an agent walking parallel ``distance`` metres to the side."""
    sc = head_on_scenario(steps=steps, dt=dt)
    k = np.arange(steps + 2)[:, None]
    agent = np.array([-3.0, distance]) + k * np.array([0.5 * dt, 0.0])
    return replace(sc, agents={"agent0": Trajectory(agent, dt)},
                   meta={"scenario": "far_agent"})


def errant_predictions(scene: Scene, ade_target: float = 0.075, agent: str = "agent0",
                       t: int = 0):
    """Toward/away PredictionSets for ``agent`` with equal ADE and FDE.

    The prediction covers ``scene.horizon + 1`` future steps.
    """
    traj = scene.agents[agent]
    gt = np.array([traj.position_at(t + k) for k in range(1, scene.horizon + 2)])
    toward, away = make_errant_prediction_pair(gt, scene.ego.positions[t], ade_target)
    return (PredictionSet.single({agent: toward}), PredictionSet.single({agent: away}))
