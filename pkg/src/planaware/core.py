"""Scene containers plus the unicycle dynamics and lane geometry they use.

States are plain numpy vectors: ``[x, y, heading]`` for the basic unicycle
(controls ``[v, omega]``) and ``[x, y, heading, speed]`` for the
dynamically-extended unicycle (controls ``[accel, omega]``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BASIC = "basic"
EXTENDED = "extended"
DYNAMICS = (BASIC, EXTENDED)


class SceneFormatError(ValueError):
    """Raised when an input file does not match its schema."""


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]. Works on scalars and arrays."""
    if isinstance(angle, (float, int, np.floating)):
        if -math.pi < angle <= math.pi:
            return float(angle)
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + 2.0 * math.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def dynamics_of(state) -> str:
    n = len(state)
    if n == 3:
        return BASIC
    if n == 4:
        return EXTENDED
    raise ValueError(f"state must have 3 (basic) or 4 (extended) entries, got {n}")


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    heading: float
    speed: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        _finite(self.x, self.y, self.heading)
        if self.speed is not None:
            _finite(self.speed)

    def to_array(self) -> np.ndarray:
        if self.speed is None:
            return np.array([self.x, self.y, self.heading])
        return np.array([self.x, self.y, self.heading, self.speed])

    @classmethod
    def from_array(cls, state) -> "EgoState":
        state = np.asarray(state, dtype=float)
        dynamics_of(state)
        speed = float(state[3]) if len(state) == 4 else None
        return cls(float(state[0]), float(state[1]), float(state[2]), speed)


def unicycle_step(state, u, dt: float) -> np.ndarray:
    """One forward-Euler step. Position rows use the pre-update speed."""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    _finite(state, u)
    mode = dynamics_of(state)
    x, y, psi = state[:3]
    if mode == BASIC:
        v, omega = u
        return np.array([x + v * math.cos(psi) * dt, y + v * math.sin(psi) * dt,
                         wrap_angle(psi + omega * dt)])
    v = state[3]
    a, omega = u
    return np.array([x + v * math.cos(psi) * dt, y + v * math.sin(psi) * dt,
                     wrap_angle(psi + omega * dt), v + a * dt])


def rollout(s0, controls, dt: float) -> np.ndarray:
    """Iterate ``unicycle_step``; returns ``len(controls) + 1`` states with row 0 = s0."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    if len(controls) == 0:
        raise ValueError("controls must be non-empty")
    s = np.asarray(s0, dtype=float)
    out = np.empty((len(controls) + 1, len(s)))
    out[0] = s
    for k, u in enumerate(controls):
        s = unicycle_step(s, u, dt)
        out[k + 1] = s
    return out


def linearize_dynamics(state, u, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic state and control Jacobians of ``unicycle_step``."""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    _finite(state, u)
    psi = state[2]
    c, s = math.cos(psi), math.sin(psi)
    if dynamics_of(state) == BASIC:
        v = u[0]
        A = np.array([[1.0, 0.0, -v * s * dt],
                      [0.0, 1.0, v * c * dt],
                      [0.0, 0.0, 1.0]])
        B = np.array([[c * dt, 0.0],
                      [s * dt, 0.0],
                      [0.0, dt]])
        return A, B
    v = state[3]
    A = np.array([[1.0, 0.0, -v * s * dt, c * dt],
                  [0.0, 1.0, v * c * dt, s * dt],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
    B = np.array([[0.0, 0.0],
                  [0.0, 0.0],
                  [0.0, dt],
                  [dt, 0.0]])
    return A, B


def dynamics_hessian(state, u, dt: float) -> np.ndarray:
    """Second derivatives of the step map.

    Returns an array ``(n_s, n_z, n_z)`` over the joint variable ``z = [state, u]``.
    """
    state = np.asarray(state, dtype=float)
    n_s = len(state)
    n_z = n_s + 2
    psi = state[2]
    c, s = math.cos(psi), math.sin(psi)
    out = np.zeros((n_s, n_z, n_z))
    if n_s == 3:
        v, iv = u[0], 3  # speed lives in the control vector
    else:
        v, iv = state[3], 3
    # x' = x + v cos(psi) dt ; y' = y + v sin(psi) dt
    out[0, 2, 2] = -v * c * dt
    out[0, 2, iv] = out[0, iv, 2] = -s * dt
    out[1, 2, 2] = -v * s * dt
    out[1, 2, iv] = out[1, iv, 2] = c * dt
    return out


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled 2D positions, optionally with headings and speeds."""

    positions: np.ndarray
    dt: float
    headings: np.ndarray | None = None
    speeds: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(pos) < 1:
            raise ValueError("trajectory needs at least one state")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        _finite(pos)
        object.__setattr__(self, "positions", pos)
        for name in ("headings", "speeds"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float).reshape(-1)
                if len(val) != len(pos):
                    raise ValueError(f"{name} length {len(val)} != {len(pos)} positions")
                _finite(val)
                if name == "headings":
                    val = wrap_angle(val)
                object.__setattr__(self, name, np.atleast_1d(val))

    def __len__(self):
        return len(self.positions)

    def states(self) -> np.ndarray:
        """Stack into dynamic states (requires headings)."""
        if self.headings is None:
            raise ValueError("trajectory has no headings")
        cols = [self.positions, self.headings[:, None]]
        if self.speeds is not None:
            cols.append(self.speeds[:, None])
        return np.hstack(cols)

    @classmethod
    def from_states(cls, states, dt: float) -> "Trajectory":
        states = np.asarray(states, dtype=float)
        speeds = states[:, 3] if states.shape[1] == 4 else None
        return cls(states[:, :2], dt, states[:, 2], speeds)

    def position_at(self, t: int) -> np.ndarray:
        """Position at integer step ``t``; constant-velocity extension past either end."""
        n = len(self.positions)
        if 0 <= t < n:
            return self.positions[t]
        if n == 1:
            return self.positions[0]
        if t < 0:
            return self.positions[0] + t * (self.positions[1] - self.positions[0])
        return self.positions[-1] + (t - n + 1) * (self.positions[-1] - self.positions[-2])


def constant_velocity_predict(traj: Trajectory, steps: int, velocity=None) -> Trajectory:
    """Extrapolate the last position by the last per-step displacement.

    ``velocity`` (m/s) may be given explicitly, which allows single-state input.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if velocity is not None:
        step = np.asarray(velocity, dtype=float) * traj.dt
    elif len(traj) >= 2:
        step = traj.positions[-1] - traj.positions[-2]
    else:
        raise ValueError("need two states or an explicit velocity")
    k = np.arange(1, steps + 1)[:, None]
    return Trajectory(traj.positions[-1] + k * step, traj.dt)


@dataclass(frozen=True)
class Lane:
    """Lane centerline with per-vertex tangent headings.

    If ``headings`` is omitted they are derived from the segment directions
    (outgoing segment; the last vertex takes its incoming segment).
    """

    centerline: np.ndarray
    headings: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("lane needs at least 2 vertices")
        _finite(pts)
        seg = np.diff(pts, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) == 0.0):
            raise ValueError("consecutive lane vertices must be distinct")
        seg_dir = np.arctan2(seg[:, 1], seg[:, 0])
        derived = np.append(seg_dir, seg_dir[-1])
        if self.headings is None:
            heads = derived
        else:
            heads = wrap_angle(np.asarray(self.headings, dtype=float).reshape(-1))
            if len(heads) != len(pts):
                raise ValueError("one heading per lane vertex required")
            # each vertex tangent must match an adjacent segment direction
            incoming = np.insert(seg_dir, 0, seg_dir[0])
            bad = np.minimum(np.abs(wrap_angle(heads - derived)),
                             np.abs(wrap_angle(heads - incoming))) > 1e-6
            if np.any(bad):
                raise ValueError(f"lane headings inconsistent with segments at vertices "
                                 f"{np.flatnonzero(bad).tolist()}")
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "headings", np.atleast_1d(np.asarray(heads, dtype=float)))


@dataclass(frozen=True)
class LaneProjection:
    point: np.ndarray
    heading: float
    lane: int
    segment: int
    t: float              # segment parameter in [0, 1]
    clamped: bool         # closest point is a segment endpoint
    tangent: np.ndarray   # unit segment direction
    heading_grad: np.ndarray  # d(heading)/d(query point)


def project_to_lane(p, lanes) -> LaneProjection:
    """Closest point over all lane polylines plus the interpolated tangent heading.

    Ties go to the lowest lane index, then the lowest segment index.
    """
    if not lanes:
        raise ValueError("no lanes to project onto")
    p = np.asarray(p, dtype=float)
    best = None
    for li, lane in enumerate(lanes):
        a = lane.centerline[:-1]
        d = np.diff(lane.centerline, axis=0)
        len2 = np.einsum("ij,ij->i", d, d)
        t_raw = np.einsum("ij,ij->i", p - a, d) / len2
        t = np.clip(t_raw, 0.0, 1.0)
        q = a + t[:, None] * d
        dist2 = np.einsum("ij,ij->i", p - q, p - q)
        si = int(np.argmin(dist2))
        if best is None or dist2[si] < best[0]:
            best = (dist2[si], li, si, float(t[si]), q[si], not 0.0 < t_raw[si] < 1.0)
    _, li, si, t, q, clamped = best
    lane = lanes[li]
    d = lane.centerline[si + 1] - lane.centerline[si]
    dh = wrap_angle(lane.headings[si + 1] - lane.headings[si])
    heading = wrap_angle(lane.headings[si] + t * dh)
    grad = np.zeros(2) if clamped else dh * d / float(d @ d)
    return LaneProjection(q.copy(), heading, li, si, t, clamped,
                          d / math.hypot(*d), grad)


@dataclass(frozen=True)
class PredictionSet:
    """K weighted trajectory modes per agent; modes are ``(K, T, 2)`` over future steps 1..T."""

    modes: dict
    probs: dict

    def __post_init__(self):
        modes, probs = {}, {}
        if set(self.modes) != set(self.probs):
            raise ValueError("modes and probs must cover the same agents")
        for aid in self.modes:
            m = np.asarray(self.modes[aid], dtype=float)
            if m.ndim == 2:
                m = m[None]
            p = np.atleast_1d(np.asarray(self.probs[aid], dtype=float))
            if m.ndim != 3 or m.shape[2] != 2 or m.shape[0] != len(p):
                raise ValueError(f"agent {aid}: modes must be (K, T, 2) with K probabilities")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"agent {aid}: probabilities must be >= 0 and sum to 1")
            _finite(m, p)
            modes[str(aid)] = m
            probs[str(aid)] = p
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def single(cls, futures: dict) -> "PredictionSet":
        """One certain mode per agent from ``{agent_id: (T, 2) positions}``."""
        return cls({a: np.asarray(f, dtype=float)[None] for a, f in futures.items()},
                   {a: np.ones(1) for a in futures})

    @property
    def horizon(self) -> int:
        return max(m.shape[1] for m in self.modes.values()) if self.modes else 0


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    l: float
    heading: float
    score: float
    agent_id: str | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0):
            raise ValueError("box extents must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class DetectionSet:
    boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)


@dataclass(frozen=True)
class Scene:
    dt: float
    horizon: int
    goal: np.ndarray
    ego: Trajectory
    agents: dict = field(default_factory=dict)
    lanes: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(2))
        object.__setattr__(self, "lanes", tuple(self.lanes))
        object.__setattr__(self, "agents", {str(k): v for k, v in self.agents.items()})
        for aid, traj in self.agents.items():
            if not math.isclose(traj.dt, self.dt):
                raise ValueError(f"agent {aid} dt {traj.dt} != scene dt {self.dt}")
        if self.ego.headings is None:
            raise ValueError("ego trajectory needs headings")

    @property
    def dynamics(self) -> str:
        return EXTENDED if self.ego.speeds is not None else BASIC

    @property
    def n_steps(self) -> int:
        """Number of ego transitions recorded."""
        return len(self.ego) - 1

    def agent_positions(self, t: int) -> dict:
        return {aid: traj.position_at(t) for aid, traj in self.agents.items()}


# --- JSON I/O -------------------------------------------------------------

_SCENE_KEYS = {"dt", "horizon", "goal", "ego", "agents", "lanes", "meta"}


def _check_keys(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise SceneFormatError(f"{where}: unknown key {key!r}")


def scene_to_dict(scene: Scene) -> dict:
    ego = scene.ego.states().tolist()
    return {
        "dt": scene.dt,
        "horizon": scene.horizon,
        "goal": scene.goal.tolist(),
        "ego": {"states": ego},
        "agents": {aid: {"states": traj.positions.tolist()} for aid, traj in scene.agents.items()},
        "lanes": [{"centerline": ln.centerline.tolist(), "headings": ln.headings.tolist()}
                  for ln in scene.lanes],
        "meta": scene.meta,
    }


def scene_from_dict(data: dict) -> Scene:
    _check_keys(data, _SCENE_KEYS, "scene")
    for key in ("dt", "horizon", "goal", "ego"):
        if key not in data:
            raise SceneFormatError(f"scene: missing key {key!r}")
    _check_keys(data["ego"], {"states"}, "scene.ego")
    dt = float(data["dt"])
    try:
        ego_states = np.asarray(data["ego"]["states"], dtype=float)
        if ego_states.ndim != 2 or ego_states.shape[1] not in (3, 4):
            raise SceneFormatError("scene.ego.states: rows must be [x, y, heading(, speed)]")
        ego = Trajectory.from_states(ego_states, dt)
        agents = {}
        for aid, entry in data.get("agents", {}).items():
            _check_keys(entry, {"states"}, f"scene.agents.{aid}")
            agents[aid] = Trajectory(np.asarray(entry["states"], dtype=float)[:, :2], dt)
        lanes = []
        for i, entry in enumerate(data.get("lanes", [])):
            _check_keys(entry, {"centerline", "headings"}, f"scene.lanes[{i}]")
            lanes.append(Lane(entry["centerline"], entry.get("headings")))
        return Scene(dt, int(data["horizon"]), data["goal"], ego, agents, lanes,
                     dict(data.get("meta", {})))
    except SceneFormatError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise SceneFormatError(f"scene: {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    write_json(path, scene_to_dict(scene))


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def write_json(path, data) -> None:
    """Write UTF-8 JSON atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
    tmp.replace(path)
