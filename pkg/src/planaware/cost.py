"""Linear planning cost ``c = theta . phi`` with analytic derivatives.

Two feature sets are provided:

``toy4``
    goal distance and control effort plus two RBF proximity terms (current and
    one-step-ahead constant-velocity positions). Basic unicycle.
``drive6``
    lane offset, lane heading error, goal distance, reactive RBF on the
    closest agent, control effort, and a proactive RBF on the expected
    closest approach over a look-ahead of ``horizon`` steps.
    Dynamically-extended unicycle.

A plan over ``T`` steps is scored by summing the per-step cost, where step
``k`` (1..T) pairs the state ``s_k`` with the control ``u_{k-1}`` that
produced it. Agent positions at future steps come from :class:`AgentFuture`,
so every agent input of the plan cost is a (predicted) waypoint and the
gradient with respect to those waypoints is the planning sensitivity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (BASIC, EXTENDED, PredictionSet, Scene, dynamics_hessian,
                   linearize_dynamics, project_to_lane, rollout, wrap_angle, write_json)

TOY4 = "toy4"
DRIVE6 = "drive6"
FEATURE_NAMES = {
    TOY4: ("goal", "control", "rbf_now", "rbf_next"),
    DRIVE6: ("lane", "heading", "goal", "rbf_closest", "control", "rbf_pred"),
}
DYNAMICS_FOR = {TOY4: BASIC, DRIVE6: EXTENDED}
DEFAULT_SIGMA = {TOY4: 1.0, DRIVE6: 3.0}

# reference weights for the two feature sets
REFERENCE_THETA = {
    TOY4: (1.21, 4.19, 0.37, 0.35),
    DRIVE6: (1.722, 0.562, 3e-6, 11.865, 1.352, 0.241),
}


@dataclass(frozen=True)
class CostModel:
    feature_set: str
    theta: np.ndarray
    sigma: float | None = None
    horizon: int = 6
    dynamics: str | None = None

    def __post_init__(self):
        if self.feature_set not in FEATURE_NAMES:
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        n = len(FEATURE_NAMES[self.feature_set])
        if len(theta) != n:
            raise ValueError(f"{self.feature_set} needs {n} weights, got {len(theta)}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "theta", theta)
        if self.sigma is None:
            object.__setattr__(self, "sigma", DEFAULT_SIGMA[self.feature_set])
        if not self.sigma > 0:
            raise ValueError("RBF bandwidth must be positive")
        expected = DYNAMICS_FOR[self.feature_set]
        if self.dynamics is None:
            object.__setattr__(self, "dynamics", expected)
        elif self.dynamics != expected:
            raise ValueError(f"{self.feature_set} requires {expected} dynamics")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def n_features(self) -> int:
        return len(self.theta)

    def with_theta(self, theta) -> "CostModel":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def to_dict(self) -> dict:
        return {"feature_set": self.feature_set, "theta": self.theta.tolist(),
                "sigma": self.sigma, "horizon": self.horizon, "dynamics": self.dynamics}

    @classmethod
    def from_dict(cls, data: dict) -> "CostModel":
        unknown = set(data) - {"feature_set", "theta", "sigma", "horizon", "dynamics"}
        if unknown:
            raise ValueError(f"cost model: unknown key {sorted(unknown)[0]!r}")
        return cls(data["feature_set"], data["theta"], data.get("sigma"),
                   int(data.get("horizon", 6)), data.get("dynamics"))


def save_model(model: CostModel, path) -> None:
    write_json(path, model.to_dict())


def load_model(path) -> CostModel:
    with open(path, encoding="utf-8") as fh:
        return CostModel.from_dict(json.load(fh))


def rbf(d, sigma: float = 1.0):
    """Gaussian radial basis function ``exp(-d^2 / (2 sigma^2))``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    out = np.exp(-d * d / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


def cost_eval(model: CostModel, phi) -> float:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != model.theta.shape:
        raise ValueError(f"feature vector of length {phi.size} does not match "
                         f"{model.feature_set} ({model.n_features})")
    return float(model.theta @ phi)


# --- single-frame features -------------------------------------------------

def features_toy(ego, control, agent, agent_next, *, ego_prev=None, goal=(0.0, 0.0),
                 sigma: float = 1.0) -> np.ndarray:
    """Per-frame toy features.

    ``agent``/``agent_next`` are the agent's current and one-step predicted
    positions; several agents may be passed as ``(A, 2)`` arrays, in which case
    the two RBF terms are summed over agents. The ego's one-step prediction is
    constant-velocity from ``ego_prev`` (stationary when omitted).
    """
    ego = np.asarray(ego, dtype=float)[:2]
    if agent is None or agent_next is None:
        raise ValueError("toy features need the agent's current and predicted position")
    agent = np.atleast_2d(np.asarray(agent, dtype=float))
    agent_next = np.atleast_2d(np.asarray(agent_next, dtype=float))
    if agent.shape != agent_next.shape:
        raise ValueError("missing one-step prediction for some agent")
    prev = ego if ego_prev is None else np.asarray(ego_prev, dtype=float)[:2]
    ego_next = 2.0 * ego - prev
    u = np.asarray(control, dtype=float)
    return np.array([
        np.sum((ego - np.asarray(goal)) ** 2),
        u @ u,
        np.sum(rbf(np.linalg.norm(ego - agent, axis=1), sigma)),
        np.sum(rbf(np.linalg.norm(ego_next - agent_next, axis=1), sigma)),
    ])


def features_drive(ego_state, control, *, lanes, goal, agents_now=(), ego_future=None,
                   agent_modes=(), agent_probs=(), sigma: float = 3.0) -> np.ndarray:
    """Per-frame driving features.

    ``ego_future`` is ``(L, 2)`` ego positions for the next L steps;
    ``agent_modes[a]`` is ``(K, L, 2)`` predicted positions for the same steps
    with probabilities ``agent_probs[a]``.
    """
    if not lanes:
        raise ValueError("driving features need at least one lane")
    s = np.asarray(ego_state, dtype=float)
    p = s[:2]
    proj = project_to_lane(p, lanes)
    u = np.asarray(control, dtype=float)
    phi = np.zeros(6)
    phi[0] = np.sum((p - proj.point) ** 2)
    phi[1] = wrap_angle(s[2] - proj.heading) ** 2
    phi[2] = np.sum((p - np.asarray(goal)) ** 2)
    agents_now = np.asarray(agents_now, dtype=float).reshape(-1, 2)
    if len(agents_now):
        phi[3] = rbf(np.min(np.linalg.norm(agents_now - p, axis=1)), sigma)
    phi[4] = u @ u
    if len(agent_modes):
        ego_future = np.asarray(ego_future, dtype=float)
        expected = []
        for modes, probs in zip(agent_modes, agent_probs):
            dist = np.linalg.norm(np.asarray(modes) - ego_future[None], axis=2)
            expected.append(np.asarray(probs) @ dist.min(axis=1))
        phi[5] = rbf(min(expected), sigma)
    return phi


# --- planning windows ------------------------------------------------------

@dataclass(frozen=True)
class AgentFuture:
    """An agent's current position and K predicted modes over steps 1..M."""

    current: np.ndarray
    modes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=float)
        if modes.ndim == 2:
            modes = modes[None]
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if modes.shape[0] != len(probs) or modes.shape[1] < 1:
            raise ValueError("modes must be (K, M>=1, 2) with K probabilities")
        object.__setattr__(self, "current", np.asarray(self.current, dtype=float).reshape(2))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "probs", probs)
        # current position followed by the waypoints, plus the per-step
        # velocity used past the last waypoint
        track = np.concatenate([np.broadcast_to(self.current, (len(probs), 1, 2)), modes], axis=1)
        vel = track[:, -1] - track[:, -2]
        object.__setattr__(self, "_track", track)
        object.__setattr__(self, "_vel", vel)
        object.__setattr__(self, "_mean_track", probs @ track.reshape(len(probs), -1))
        object.__setattr__(self, "_mean_vel", probs @ vel)

    def combo(self, m: int, tau: int):
        """Position of mode ``m`` at step ``tau`` as ``[(index, coef)]``.

        Index -1 is the current position; beyond the last waypoint the mode is
        extended at constant velocity.
        """
        M = self.modes.shape[1]
        if tau == 0:
            return [(-1, 1.0)]
        if tau <= M:
            return [(tau - 1, 1.0)]
        j = float(tau - M)
        return [(M - 1, 1.0 + j), (M - 2, -j)]

    def position(self, m: int, tau: int) -> np.ndarray:
        return self.positions([tau])[m, 0]

    def positions(self, taus) -> np.ndarray:
        """``(K, len(taus), 2)`` positions for every mode."""
        M = self.modes.shape[1]
        taus = np.asarray(taus, dtype=int)
        out = self._track[:, np.minimum(taus, M)]
        beyond = taus > M
        if np.any(beyond):
            out[:, beyond] += (taus[beyond] - M)[None, :, None] * self._vel[:, None]
        return out

    def expected_combo(self, tau: int):
        return [(m, i, p * c) for m, p in enumerate(self.probs) for i, c in self.combo(m, tau)]

    def expected(self, tau: int) -> np.ndarray:
        M = self.modes.shape[1]
        j = min(tau, M)
        out = self._mean_track[2 * j:2 * j + 2]
        return out + (tau - M) * self._mean_vel if tau > M else out.copy()


@dataclass(frozen=True)
class Window:
    """Everything a plan cost needs besides the controls."""

    start: np.ndarray
    dt: float
    goal: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lanes: tuple = ()
    agents: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(2))
        object.__setattr__(self, "lanes", tuple(self.lanes))

    def with_agents(self, agents: dict) -> "Window":
        return replace(self, agents=dict(agents))


def window_from_scene(scene: Scene, t: int = 0, predictions: PredictionSet | None = None,
                      extent: int | None = None, start=None) -> Window:
    """Planning window anchored at scene step ``t``.

    Agent futures are the scene's ground truth unless ``predictions`` are given.
    ``extent`` bounds how many ground-truth future steps are copied; the rest is
    constant-velocity extension.
    """
    if start is None:
        start = scene.ego.states()[t]
    if extent is None:
        extent = max(scene.n_steps - t, 1) + 2 * scene.horizon + 2
    agents = {}
    for aid, traj in scene.agents.items():
        current = traj.position_at(t)
        if predictions is not None and aid in predictions.modes:
            agents[aid] = AgentFuture(current, predictions.modes[aid], predictions.probs[aid])
        else:
            fut = np.array([traj.position_at(t + k) for k in range(1, extent + 1)])
            agents[aid] = AgentFuture(current, fut[None], np.ones(1))
    return Window(start, scene.dt, scene.goal, scene.lanes, agents)


def detection_futures(window: Window, detected: dict, velocities: dict, steps: int) -> Window:
    """Replace agent futures by constant-velocity tracks seeded at detected positions."""
    agents = {}
    for aid, pos in detected.items():
        pos = np.asarray(pos, dtype=float)
        k = np.arange(1, steps + 1)[:, None]
        fut = pos + k * np.asarray(velocities[aid], dtype=float) * window.dt
        agents[aid] = AgentFuture(pos, fut[None], np.ones(1))
    return window.with_agents(agents)


# --- derivative engine -----------------------------------------------------

class _Acc:
    """Per-feature accumulators over ego state variables s_1..s_T and controls."""

    def __init__(self, F, T, n_s, order, agents):
        self.F, self.T, self.n_s, self.order = F, T, n_s, order
        self.val = np.zeros(F)
        n = T * n_s
        self.gs = np.zeros((F, n)) if order >= 1 else None
        self.hs = np.zeros((F, n, n)) if order >= 2 else None
        self.gu = np.zeros((F, 2 * T)) if order >= 1 else None
        self.hu = np.zeros((F, 2 * T, 2 * T)) if order >= 2 else None
        self.ga = None
        if order >= 1:
            self.ga = {aid: (np.zeros((F, 2)), np.zeros((F,) + af.modes.shape))
                       for aid, af in agents.items()}

    def pos(self, i):
        b = (i - 1) * self.n_s
        return slice(b, b + 2)

    def head(self, i):
        return (i - 1) * self.n_s + 2

    def add_agent(self, f, aid, m, idx, g):
        cur, modes = self.ga[aid]
        if idx < 0:
            cur[f] += g
        else:
            modes[f, m, idx] += g


def _ego_combo(tau, T):
    """Ego position at step ``tau`` as ``[(step, coef)]``; past T it is extended at constant velocity."""
    if tau <= T:
        return [(tau, 1.0)]
    j = float(tau - T)
    return [(T, 1.0 + j), (T - 1, -j)]


def _ego_point(P, tau, T):
    return sum(c * P[i] for i, c in _ego_combo(tau, T))


def _free(terms):
    return [(i, c) for i, c in terms if i >= 1]


def _rbf_pair(acc, f, v, ego_terms, agent_terms, sigma):
    """Accumulate rbf(||v||) where v = sum(ego terms) - sum(agent terms)."""
    s2 = sigma * sigma
    r = math.exp(-(v @ v) / (2.0 * s2))
    acc.val[f] += r
    if acc.order < 1:
        return
    g = -r * v / s2
    for i, c in ego_terms:
        acc.gs[f, acc.pos(i)] += c * g
    for aid, m, idx, c in agent_terms:
        acc.add_agent(f, aid, m, idx, -c * g)
    if acc.order >= 2:
        h = r * (np.outer(v, v) / (s2 * s2) - np.eye(2) / s2)
        for i, c1 in ego_terms:
            for j, c2 in ego_terms:
                acc.hs[f, acc.pos(i), acc.pos(j)] += c1 * c2 * h


def _agent_terms(aid, af, tau):
    return [(aid, m, i, c) for m, i, c in af.expected_combo(tau)]


def _toy_terms(model, window, P, U, acc):
    T = len(U)
    goal = window.goal
    for k in range(1, T + 1):
        p = P[k]
        d = p - goal
        acc.val[0] += d @ d
        if acc.order >= 1:
            acc.gs[0, acc.pos(k)] += 2.0 * d
        if acc.order >= 2:
            acc.hs[0, acc.pos(k), acc.pos(k)] += 2.0 * np.eye(2)
        ego_next = 2.0 * p - P[k - 1]
        for aid, af in window.agents.items():
            _rbf_pair(acc, 2, p - af.expected(k), _free([(k, 1.0)]),
                      _agent_terms(aid, af, k), model.sigma)
            _rbf_pair(acc, 3, ego_next - af.expected(k + 1), _free([(k, 2.0), (k - 1, -1.0)]),
                      _agent_terms(aid, af, k + 1), model.sigma)
    _control_terms(acc, 1, U)


def _control_terms(acc, f, U):
    acc.val[f] += float(np.sum(U * U))
    if acc.order >= 1:
        acc.gu[f] += 2.0 * U.reshape(-1)
    if acc.order >= 2:
        acc.hu[f] += 2.0 * np.eye(U.size)


def _drive_terms(model, window, S, U, acc):
    T = len(U)
    L = model.horizon
    sigma = model.sigma
    s2 = sigma * sigma
    P = S[:, :2]
    agents = list(window.agents.items())
    for k in range(1, T + 1):
        p = P[k]
        proj = project_to_lane(p, window.lanes)
        # lane offset
        d = p - proj.point
        acc.val[0] += d @ d
        # lane heading
        e = wrap_angle(S[k, 2] - proj.heading)
        acc.val[1] += e * e
        # goal
        dg = p - window.goal
        acc.val[2] += dg @ dg
        if acc.order >= 1:
            acc.gs[0, acc.pos(k)] += 2.0 * d
            acc.gs[1, acc.pos(k)] += -2.0 * e * proj.heading_grad
            acc.gs[1, acc.head(k)] += 2.0 * e
            acc.gs[2, acc.pos(k)] += 2.0 * dg
        if acc.order >= 2:
            t = proj.tangent
            acc.hs[0, acc.pos(k), acc.pos(k)] += (2.0 * np.eye(2) if proj.clamped
                                                 else 2.0 * (np.eye(2) - np.outer(t, t)))
            de = np.zeros(3)
            de[:2] = -proj.heading_grad
            de[2] = 1.0
            idx = [acc.pos(k).start, acc.pos(k).start + 1, acc.head(k)]
            acc.hs[1][np.ix_(idx, idx)] += 2.0 * np.outer(de, de)
            acc.hs[2, acc.pos(k), acc.pos(k)] += 2.0 * np.eye(2)
        if not agents:
            continue
        # reactive term on the closest agent (lowest index on ties)
        refs = [af.expected(k) for _, af in agents]
        dists = [np.linalg.norm(p - r) for r in refs]
        a = int(np.argmin(dists))
        aid, af = agents[a]
        _rbf_pair(acc, 3, p - refs[a], _free([(k, 1.0)]), _agent_terms(aid, af, k), sigma)
        # proactive term: expected closest approach over the look-ahead
        taus = list(range(k + 1, k + L + 1))
        E = np.array([_ego_point(P, t, T) for t in taus])
        best = None
        for aid, af in agents:
            X = af.positions(taus)
            diff = E[None] - X
            dist = np.sqrt(np.einsum("mlc,mlc->ml", diff, diff))
            ti = np.argmin(dist, axis=1)
            rows = np.arange(len(ti))
            D = float(af.probs @ dist[rows, ti])
            if best is None or D < best[0]:
                best = (D, aid, af, ti, diff[rows, ti], dist[rows, ti])
        D, aid, af, ti, vecs, norms = best
        r = math.exp(-D * D / (2.0 * s2))
        acc.val[5] += r
        if acc.order < 1:
            continue
        rp = -D / s2 * r
        n = acc.gs.shape[1]
        gD = np.zeros(n) if acc.order >= 2 else None
        for m, (tm, v, nv) in enumerate(zip(ti, vecs, norms)):
            pm = af.probs[m]
            if pm == 0.0 or nv < 1e-12:
                continue
            vh = v / nv
            tau = taus[tm]
            eterms = _free(_ego_combo(tau, T))
            for i, c in eterms:
                acc.gs[5, acc.pos(i)] += rp * pm * c * vh
                if gD is not None:
                    gD[acc.pos(i)] += pm * c * vh
            for i, c in af.combo(m, tau):
                acc.add_agent(5, aid, m, i, -rp * pm * c * vh)
            if acc.order >= 2:
                curv = (np.eye(2) - np.outer(vh, vh)) / nv
                for i, c1 in eterms:
                    for j, c2 in eterms:
                        acc.hs[5, acc.pos(i), acc.pos(j)] += rp * pm * c1 * c2 * curv
        if acc.order >= 2:
            rpp = (D * D / (s2 * s2) - 1.0 / s2) * r
            acc.hs[5] += rpp * np.outer(gD, gD)
    _control_terms(acc, 4, U)


@dataclass
class Evaluation:
    """Per-feature totals and derivatives of a plan cost."""

    phi: np.ndarray                 # (F,)
    grad_u: np.ndarray | None       # (F, 2T)
    hess_u: np.ndarray | None       # (F, 2T, 2T)
    grad_agents: dict | None        # aid -> ((F, 2), (F, K, M, 2))
    states: np.ndarray


def evaluate_plan(model: CostModel, window: Window, controls, order: int = 0) -> Evaluation:
    """Summed features of a plan and, for ``order`` >= 1/2, their control derivatives."""
    U = np.asarray(controls, dtype=float).reshape(-1, 2)
    T = len(U)
    if T < 1:
        raise ValueError("need at least one control")
    if len(window.start) != (3 if model.dynamics == BASIC else 4):
        raise ValueError(f"window start state does not match {model.dynamics} dynamics")
    if model.feature_set == DRIVE6 and not window.lanes:
        raise ValueError("drive6 cost needs lanes")
    S = rollout(window.start, U, window.dt)
    n_s = S.shape[1]
    acc = _Acc(model.n_features, T, n_s, order, window.agents)
    if model.feature_set == TOY4:
        _toy_terms(model, window, S[:, :2], U, acc)
    else:
        _drive_terms(model, window, S, U, acc)
    if order == 0:
        return Evaluation(acc.val, None, None, None, S)

    nu = 2
    As, Bs, Fzz = [], [], []
    for j in range(T):
        A, B = linearize_dynamics(S[j], U[j], window.dt)
        As.append(A)
        Bs.append(B)
        if order >= 2:
            Fzz.append(dynamics_hessian(S[j], U[j], window.dt))
    J = np.zeros((T, n_s, T * nu))
    for k in range(1, T + 1):
        if k >= 2:
            J[k - 1] = As[k - 1] @ J[k - 2]
        J[k - 1][:, (k - 1) * nu:k * nu] += Bs[k - 1]
    Jf = J.reshape(T * n_s, T * nu)
    grad_u = acc.gs @ Jf + acc.gu
    hess_u = None
    if order >= 2:
        hess_u = np.einsum("ab,fbc,cd->fad", Jf.T, acc.hs, Jf, optimize=True) + acc.hu
        gs = acc.gs.reshape(acc.F, T, n_s)
        lam = gs[:, T - 1].copy()   # total derivative w.r.t. s_T
        for j in range(T - 1, -1, -1):
            # lam currently holds dC/ds_{j+1}
            Z = np.zeros((n_s + nu, T * nu))
            if j >= 1:
                Z[:n_s] = J[j - 1]
            Z[n_s:, j * nu:(j + 1) * nu] = np.eye(nu)
            M = np.einsum("fi,izw->fzw", lam, Fzz[j])
            hess_u += np.einsum("za,fzw,wb->fab", Z, M, Z, optimize=True)
            if j >= 1:
                lam = gs[:, j - 1] + lam @ As[j]
        hess_u = 0.5 * (hess_u + np.transpose(hess_u, (0, 2, 1)))
    return Evaluation(acc.val, grad_u, hess_u, acc.ga, S)


def feature_totals(model: CostModel, window: Window, controls) -> np.ndarray:
    return evaluate_plan(model, window, controls).phi


def trajectory_cost(model: CostModel, window: Window, controls) -> float:
    """Sum of per-step costs along the rolled-out plan."""
    return float(model.theta @ feature_totals(model, window, controls))


def grad_hess_controls(model: CostModel, window: Window, controls):
    """Gradient and (symmetric) Hessian of the plan cost over stacked controls."""
    ev = evaluate_plan(model, window, controls, order=2)
    th = model.theta
    return th @ ev.grad_u, np.einsum("f,fab->ab", th, ev.hess_u)


def grad_controls(model: CostModel, window: Window, controls) -> np.ndarray:
    ev = evaluate_plan(model, window, controls, order=1)
    return model.theta @ ev.grad_u


def grad_predictions(model: CostModel, window: Window, controls) -> dict:
    """Gradient of the plan cost w.r.t. every agent input.

    Returns ``{agent_id: (d/d current position (2,), d/d predicted waypoints (K, M, 2))}``.
    Min operators use the achieving argument (lowest agent, earliest step on ties).
    """
    ev = evaluate_plan(model, window, controls, order=1)
    th = model.theta
    return {aid: (th @ cur, np.tensordot(th, modes, axes=1))
            for aid, (cur, modes) in ev.grad_agents.items()}
