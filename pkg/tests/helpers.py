"""Shared test utilities: finite differences and random planning frames."""

import numpy as np

from planaware.core import Lane
from planaware.cost import DRIVE6, TOY4, AgentFuture, CostModel, Window


def fd(f, x, h=1e-6):
    """Central-difference Jacobian of ``f`` at ``x``; output shape ``f(x).shape + x.shape``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    out = np.stack(cols, axis=-1)
    return out.reshape(np.shape(cols[0]) + x.shape)


def close(a, b, tol):
    """Mixed relative/absolute check: max error within ``tol * max(|b|_inf, 1)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, 1.0)
    return float(np.max(np.abs(a - b))) <= tol * scale if b.size else True


def _agents(rng, n, center, spread, T):
    out = {}
    for i in range(n):
        K = int(rng.integers(1, 3))
        M = int(rng.integers(1, T + 3))
        p = rng.dirichlet(np.ones(K))
        cur = center + rng.normal(0, spread, 2)
        modes = cur + np.cumsum(rng.normal(0, 0.5, (K, M, 2)), axis=1)
        out[f"a{i}"] = AgentFuture(cur, modes, p)
    return out


def random_toy_frame(rng):
    T = int(rng.integers(2, 5))
    model = CostModel(TOY4, rng.uniform(0.2, 3.0, 4), rng.uniform(0.6, 2.0))
    start = np.array([*rng.normal(0, 2, 2), rng.uniform(-2.5, 2.5)])
    agents = _agents(rng, int(rng.integers(1, 4)), start[:2], 1.5, T)
    window = Window(start, 0.5, rng.normal(0, 1, 2), (), agents)
    U = rng.normal(0, 0.6, (T, 2))
    return model, window, U


def random_drive_frame(rng):
    T = int(rng.integers(2, 5))
    L = int(rng.integers(2, 5))
    theta = rng.uniform(0.2, 3.0, 6)
    model = CostModel(DRIVE6, theta, rng.uniform(1.5, 4.0), horizon=L)
    heading = rng.uniform(-0.3, 0.3)
    pts = [np.zeros(2)]
    for _ in range(3):
        pts.append(pts[-1] + 15 * np.array([np.cos(heading), np.sin(heading)]))
        heading += rng.uniform(-0.3, 0.3)
    lane = Lane(np.array(pts) + rng.normal(0, 5, 2))
    start = np.array([*(lane.centerline[0] + [5.0, rng.normal(0, 1.0)]),
                      rng.uniform(-0.3, 0.3), rng.uniform(2.0, 6.0)])
    agents = _agents(rng, int(rng.integers(1, 4)), start[:2] + [8.0, 0.0], 4.0, T)
    window = Window(start, 0.5, lane.centerline[-1], (lane,), agents)
    U = rng.normal(0, 0.5, (T, 2))
    return model, window, U
