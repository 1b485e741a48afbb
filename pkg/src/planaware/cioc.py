"""Cost-weight learning from locally optimal demonstrations (Laplace-approximated IOC).

With per-step cost ``c = theta . phi``, the demonstrated controls ``u`` get the
log-likelihood

    log P(u | theta) ~= -1/2 g' H^-1 g + 1/2 log|H| - d/2 log(2 pi)

where ``g`` and ``H`` are the gradient and Hessian of the summed cost w.r.t.
the stacked controls. Because the cost is linear in ``theta``, ``g`` and ``H``
are linear combinations of per-feature terms that are computed once per
demonstration segment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Scene, rollout, wrap_angle
from .cost import (FEATURE_NAMES, CostModel, evaluate_plan, window_from_scene)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class DegenerateHessianError(ValueError):
    """The cost Hessian is not positive definite along some control direction."""


class InconsistentDemoError(ValueError):
    pass


@dataclass
class Demonstration:
    scene: Scene
    controls: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.controls)


def assemble_demo(scene: Scene, tol: float = 1e-6) -> Demonstration:
    """Recover the controls behind the scene's ego trajectory by inverting the dynamics."""
    S = scene.ego.states()
    if len(S) < 2:
        raise InconsistentDemoError("ego trajectory needs at least two states")
    dt = scene.dt
    step = np.diff(S[:, :2], axis=0)
    omega = wrap_angle(np.diff(S[:, 2])) / dt
    if S.shape[1] == 3:
        forward = np.stack([np.cos(S[:-1, 2]), np.sin(S[:-1, 2])], axis=1)
        v = np.einsum("ij,ij->i", step, forward) / dt
        U = np.stack([v, omega], axis=1)
    else:
        U = np.stack([np.diff(S[:, 3]) / dt, omega], axis=1)
    err = np.abs(rollout(S[0], U, dt)[:, :2] - S[:, :2]).max()
    if err > tol:
        raise InconsistentDemoError(f"ego trajectory is not reproducible by the dynamics "
                                    f"(rollout error {err:.3g} m)")
    return Demonstration(scene, U)


@dataclass
class _Segment:
    grad: np.ndarray   # (F, d)
    hess: np.ndarray   # (F, d, d)


def _segments(model: CostModel, demo: Demonstration, window: int | None) -> list[_Segment]:
    unit = model.with_theta(np.ones(model.n_features))
    n = demo.steps
    W = n if window is None else window
    out = []
    for t0 in range(0, n, W):
        U = demo.controls[t0:t0 + W]
        win = window_from_scene(demo.scene, t0, extent=len(U) + model.horizon + 2)
        ev = evaluate_plan(unit, win, U, order=2)
        out.append(_Segment(ev.grad_u, ev.hess_u))
    return out


def _segment_nll(theta, seg: _Segment, eps: float, want_grad: bool):
    g = theta @ seg.grad
    H = np.tensordot(theta, seg.hess, axes=1)
    d = len(g)
    Ht = H + eps * np.eye(d)
    try:
        Lc = np.linalg.cholesky(Ht)
    except np.linalg.LinAlgError:
        raise DegenerateHessianError("cost Hessian is not positive definite") from None
    z = np.linalg.solve(Lc, g)
    Kg = np.linalg.solve(Lc.T, z)
    logdet = 2.0 * np.sum(np.log(np.diag(Lc)))
    nll = 0.5 * (g @ Kg) - 0.5 * logdet + 0.5 * d * LOG_2PI
    if not want_grad:
        return nll, None
    Kinv = np.linalg.solve(Lc.T, np.linalg.solve(Lc, np.eye(d)))
    grad = (seg.grad @ Kg
            - 0.5 * np.einsum("a,fab,b->f", Kg, seg.hess, Kg)
            - 0.5 * np.einsum("ab,fba->f", Kinv, seg.hess))
    return nll, grad


def laplace_nll(model: CostModel, demo: Demonstration, window: int | None = None,
                eps: float = 1e-6) -> float:
    """Negative Laplace log-likelihood of the demonstrated controls.

    ``window`` splits long demonstrations into independent segments of that
    many steps. Raises :class:`DegenerateHessianError` if the conditioned
    Hessian is not positive definite.
    """
    segs = _segments(model, demo, window)
    total = sum(_segment_nll(model.theta, s, eps, False)[0] for s in segs)
    try:
        raw = sum(_segment_nll(model.theta, s, 0.0, False)[0] for s in segs)
        if abs(raw - total) > 1e-3:
            log.warning("Hessian conditioning changes the NLL by %.3g", raw - total)
    except DegenerateHessianError:
        log.warning("Hessian is only positive definite after conditioning")
    return float(total)


def quadratic_nll(theta: float, u: float) -> float:
    """Exact NLL of u under the normalized density proportional to exp(-theta u^2)."""
    return theta * u * u - 0.5 * math.log(2.0 * theta) + 0.5 * LOG_2PI


@dataclass
class FitOptions:
    lam: float = 1e-3
    max_iters: int = 200
    seed: int = 0
    window: int | None = 5   # match the expert's planning horizon
    eps: float = 1e-6
    tol: float = 1e-10
    init: float = 1.0


@dataclass
class FitReport:
    feature_set: str
    theta_hat: np.ndarray
    nll: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    cosine_to_planted: float | None = None

    def to_dict(self) -> dict:
        return {"feature_set": self.feature_set, "theta_hat": self.theta_hat.tolist(),
                "nll": self.nll, "iterations": self.iterations, "converged": self.converged,
                "trace": list(self.trace), "cosine_to_planted": self.cosine_to_planted}


class Objective:
    """Regularized summed NLL as a function of log-weights ``eta``."""

    def __init__(self, model: CostModel, demos, options: FitOptions):
        self.options = options
        self.segments = [s for demo in demos for s in _segments(model, demo, options.window)]

    def nll_theta(self, theta, want_grad=True):
        total = 0.0
        grad = np.zeros(len(theta)) if want_grad else None
        for seg in self.segments:
            f, g = _segment_nll(theta, seg, self.options.eps, want_grad)
            total += f
            if want_grad:
                grad += g
        return total, grad

    def __call__(self, eta, want_grad=True):
        theta = np.exp(eta)
        lam = self.options.lam
        try:
            f, g = self.nll_theta(theta, want_grad)
        except DegenerateHessianError:
            return math.inf, None
        f += lam * theta @ theta
        if want_grad:
            g = (g + 2.0 * lam * theta) * theta
        return f, g


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def fit_theta(demos, feature_set: str, options: FitOptions | None = None,
              sigma: float | None = None, horizon: int = 6, planted=None) -> FitReport:
    """Maximum-likelihood weights with ``theta = exp(eta)`` and an L2 penalty.

    Quasi-Newton (BFGS) in ``eta`` with Armijo backtracking; steps landing on a
    degenerate Hessian are rejected like any other failed step.
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    options = options or FitOptions()
    F = len(FEATURE_NAMES[feature_set])
    model = CostModel(feature_set, np.ones(F), sigma, horizon)
    obj = Objective(model, demos, options)
    rng = np.random.default_rng(options.seed)
    eta = np.full(F, math.log(options.init)) + rng.normal(0.0, 0.05, F)
    f, g = obj(eta)
    # control effort is the only feature with a strictly positive-definite
    # Hessian; raise its weight until the start point is admissible
    ctrl = FEATURE_NAMES[feature_set].index("control")
    while not math.isfinite(f):
        eta[ctrl] += 1.0
        f, g = obj(eta)
        if eta[ctrl] > 30:
            raise DegenerateHessianError("no positive-definite starting point found")
    Hinv = np.eye(F)
    trace = [float(f)]
    converged = False
    it = 0
    for it in range(1, options.max_iters + 1):
        d = -Hinv @ g
        if g @ d >= 0:
            Hinv = np.eye(F)
            d = -g
        step_norm = np.linalg.norm(d)
        if step_norm > 2.0:
            d *= 2.0 / step_norm
        alpha = 1.0
        while True:
            f_new, g_new = obj(eta + alpha * d)
            if math.isfinite(f_new) and f_new <= f + 1e-4 * alpha * (g @ d):
                break
            alpha *= 0.5
            if alpha < 1e-12:
                break
        if alpha < 1e-12:
            converged = np.linalg.norm(g) < 1e-4 * max(1.0, abs(f))
            break
        s = alpha * d
        y = g_new - g
        eta = eta + s
        change = f - f_new
        f, g = f_new, g_new
        trace.append(float(f))
        sy = s @ y
        if sy > 1e-12:
            rho = 1.0 / sy
            V = np.eye(F) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        if change <= options.tol * max(1.0, abs(f)) or np.linalg.norm(g) < 1e-8:
            converged = True
            break
    theta = np.exp(eta)
    if not converged:
        log.warning("weight fit did not converge in %d iterations", options.max_iters)
    cos = cosine(theta, planted) if planted is not None else None
    return FitReport(feature_set, theta, float(f), it, bool(converged), trace, cos)
