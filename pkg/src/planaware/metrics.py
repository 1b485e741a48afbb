"""Accuracy metrics and their planning-informed variants.

Planning-informed (PI) metrics reweight a per-agent base metric by a function
of how strongly the ego plan cost reacts to that agent:

    PI-Metric = 1/|A| * sum_a f(a, g) * Metric_a
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import spearmanr

from .cioc import assemble_demo
from .core import DetectionSet, PredictionSet, Scene, Trajectory
from .cost import CostModel, detection_futures, grad_predictions, window_from_scene
from .sim import PerturbationSpec, perturb_detections

Z95 = 1.959963984540054
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
CSV_COLUMNS = ("agent_id", "metric", "raw", "sensitivity", "weight", "pi_value", "bucket")


def _xy(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.positions
    return np.asarray(traj, dtype=float).reshape(-1, 2)


def _errors(pred, gt) -> np.ndarray:
    p, g = _xy(pred), _xy(gt)
    if p.shape != g.shape:
        raise ValueError(f"trajectory lengths differ: {len(p)} vs {len(g)}")
    return np.linalg.norm(p - g, axis=1)


def ade(pred, gt) -> float:
    return float(_errors(pred, gt).mean())


def fde(pred, gt) -> float:
    return float(_errors(pred, gt)[-1])


def _modes(modes) -> np.ndarray:
    m = np.asarray(modes, dtype=float)
    if m.ndim == 2:
        m = m[None]
    if m.ndim != 3 or m.shape[0] == 0:
        raise ValueError("need at least one (T, 2) mode")
    return m


def min_ade(modes, gt) -> float:
    return min(ade(m, gt) for m in _modes(modes))


def min_fde(modes, gt) -> float:
    return min(fde(m, gt) for m in _modes(modes))


def mixture_nll(modes, probs, gt, sigma: float = 0.5) -> float:
    """Per-timestep NLL of ``gt`` under an isotropic Gaussian mixture, averaged over time."""
    m = _modes(modes)
    g = _xy(gt)
    p = np.atleast_1d(np.asarray(probs, dtype=float))
    if not sigma > 0:
        raise ValueError("bandwidth must be positive")
    if m.shape[1:] != g.shape or len(p) != len(m):
        raise ValueError("modes do not line up with the probabilities or the ground truth")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("mode probabilities must be >= 0 and sum to 1")
    if not np.any(p > 0):
        raise ValueError("degenerate mixture")
    d2 = np.sum((m - g[None]) ** 2, axis=2)                       # (K, T)
    log_n = -d2 / (2 * sigma * sigma) - math.log(2 * math.pi * sigma * sigma)
    with np.errstate(divide="ignore"):
        logp = np.log(p)[:, None]
    return float(-logsumexp(logp + log_n, axis=0).mean())


# --- sensitivities ------------------------------------------------------------

@dataclass
class SensitivityReport:
    """Scalar sensitivity per agent plus the per-waypoint gradients behind it.

    ``mode`` is ``"pred"`` (gradient w.r.t. predicted waypoints) or ``"det"``
    (total gradient w.r.t. the detected position).
    """

    g: dict
    waypoint_grads: dict
    g_gt: dict | None = None
    mode: str = "pred"

    def __post_init__(self):
        for aid, val in self.g.items():
            if not val >= 0:
                raise ValueError(f"agent {aid}: sensitivity must be >= 0")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "g": dict(self.g),
                "g_gt": None if self.g_gt is None else dict(self.g_gt),
                "waypoint_grads": {a: v.tolist() for a, v in self.waypoint_grads.items()}}


def _norms(model, window, controls, mode):
    grads = grad_predictions(model, window, controls)
    g, wp = {}, {}
    for aid, (cur, modes) in grads.items():
        if mode == "pred":
            wp[aid] = modes
            g[aid] = float(np.linalg.norm(modes))
        elif mode == "det":
            # futures translate rigidly with the detected position
            total = cur + modes.sum(axis=(0, 1))
            wp[aid] = np.concatenate([cur[None], modes.reshape(-1, 2)])
            g[aid] = float(np.linalg.norm(total))
        else:
            raise ValueError(f"unknown sensitivity mode {mode!r}")
    return g, wp


def sensitivity_of(model: CostModel, window, controls, mode: str = "pred",
                   gt_window=None) -> SensitivityReport:
    """Planning sensitivity of every agent in ``window`` for the ego plan ``controls``.

    ``gt_window`` holds the same agents with ground-truth inputs; when given,
    their sensitivities are reported as ``g_gt``.
    """
    g, wp = _norms(model, window, controls, mode)
    g_gt = None
    if gt_window is not None:
        g_gt, _ = _norms(model, gt_window, controls, mode)
    return SensitivityReport(g, wp, g_gt, mode)


def ego_controls(scene: Scene, t: int = 0, steps: int | None = None) -> np.ndarray:
    """The logged ego controls from step ``t`` (at most ``steps`` of them)."""
    U = assemble_demo(scene).controls[t:]
    if steps is not None:
        U = U[:steps]
    if len(U) == 0:
        raise ValueError(f"scene has no ego motion after step {t}")
    return U


def prediction_sensitivity(model: CostModel, scene: Scene, predictions: PredictionSet,
                           t: int = 0, steps: int | None = None) -> SensitivityReport:
    """Sensitivities to predicted futures, with g_gt from the ground-truth futures."""
    U = ego_controls(scene, t, steps or scene.horizon)
    win = window_from_scene(scene, t, predictions)
    gt_win = window_from_scene(scene, t, extent=max(predictions.horizon, 1))
    return sensitivity_of(model, win, U, "pred", gt_win)


def _velocities(scene: Scene, t: int) -> dict:
    return {aid: (traj.position_at(t + 1) - traj.position_at(t)) / scene.dt
            for aid, traj in scene.agents.items()}


def detection_sensitivity(model: CostModel, scene: Scene, detections: DetectionSet | None,
                          t: int = 0, steps: int | None = None) -> SensitivityReport:
    """Sensitivities to detected positions of the scene's agents.

    Each agent's future is a constant-velocity track (ground-truth velocity)
    seeded at its detected position; agents without a detection keep their
    true position. ``g_gt`` seeds the tracks at the true positions.
    """
    U = ego_controls(scene, t, steps or scene.horizon)
    n = len(U) + model.horizon + 2
    base = window_from_scene(scene, t, extent=1)
    truth = scene.agent_positions(t)
    vel = _velocities(scene, t)
    detected = dict(truth)
    for box in detections or ():
        if box.agent_id in detected:
            detected[box.agent_id] = box.center
    win = detection_futures(base, detected, vel, n)
    gt_win = detection_futures(base, truth, vel, n)
    return sensitivity_of(model, win, U, "det", gt_win)


# --- planning-informed weighting ------------------------------------------------

class WeightingScheme(str, enum.Enum):
    UNIFORM = "uniform"
    NORMALIZE = "normalize"
    SOFTMAX = "softmax"
    HINGE = "hinge"


def pi_weights(report: SensitivityReport, scheme, agents=None) -> dict:
    """Per-agent factor f(a, g) for the chosen weighting scheme."""
    scheme = WeightingScheme(scheme)
    ids = list(agents if agents is not None else report.g)
    g = np.array([report.g[a] for a in ids], dtype=float)
    if scheme is WeightingScheme.UNIFORM or len(ids) == 0:
        f = np.ones(len(ids))
    elif scheme is WeightingScheme.NORMALIZE:
        total = g.sum()
        f = 1.0 + g / total if total > 0 else np.ones(len(ids))
    elif scheme is WeightingScheme.SOFTMAX:
        e = np.exp(g - g.max())
        f = 1.0 + e / e.sum()
    else:
        if report.g_gt is None or any(a not in report.g_gt for a in ids):
            raise ValueError("HINGE weighting needs ground-truth sensitivities")
        ref = np.array([report.g_gt[a] for a in ids])
        f = 1.0 + np.maximum(0.0, g - ref)
    return dict(zip(ids, f.tolist()))


def pi_metric(values: dict, report: SensitivityReport, scheme) -> float:
    """Planning-informed mean of per-agent metric ``values``."""
    if not values:
        raise ValueError("no agents to average over")
    missing = [a for a in values if a not in report.g]
    if missing:
        raise ValueError(f"no sensitivity for agents {missing}")
    ids = list(values)
    if WeightingScheme(scheme) is WeightingScheme.UNIFORM:
        return float(np.mean([values[a] for a in ids]))
    f = pi_weights(report, scheme, ids)
    return float(np.mean([f[a] * values[a] for a in ids]))


# --- detection AP -----------------------------------------------------------------

def _frames(detections, gt):
    if isinstance(detections, DetectionSet) or isinstance(gt, dict):
        return [(detections, gt)]
    detections, gt = list(detections), list(gt)
    if len(detections) != len(gt):
        raise ValueError("need one ground-truth set per detection frame")
    return list(zip(detections, gt))


def match_detections(detections, gt, threshold: float, scaled=None):
    """Greedy center-distance matching in descending score order.

    Each detection takes the nearest still-unmatched ground-truth agent of its
    frame and is a true positive if that distance is within ``threshold``.
    ``scaled`` optionally maps (frame, agent) to a tighter per-agent threshold
    that a matched pair must also satisfy. Frames without ground truth are
    skipped. Returns ``(scores, is_tp, n_gt)``.
    """
    if not threshold > 0:
        raise ValueError("match threshold must be positive")
    entries = []
    n_gt = 0
    for fi, (dets, truth) in enumerate(_frames(detections, gt)):
        if not truth:
            continue
        n_gt += len(truth)
        for di, box in enumerate(dets):
            entries.append((-box.score, fi, di, box))
    entries.sort(key=lambda e: e[:3])
    frames = _frames(detections, gt)
    taken = {fi: set() for fi in range(len(frames))}
    scores, tps = [], []
    for neg, fi, _, box in entries:
        truth = frames[fi][1]
        free = [a for a in truth if a not in taken[fi]]
        ok = False
        if free:
            d = [float(np.linalg.norm(box.center - np.asarray(truth[a], dtype=float)))
                 for a in free]
            j = int(np.argmin(d))
            if d[j] <= threshold:
                taken[fi].add(free[j])
                limit = threshold if scaled is None else scaled.get((fi, free[j]), threshold)
                ok = d[j] <= limit
        scores.append(-neg)
        tps.append(ok)
    return np.array(scores), np.array(tps, dtype=bool), n_gt


def pr_curve(detections, gt, threshold: float, scaled=None):
    """Recall and precision after each detection in score order."""
    _, tp, n_gt = match_detections(detections, gt, threshold, scaled)
    if n_gt == 0:
        return np.zeros(0), np.zeros(0)
    ctp = np.cumsum(tp)
    n = np.arange(1, len(tp) + 1)
    return ctp / n_gt, ctp / n


def _ap(recall, precision) -> float:
    if len(recall) == 0:
        return 0.0
    interp = [precision[recall >= r].max() if np.any(recall >= r) else 0.0
              for r in RECALL_POINTS]
    return float(np.mean(interp))


def average_precision(detections, gt, threshold: float) -> float:
    """101-point interpolated AP with center-distance matching.

    ``detections``/``gt`` are one frame (a DetectionSet and ``{agent_id: xy}``)
    or parallel sequences of them. Returns NaN when no frame has ground truth.
    """
    _, _, n_gt = match_detections(detections, gt, threshold)
    if n_gt == 0:
        return math.nan
    return _ap(*pr_curve(detections, gt, threshold))


def _scaled_thresholds(gt, threshold, sensitivities):
    if isinstance(gt, dict):
        frames = [(0, gt)]
        sensitivities = [sensitivities]
    else:
        frames = list(enumerate(gt))
        sensitivities = list(sensitivities)
        if len(sensitivities) != len(frames):
            raise ValueError("need one sensitivity set per frame")
    out = {}
    for (fi, truth), rep in zip(frames, sensitivities):
        g = rep.g if isinstance(rep, SensitivityReport) else rep
        for aid in truth:
            if aid not in g:
                raise ValueError(f"no sensitivity for ground-truth agent {aid}")
            out[(fi, aid)] = threshold / (1.0 + g[aid])
    return out


def pi_average_precision(detections, gt, threshold: float, sensitivities) -> float:
    """AP where a match to agent ``a`` must also lie within ``threshold / (1 + g_a)``.

    ``sensitivities`` is a SensitivityReport (or ``{agent_id: g}``) per frame.
    """
    scaled = _scaled_thresholds(gt, threshold, sensitivities)
    _, _, n_gt = match_detections(detections, gt, threshold)
    if n_gt == 0:
        return math.nan
    return _ap(*pr_curve(detections, gt, threshold, scaled))


# --- striation ----------------------------------------------------------------------

@dataclass
class Bucket:
    lo: float
    hi: float
    count: int
    mean: float | None
    ci_low: float | None
    ci_high: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def quartile_edges(g) -> np.ndarray:
    """Sensitivity quartile edges; repeated quantiles are merged."""
    g = np.asarray(list(g), dtype=float)
    if len(g) == 0:
        raise ValueError("no sensitivities to take quartiles of")
    edges = np.unique(np.quantile(g, [0.0, 0.25, 0.5, 0.75, 1.0]))
    if len(edges) == 1:
        edges = np.array([edges[0], edges[0] + 1.0])
    return edges


def bucket_index(g: float, edges) -> int | None:
    """Bucket of ``g`` for half-open buckets ``[e_i, e_{i+1})``, the last one closed."""
    edges = np.asarray(edges, dtype=float)
    if g < edges[0] or g > edges[-1]:
        return None
    if g == edges[-1]:
        return len(edges) - 2
    return int(np.searchsorted(edges, g, side="right") - 1)


def striate(values: dict, report, edges=None) -> list[Bucket]:
    """Bucket a metric by sensitivity; each bucket gets its mean with a normal 95% CI."""
    g = report.g if isinstance(report, SensitivityReport) else report
    ids = [a for a in values if a in g]
    if edges is None:
        edges = quartile_edges([g[a] for a in ids])
    edges = np.asarray(edges, dtype=float)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bucket edges must be strictly increasing")
    groups = [[] for _ in range(len(edges) - 1)]
    for a in ids:
        b = bucket_index(g[a], edges)
        if b is not None:
            groups[b].append(values[a])
    out = []
    for i, vals in enumerate(groups):
        n = len(vals)
        mean = float(np.mean(vals)) if n else None
        if n >= 2:
            half = Z95 * float(np.std(vals, ddof=1)) / math.sqrt(n)
            lo, hi = mean - half, mean + half
        else:
            lo = hi = mean
        out.append(Bucket(float(edges[i]), float(edges[i + 1]), n, mean, lo, hi))
    return out


# --- noise sweep ------------------------------------------------------------------

@dataclass
class SweepPoint:
    sigma: float
    mean: float
    ci_low: float
    ci_high: float
    n: int


def noise_sweep(scenes, model: CostModel, grid, trials: int = 100, seed: int = 0,
                t: int = 0) -> list[SweepPoint]:
    """Mean detection sensitivity as detection noise grows.

    ``trials`` perturbed detection sets per grid point are spread round-robin
    over ``scenes``. Trial ``i`` uses the same standard-normal draws at every
    noise level, so the curve compares like with like.
    """
    scenes = list(scenes)
    grid = [float(s) for s in grid]
    if not grid:
        raise ValueError("noise grid is empty")
    if not scenes or trials < 1:
        raise ValueError("need scenes and at least one trial")
    out = []
    for sigma in grid:
        vals = []
        for i in range(trials):
            scene = scenes[i % len(scenes)]
            dets = perturb_detections(scene, PerturbationSpec(sigma, seed * 1_000_003 + i), t)
            vals.extend(detection_sensitivity(model, scene, dets, t).g.values())
        vals = np.array(vals)
        mean = float(vals.mean()) if len(vals) else 0.0
        half = Z95 * float(vals.std(ddof=1)) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        out.append(SweepPoint(sigma, mean, mean - half, mean + half, len(vals)))
    return out


def sweep_spearman(points) -> float:
    """Rank correlation between noise level and mean sensitivity."""
    if len(points) < 2:
        return math.nan
    return float(spearmanr([p.sigma for p in points], [p.mean for p in points]).statistic)


# --- reports -------------------------------------------------------------------

@dataclass
class MetricReport:
    """Raw and PI values of each metric plus the per-agent breakdown."""

    summary: dict
    rows: list
    striation: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "summary": self.summary, "rows": self.rows,
                "striation": {k: [b.to_dict() for b in v] for k, v in self.striation.items()}}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


PRED_METRICS = ("ade", "fde", "min_ade", "min_fde", "nll")


def prediction_metrics(predictions: PredictionSet, scene: Scene, t: int = 0,
                       sigma_nll: float = 0.5) -> dict:
    """``{metric: {agent_id: value}}`` against the scene's ground-truth futures.

    ADE/FDE use the most probable mode.
    """
    out = {m: {} for m in PRED_METRICS}
    for aid, modes in predictions.modes.items():
        if aid not in scene.agents:
            raise ValueError(f"prediction for unknown agent {aid!r}")
        traj = scene.agents[aid]
        gt = np.array([traj.position_at(t + k) for k in range(1, modes.shape[1] + 1)])
        probs = predictions.probs[aid]
        best = modes[int(np.argmax(probs))]
        out["ade"][aid] = ade(best, gt)
        out["fde"][aid] = fde(best, gt)
        out["min_ade"][aid] = min_ade(modes, gt)
        out["min_fde"][aid] = min_fde(modes, gt)
        out["nll"][aid] = mixture_nll(modes, probs, gt, sigma_nll)
    return out


def build_report(metrics: dict, report: SensitivityReport, scheme, edges=None,
                 config=None, prefix: str = "") -> MetricReport:
    """Per-agent report rows plus the PI summary of every metric, striated by sensitivity."""
    rows, summary, striation = [], {}, {}
    for name, values in metrics.items():
        if not values:
            continue
        f = pi_weights(report, scheme, list(values))
        ids = list(values)
        bucket_edges = edges if edges is not None else quartile_edges([report.g[a] for a in ids])
        buckets = striate(values, report, bucket_edges)
        striation[prefix + name] = buckets
        for a in ids:
            rows.append({"agent_id": prefix + a, "metric": name, "raw": float(values[a]),
                         "sensitivity": float(report.g[a]), "weight": float(f[a]),
                         "pi_value": float(f[a] * values[a]),
                         "bucket": bucket_index(report.g[a], bucket_edges)})
        summary[prefix + name] = {"raw": float(np.mean([values[a] for a in ids])),
                                  "pi": pi_metric(values, report, scheme)}
    return MetricReport(summary, rows, striation, dict(config or {}))
