"""Planning-aware evaluation of trajectory predictions and detections.

Exit codes: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .cioc import (DegenerateHessianError, FitOptions, InconsistentDemoError, assemble_demo,
                   fit_theta)
from .core import (BASIC, PredictionSet, SceneFormatError, Trajectory,
                   constant_velocity_predict, load_scene, save_scene, write_json)
from .cost import (DRIVE6, DYNAMICS_FOR, FEATURE_NAMES, REFERENCE_THETA, TOY4, CostModel,
                   load_model, save_model)
from .planner import OptimizationError, reoptimize
from .sim import (PLANTED_TOY, ScenarioSpec, errant_predictions, generate_scenario,
                  head_on_scenario, with_expert)

log = logging.getLogger("planaware")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated arguments of one invocation; embedded in every output file."""

    command: str
    seed: int
    out: Path
    jobs: int
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, **self.options}


# --- helpers -------------------------------------------------------------------

def _write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_csv(path: Path, header, rows, config: RunConfig):
    lines = ["# " + json.dumps(config.to_dict(), sort_keys=True), ",".join(header)]
    lines.extend(",".join(r) for r in rows)
    _write_text(path, "\n".join(lines) + "\n")


def _write_json(path: Path, data: dict, config: RunConfig):
    write_json(path, {"config": config.to_dict(), **data})


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _scene_files(paths) -> list[Path]:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(f for f in p.glob("*.json") if _is_scene(f)))
        elif p.is_file():
            files.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not files:
        raise InputError(f"no scene files found in {', '.join(map(str, paths))}")
    return files


def _is_scene(path: Path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(data, dict) and "ego" in data and "dt" in data


def _load_scenes(files):
    out = []
    for f in files:
        try:
            out.append((f.stem, load_scene(f)))
        except (SceneFormatError, json.JSONDecodeError, OSError) as exc:
            raise InputError(f"{f}: {exc}") from exc
    return out


def _load_model(path) -> CostModel:
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise InputError(f"model file not found: {path}") from exc
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _check_scenes(feature_set: str, scenes):
    for sid, scene in scenes:
        if scene.dynamics != DYNAMICS_FOR[feature_set]:
            raise InputError(f"scene {sid} has {scene.dynamics} dynamics; {feature_set} "
                             f"needs {DYNAMICS_FOR[feature_set]}")
        if feature_set == DRIVE6 and not scene.lanes:
            raise InputError(f"scene {sid} has no lanes")


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _floats(text: str) -> list[float]:
    """Comma-separated numbers (argparse type)."""
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _figure_meta(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)


def _figures(config: RunConfig):
    from . import plots
    plots._META["Description"] = _figure_meta(config)
    return plots


# --- scenes -------------------------------------------------------------------

def _generate_one(job):
    spec, model_dict, expert = job
    scene = generate_scenario(spec)
    if expert is not None:
        scene = with_expert(scene, CostModel.from_dict(model_dict), **expert)
    return scene


def cmd_scenes_generate(args, config: RunConfig) -> int:
    fs = args.feature_set
    if args.spec:
        try:
            base = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read spec {args.spec}: {exc}") from exc
    else:
        base = {}
    if args.model:
        model = _load_model(args.model)
    elif fs == TOY4:
        model = CostModel(TOY4, PLANTED_TOY)
    else:
        model = CostModel(DRIVE6, REFERENCE_THETA[DRIVE6])
    if model.feature_set != fs:
        raise InputError(f"model is {model.feature_set}, scenes are {fs}")
    overrides = {k: v for k, v in {"n_agents": args.agents,
                                   "episode_length": args.episode_length,
                                   "layout": args.layout}.items() if v is not None}
    jobs = []
    for i in range(args.count):
        seed = config.seed + i
        kw = {**base, **overrides, "seed": seed}
        if "speed_range" in kw:
            kw["speed_range"] = tuple(kw["speed_range"])
        try:
            spec = ScenarioSpec(**kw) if fs == TOY4 else ScenarioSpec.driving(**kw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid scenario spec: {exc}") from exc
        expert = None
        if not args.no_expert:
            horizon = None if fs == DRIVE6 else spec.horizon
            noise = args.noise_std if args.noise_std is not None else (0.05 if fs == TOY4 else 0.0)
            expert = {"horizon": horizon, "noise_std": noise, "seed": seed}
        jobs.append((spec, model.to_dict(), expert))
    scenes = _map(_generate_one, jobs, config.jobs)
    for (spec, _, _), scene in zip(jobs, scenes):
        scene.meta["config"] = config.to_dict()
        save_scene(scene, config.out / f"scene_{spec.seed:04d}.json")
    log.info("wrote %d scenes to %s", len(scenes), config.out)
    return EXIT_OK


def _prediction_dict(pred: PredictionSet, config: RunConfig, label: str, t: int = 0) -> dict:
    return {"config": config.to_dict(), "label": label, "t": t,
            "modes": {a: m.tolist() for a, m in pred.modes.items()},
            "probs": {a: p.tolist() for a, p in pred.probs.items()}}


def cmd_scenes_errant_pair(args, config: RunConfig) -> int:
    scene = head_on_scenario(gap=args.gap, steps=args.steps)
    scene.meta["config"] = config.to_dict()
    toward, away = errant_predictions(scene, args.ade)
    save_scene(scene, config.out / "scene_head_on.json")
    save_model(CostModel(TOY4, REFERENCE_THETA[TOY4], args.sigma), config.out / "model_toy.json")
    write_json(config.out / "pred_toward.json", _prediction_dict(toward, config, "toward"))
    write_json(config.out / "pred_away.json", _prediction_dict(away, config, "away"))
    return EXIT_OK


# --- fit --------------------------------------------------------------------------

def cmd_fit(args, config: RunConfig) -> int:
    scenes = _load_scenes(_scene_files(args.scenes))
    try:
        demos = [assemble_demo(s) for _, s in scenes]
    except InconsistentDemoError as exc:
        raise InputError(str(exc)) from exc
    fs = args.feature_set or (TOY4 if scenes[0][1].dynamics == BASIC else DRIVE6)
    _check_scenes(fs, scenes)
    planted = args.planted
    if planted is None:
        experts = {json.dumps(s.meta.get("expert", {}).get("model", {}).get("theta"))
                   for _, s in scenes}
        if len(experts) == 1 and experts != {"null"}:
            planted = json.loads(experts.pop())
    if planted is not None and len(planted) != len(FEATURE_NAMES[fs]):
        raise InputError(f"planted weights need {len(FEATURE_NAMES[fs])} entries")
    opts = FitOptions(lam=args.lam, max_iters=args.max_iters, seed=config.seed,
                      window=args.window or None)
    report = fit_theta(demos, fs, opts, sigma=args.sigma, planted=planted)
    model = CostModel(fs, report.theta_hat, args.sigma)
    save_model(model, config.out / "model.json")
    _write_json(config.out / "fit_report.json",
                {**report.to_dict(), "planted": planted, "n_demos": len(demos)}, config)
    if report.cosine_to_planted is not None:
        log.info("cosine to planted weights: %.4f", report.cosine_to_planted)
    return EXIT_OK


# --- evaluate -------------------------------------------------------------------------

def _load_predictions(path) -> tuple[str, int, PredictionSet]:
    """Contents of a prediction file as ``(label, t, predictions)``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return (data.get("label", Path(path).stem), int(data.get("t", 0)),
                PredictionSet(data["modes"], data["probs"]))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"{path}: invalid prediction file ({exc})") from exc


def cv_predictions(scene, t: int, steps: int) -> PredictionSet:
    """Constant-velocity predictions from each agent's last observed displacement."""
    futures = {}
    for aid, traj in scene.agents.items():
        hist = Trajectory(np.array([traj.position_at(t - 1), traj.position_at(t)]), scene.dt)
        futures[aid] = constant_velocity_predict(hist, steps).positions
    return PredictionSet.single(futures)


def _edges(spec: str | None):
    if spec in (None, "quartiles"):
        return None
    try:
        edges = _floats(spec)
    except argparse.ArgumentTypeError as exc:
        raise InputError(str(exc)) from exc
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise InputError("striation edges must be strictly increasing")
    return edges


def _eval_pred(model, scenes, args, config):
    edges = _edges(args.striate)
    jobs = []
    if args.predictions:
        if len(scenes) != 1:
            raise InputError("--predictions needs exactly one scene")
        for path in args.predictions:
            label, t, pred = _load_predictions(path)
            jobs.append((label, scenes[0][1], pred, t if args.t is None else args.t))
    else:
        t = 1 if args.t is None else args.t
        for sid, scene in scenes:
            steps = args.pred_horizon or scene.horizon + 1
            jobs.append((sid, scene, cv_predictions(scene, t, steps), t))
    all_rows, summaries, sens = [], {}, {}
    values = {}
    for label, scene, pred, t in jobs:
        try:
            vals = M.prediction_metrics(pred, scene, t, args.sigma_nll)
            rep = M.prediction_sensitivity(model, scene, pred, t)
        except ValueError as exc:
            raise InputError(f"{label}: {exc}") from exc
        part = M.build_report(vals, rep, args.scheme, edges, prefix=f"{label}/")
        all_rows.extend(part.rows)
        summaries[label] = part.summary
        sens[label] = rep.to_dict()
        for name, v in vals.items():
            for a, x in v.items():
                values.setdefault(name, {})[f"{label}/{a}"] = x
    g_all = {r["agent_id"]: r["sensitivity"] for r in all_rows}
    striation = {}
    for name, v in values.items():
        e = edges if edges is not None else M.quartile_edges([g_all[a] for a in v])
        striation[name] = M.striate(v, g_all, e)
        for r in all_rows:
            if r["metric"] == name:
                r["bucket"] = M.bucket_index(r["sensitivity"], e)
    pooled = {}
    for name in values:
        rows = [r for r in all_rows if r["metric"] == name]
        pooled[name] = {"raw": float(np.mean([r["raw"] for r in rows])),
                        "pi": float(np.mean([r["pi_value"] for r in rows]))}
    report = M.MetricReport(pooled, all_rows, striation, config.to_dict())
    data = report.to_dict()
    data.update({"per_source": summaries, "sensitivities": sens})
    return report, data, {}


def _eval_det(model, scenes, args, config):
    from .sim import PerturbationSpec, perturb_detections
    t = args.t or 0
    dets, truths, g_gt, rows = [], [], [], []
    for i, (sid, scene) in enumerate(scenes):
        d = perturb_detections(scene, PerturbationSpec(args.noise, config.seed + i), t)
        rep = M.detection_sensitivity(model, scene, d, t)
        truth = scene.agent_positions(t)
        dets.append(d)
        truths.append(truth)
        g_gt.append(rep.g_gt)
        f = M.pi_weights(rep, args.scheme)
        for box in d:
            if box.agent_id not in truth:
                continue
            err = float(np.linalg.norm(box.center - truth[box.agent_id]))
            a = box.agent_id
            rows.append({"agent_id": f"{sid}/{a}", "metric": "center_error", "raw": err,
                         "sensitivity": float(rep.g[a]), "weight": float(f[a]),
                         "pi_value": float(f[a] * err), "bucket": None})
    edges = _edges(args.striate)
    g_all = {r["agent_id"]: r["sensitivity"] for r in rows}
    vals = {r["agent_id"]: r["raw"] for r in rows}
    striation = {}
    if rows:
        e = edges if edges is not None else M.quartile_edges(g_all.values())
        striation["center_error"] = M.striate(vals, g_all, e)
        for r in rows:
            r["bucket"] = M.bucket_index(r["sensitivity"], e)
    summary, curves = {}, {}
    for thr in args.thresholds:
        ap = M.average_precision(dets, truths, thr)
        pi_ap = M.pi_average_precision(dets, truths, thr, g_gt)
        summary[f"ap@{thr:g}"] = {"raw": ap, "pi": pi_ap}
        scaled = M._scaled_thresholds(truths, thr, g_gt)
        curves[f"AP@{thr:g}"] = M.pr_curve(dets, truths, thr)
        curves[f"PI-AP@{thr:g}"] = M.pr_curve(dets, truths, thr, scaled)
    report = M.MetricReport(summary, rows, striation, config.to_dict())
    return report, report.to_dict(), curves


def cmd_evaluate(args, config: RunConfig) -> int:
    model = _load_model(args.model)
    scenes = _load_scenes(_scene_files(args.scenes))
    _check_scenes(model.feature_set, scenes)
    if args.mode == "pred":
        report, data, curves = _eval_pred(model, scenes, args, config)
    else:
        report, data, curves = _eval_det(model, scenes, args, config)
    write_json(config.out / "report.json", data)
    _write_text(config.out / "report.csv",
                "# " + json.dumps(config.to_dict(), sort_keys=True) + "\n" + report.to_csv())
    if curves:
        rows = [(label, repr(float(r)), repr(float(p)))
                for label, (rec, prec) in curves.items() for r, p in zip(rec, prec)]
        _write_csv(config.out / "pr_curves.csv", ("curve", "recall", "precision"), rows, config)
    if args.figures:
        plots = _figures(config)
        if report.striation:
            plots.striation(report.striation, config.out / "striation.png")
        if curves:
            plots.pr_curves(curves, config.out / "pr_curves.png")
    for name, s in report.summary.items():
        log.info("%s: raw %.6g  pi %.6g", name, s["raw"], s["pi"])
    return EXIT_OK


# --- noise sweep ---------------------------------------------------------------------

def cmd_noise_sweep(args, config: RunConfig) -> int:
    model = _load_model(args.model)
    loaded = _load_scenes(_scene_files(args.scenes))
    _check_scenes(model.feature_set, loaded)
    scenes = [s for _, s in loaded]
    grid = args.grid
    if not grid or min(grid) < 0:
        raise InputError("noise grid must be non-empty and non-negative")
    try:
        points = M.noise_sweep(scenes, model, grid, args.trials, config.seed, args.t)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rows = [(repr(p.sigma), repr(p.mean), repr(p.ci_low), repr(p.ci_high), str(p.n))
            for p in points]
    _write_csv(config.out / "noise_curve.csv", ("sigma", "mean", "ci_low", "ci_high", "n"),
               rows, config)
    rho = M.sweep_spearman(points)
    _write_json(config.out / "noise_sweep.json",
                {"points": [p.__dict__ for p in points],
                 "spearman": None if np.isnan(rho) else rho}, config)
    if args.figures:
        _figures(config).noise_curve(points, config.out / "noise_curve.png")
    log.info("spearman(sigma, mean sensitivity) = %s", rho)
    return EXIT_OK


# --- reopt ---------------------------------------------------------------------------

def _reopt_one(job):
    scene, model_dict, with_pred, goal = job
    return reoptimize(scene, CostModel.from_dict(model_dict), with_pred, goal)


def cmd_reopt(args, config: RunConfig) -> int:
    model = _load_model(args.model)
    if model.feature_set != DRIVE6:
        raise InputError("reoptimization needs a drive6 model")
    scenes = _load_scenes(_scene_files(args.scenes))
    _check_scenes(model.feature_set, scenes)
    jobs = [(s, model.to_dict(), args.with_predictions, args.goal) for _, s in scenes]
    results = _map(_reopt_one, jobs, config.jobs)
    rows = []
    for (sid, scene), res in zip(scenes, results):
        _write_json(config.out / f"reopt_{sid}.json", {
            "scene": sid, "states": res.trajectory.states().tolist(),
            "controls": res.controls.tolist(), "stage1_objective": res.stage1_objective,
            "stage2_objective": res.stage2_objective, "max_x_error": res.max_x_error,
            "max_y_error": res.max_y_error, "converged": res.converged}, config)
        rows.append((sid, repr(res.max_x_error), repr(res.max_y_error)))
        if args.figures:
            _figures(config).reopt_trajectories(scene, {"reoptimized": res},
                                                config.out / f"reopt_{sid}.png")
    _write_csv(config.out / "reopt_summary.csv", ("scene_id", "max_x", "max_y"), rows, config)
    mx = float(np.mean([r.max_x_error for r in results]))
    my = float(np.mean([r.max_y_error for r in results]))
    _write_json(config.out / "reopt_summary.json",
                {"mean_max_x": mx, "mean_max_y": my, "n_scenes": len(results),
                 "all_converged": all(r.converged for r in results)}, config)
    log.info("mean max error: x %.4f m, y %.4f m", mx, my)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: logical cores)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--figures", action="store_true",
                   help="also render PNG figures next to the CSV/JSON output")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="planaware", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    scenes = sub.add_parser("scenes", help="synthetic scene generation")
    ssub = scenes.add_subparsers(dest="scenes_command", required=True)
    gen = ssub.add_parser("generate", parents=[common], help="generate scenes (one JSON per seed)")
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--feature-set", choices=(TOY4, DRIVE6), default=TOY4)
    gen.add_argument("--agents", type=int, help="agents per scene (default 1-4 at random)")
    gen.add_argument("--episode-length", type=int)
    gen.add_argument("--layout", choices=("crossing", "traffic"), help="driving agent layout")
    gen.add_argument("--spec", help="JSON file with ScenarioSpec fields")
    gen.add_argument("--model", help="cost model driving the expert")
    gen.add_argument("--noise-std", type=float, help="expert control noise")
    gen.add_argument("--no-expert", action="store_true", help="keep only the initial ego state")
    gen.set_defaults(func=cmd_scenes_generate)
    ep = ssub.add_parser("errant-pair", parents=[common],
                         help="head-on scene plus toward/away predictions with equal ADE/FDE")
    ep.add_argument("--ade", type=float, default=0.075)
    ep.add_argument("--gap", type=float, default=6.0)
    ep.add_argument("--steps", type=int, default=5)
    ep.add_argument("--sigma", type=float, default=0.5, help="RBF bandwidth of the written model")
    ep.set_defaults(func=cmd_scenes_errant_pair)

    fit = sub.add_parser("fit", parents=[common], help="learn cost weights from demonstrations")
    fit.add_argument("--scenes", nargs="+", required=True)
    fit.add_argument("--feature-set", choices=(TOY4, DRIVE6))
    fit.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    fit.add_argument("--max-iters", type=int, default=200)
    fit.add_argument("--window", type=int, default=5,
                     help="likelihood segment length in steps (0 = whole demonstration)")
    fit.add_argument("--sigma", type=float, help="RBF bandwidth")
    fit.add_argument("--planted", type=_floats, help="reference weights for the cosine report")
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", parents=[common], help="raw and planning-informed metrics")
    ev.add_argument("--mode", choices=("pred", "det"), required=True)
    ev.add_argument("--scenes", nargs="+", required=True)
    ev.add_argument("--model", required=True)
    ev.add_argument("--predictions", nargs="+",
                    help="prediction files (default: constant-velocity predictor)")
    ev.add_argument("--pred-horizon", type=int)
    ev.add_argument("--scheme", choices=[s.value for s in M.WeightingScheme], default="hinge")
    ev.add_argument("--striate", default="quartiles",
                    help="'quartiles' or comma-separated sensitivity edges")
    ev.add_argument("--sigma-nll", type=float, default=0.5)
    ev.add_argument("--noise", type=float, default=0.0, help="detection noise std [m]")
    ev.add_argument("--thresholds", type=_floats, default=[0.5, 1.0, 2.0, 4.0])
    ev.add_argument("--t", type=int, help="evaluation step within each scene (default: 1 for "
                    "the constant-velocity predictor, else the prediction file's step or 0)")
    ev.set_defaults(func=cmd_evaluate)

    ns = sub.add_parser("noise-sweep", parents=[common],
                        help="mean detection sensitivity against detection noise")
    ns.add_argument("--scenes", nargs="+", required=True)
    ns.add_argument("--model", required=True)
    ns.add_argument("--grid", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    ns.add_argument("--trials", type=int, default=300)
    ns.add_argument("--t", type=int, default=0)
    ns.set_defaults(func=cmd_noise_sweep)

    ro = sub.add_parser("reopt", parents=[common], help="two-stage plan reoptimization")
    ro.add_argument("--scenes", nargs="+", required=True)
    ro.add_argument("--model", required=True)
    ro.add_argument("--with-predictions", action="store_true",
                    help="keep the prediction term in the cost")
    ro.add_argument("--goal", choices=("scene", "final"), default="scene")
    ro.set_defaults(func=cmd_reopt)
    return parser


def _options(args) -> dict:
    skip = {"func", "seed", "jobs", "out", "figures", "verbose", "command"}
    opts = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        opts[k] = [str(x) for x in v] if isinstance(v, list) and k in ("scenes", "predictions") \
            else v
    opts["out"] = str(args.out)
    return opts


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command + (" " + args.scenes_command if args.command == "scenes" else "")
    try:
        if args.jobs < 1:
            raise InputError("--jobs must be >= 1")
        out = _prepare_out(args.out)
        config = RunConfig(command, args.seed, out, args.jobs, _options(args))
        return args.func(args, config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateHessianError, OptimizationError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
