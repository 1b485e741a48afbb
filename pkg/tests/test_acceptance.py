"""Acceptance criteria 1-10. Each test records one PASS/FAIL line (see conftest)."""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
from scipy.stats import norm

from helpers import close, fd, random_drive_frame, random_toy_frame
from planaware import cli
from planaware.cioc import Demonstration, FitOptions, assemble_demo, fit_theta, laplace_nll
from planaware.core import (Box, DetectionSet, Scene, Trajectory, dynamics_hessian,
                            linearize_dynamics, unicycle_step)
from planaware.cost import (DRIVE6, REFERENCE_THETA, TOY4, AgentFuture, CostModel,
                            detection_futures, grad_controls, grad_hess_controls,
                            grad_predictions, trajectory_cost)
from planaware.metrics import (SensitivityReport, WeightingScheme, average_precision,
                               noise_sweep, pi_average_precision, pi_metric, pi_weights,
                               prediction_metrics, prediction_sensitivity, sweep_spearman)
from planaware.planner import reoptimize
from planaware.sim import (PLANTED_TOY, ScenarioSpec, errant_predictions, far_agent_scenario,
                           generate_scenario, head_on_scenario, with_expert)

GRID = [0.0, 0.25, 0.5, 0.75, 1.0]


def _dyn_ok(rng, extended):
    n = 4 if extended else 3
    s = np.concatenate([rng.normal(0, 3, 2), [rng.uniform(-2.5, 2.5)],
                        [rng.uniform(0.5, 8.0)] if extended else []])
    u = rng.normal(0, 0.5, 2)
    dt = rng.uniform(0.1, 0.5)
    z = np.concatenate([s, u])

    def step(z):
        return unicycle_step(z[:n], z[n:], dt)

    def jac(z):
        return np.hstack(linearize_dynamics(z[:n], z[n:], dt))

    return (close(jac(z), fd(step, z), 1e-5)
            and close(dynamics_hessian(s, u, dt), fd(jac, z), 1e-4))


def _frame_ok(rng, i):
    model, window, U = (random_toy_frame if i % 2 == 0 else random_drive_frame)(rng)
    shape = U.shape
    g, H = grad_hess_controls(model, window, U)

    def cost_u(u):
        return trajectory_cost(model, window, u.reshape(shape))

    ok = close(g, fd(cost_u, U.ravel()), 1e-5)
    ok &= close(H, fd(lambda u: grad_controls(model, window, u.reshape(shape)), U.ravel()), 1e-4)

    # predicted waypoints and current positions
    grads = grad_predictions(model, window, U)
    for aid, af in window.agents.items():
        def cost_modes(x, aid=aid, af=af):
            return trajectory_cost(model, window.with_agents(
                {**window.agents, aid: AgentFuture(af.current, x, af.probs)}), U)

        def cost_cur(x, aid=aid, af=af):
            return trajectory_cost(model, window.with_agents(
                {**window.agents, aid: AgentFuture(x, af.modes, af.probs)}), U)

        ok &= close(grads[aid][1], fd(cost_modes, af.modes), 1e-5)
        ok &= close(grads[aid][0], fd(cost_cur, af.current), 1e-5)

    # detected positions: futures follow the detection at constant velocity
    detected = {a: af.current for a, af in window.agents.items()}
    vel = {a: rng.normal(0, 1.5, 2) for a in detected}
    steps = len(U) + model.horizon + 2
    det_win = detection_futures(window, detected, vel, steps)
    aid = next(iter(detected))
    cur, modes = grad_predictions(model, det_win, U)[aid]

    def cost_det(p):
        w = detection_futures(window, {**detected, aid: p}, vel, steps)
        return trajectory_cost(model, w, U)

    ok &= close(cur + modes.sum(axis=(0, 1)), fd(cost_det, detected[aid]), 1e-5)
    return bool(ok)


def test_criterion_01_gradients(record):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    n_frames = 500
    bad = [i for i in range(n_frames) if not _frame_ok(rng, i)]
    bad_dyn = [i for i in range(n_frames) if not _dyn_ok(rng, i % 2 == 1)]
    dt = time.perf_counter() - t0
    ok = not bad and not bad_dyn and dt < 30
    record(1, ok, f"{n_frames} cost frames, {n_frames} dynamics frames, "
                  f"{len(bad) + len(bad_dyn)} mismatches, {dt:.1f} s")
    assert not bad and not bad_dyn
    assert dt < 30


def test_criterion_02_quadratic_nll(record):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.05, 20.0)
        u = rng.normal(0, 2.0)
        # toy4 cost with only the control term: c = a (v^2 + omega^2), demo omega = 0
        model = CostModel(TOY4, [0.0, a, 0.0, 0.0])
        scene = Scene(1.0, 1, np.zeros(2), Trajectory(np.array([[0.0, 0.0], [u, 0.0]]), 1.0,
                                                      np.zeros(2)))
        demo = Demonstration(scene, np.array([[u, 0.0]]))
        got = laplace_nll(model, demo, eps=0.0)
        # exp(-a u^2) normalizes to N(0, 1/(2a)) in each control coordinate
        scale = 1.0 / math.sqrt(2.0 * a)
        want = -(norm.logpdf(u, scale=scale) + norm.logpdf(0.0, scale=scale))
        worst = max(worst, abs(got - want))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 1
    record(2, ok, f"100 quadratics, max |error| {worst:.2e}, {dt:.2f} s")
    assert worst <= 1e-9
    assert dt < 1


def _toy_demos(n):
    model = CostModel(TOY4, PLANTED_TOY, sigma=1.0, horizon=5)
    demos = []
    for seed in range(n):
        scene = with_expert(generate_scenario(ScenarioSpec(seed=seed)), model,
                            horizon=5, noise_std=0.05, seed=seed)
        demos.append(assemble_demo(scene))
    return demos


def test_criterion_03_planted_recovery(record):
    t0 = time.perf_counter()
    demos = _toy_demos(64)
    first = fit_theta(demos, TOY4, FitOptions(seed=0), sigma=1.0, planted=PLANTED_TOY)
    again = fit_theta(demos, TOY4, FitOptions(seed=0), sigma=1.0, planted=PLANTED_TOY)
    dt = time.perf_counter() - t0
    same = np.array_equal(first.theta_hat, again.theta_hat)
    cos = first.cosine_to_planted
    ok = cos >= 0.95 and same and dt < 300
    record(3, ok, f"64 rollouts, cosine {cos:.4f}, deterministic {same}, {dt:.1f} s")
    assert cos >= 0.95
    assert same
    assert dt < 300


def test_criterion_04_asymmetry(record):
    t0 = time.perf_counter()
    model = CostModel(TOY4, REFERENCE_THETA[TOY4], sigma=0.5)
    scene = head_on_scenario()
    toward, away = errant_predictions(scene, 0.075)
    mt, ma = prediction_metrics(toward, scene), prediction_metrics(away, scene)
    rt, ra = prediction_sensitivity(model, scene, toward), prediction_sensitivity(model, scene, away)
    ade_t, ade_a = mt["ade"]["agent0"], ma["ade"]["agent0"]
    fde_t, fde_a = mt["fde"]["agent0"], ma["fde"]["agent0"]
    eps = np.finfo(float).eps
    equal = (abs(ade_t - ade_a) <= 4 * eps * ade_a and abs(fde_t - fde_a) <= 4 * eps * fde_a
             and abs(ade_a - 0.075) <= 4 * eps and abs(fde_a - 0.15) <= 4 * eps)
    g_t, g_a = rt.g["agent0"], ra.g["agent0"]
    ratio = pi_metric(mt["ade"], rt, "hinge") / pi_metric(ma["ade"], ra, "hinge")
    dt = time.perf_counter() - t0
    ok = equal and g_t > g_a and ratio > 1.1 and dt < 10
    record(4, ok, f"ADE {ade_t:.17g}/{ade_a:.17g}, g {g_t:.4f} > {g_a:.4f}, "
                  f"HINGE piADE ratio {ratio:.3f}, {dt:.2f} s")
    assert equal
    assert g_t > g_a
    assert ratio > 1.1
    assert dt < 10


def test_criterion_05_far_agent(record):
    t0 = time.perf_counter()
    sigma = 0.5
    model = CostModel(TOY4, REFERENCE_THETA[TOY4], sigma=sigma)
    scene = far_agent_scenario(distance=8 * sigma)
    worst_g, worst_diff = 0.0, 0.0
    for pred in errant_predictions(scene, 0.075):
        rep = prediction_sensitivity(model, scene, pred)
        m = prediction_metrics(pred, scene)
        worst_g = max(worst_g, rep.g["agent0"])
        worst_diff = max(worst_diff, abs(pi_metric(m["ade"], rep, "hinge") - m["ade"]["agent0"]))
    dt = time.perf_counter() - t0
    ok = worst_g < 1e-6 and worst_diff <= 1e-12 and dt < 5
    record(5, ok, f"agent at {8 * sigma:g} m (8 sigma): g {worst_g:.1e}, "
                  f"|piADE - ADE| {worst_diff:.1e}, {dt:.2f} s")
    assert worst_g < 1e-6
    assert worst_diff <= 1e-12
    assert dt < 5


def test_criterion_06_noise_monotone(record):
    t0 = time.perf_counter()
    model = CostModel(DRIVE6, REFERENCE_THETA[DRIVE6])
    scenes = [with_expert(generate_scenario(ScenarioSpec.driving(
        s, episode_length=8, layout="traffic", n_agents=4)), model, horizon=None)
        for s in range(20)]
    points = noise_sweep(scenes, model, GRID, trials=300, seed=0)
    rho = sweep_spearman(points)
    dt = time.perf_counter() - t0
    ok = rho >= 0.9 and dt < 120
    means = ", ".join(f"{p.mean:.3f}" for p in points)
    record(6, ok, f"20 scenes x 300 trials, means [{means}], Spearman {rho:.3f}, {dt:.1f} s")
    assert rho >= 0.9
    assert dt < 120


def _random_frame(rng):
    n = int(rng.integers(0, 6))
    gt = {f"a{i}": rng.uniform(-10, 10, 2) for i in range(n)}
    boxes = []
    for aid, p in gt.items():
        if rng.uniform() < 0.8:
            boxes.append(Box(*(p + rng.normal(0, rng.uniform(0, 1.5), 2)), 1.8, 4.5, 0.0,
                             float(rng.uniform()), aid))
    for _ in range(int(rng.integers(0, 3))):
        boxes.append(Box(*rng.uniform(-10, 10, 2), 1.8, 4.5, 0.0, float(rng.uniform())))
    g = {a: (0.0 if rng.uniform() < 0.3 else float(rng.exponential(1.0))) for a in gt}
    return DetectionSet(boxes), gt, g


def test_criterion_07_pi_ap(record):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    violations = 0
    for _ in range(1000):
        frames = [_random_frame(rng) for _ in range(int(rng.integers(1, 4)))]
        dets, gts, gs = zip(*frames)
        thr = float(rng.choice([0.5, 1.0, 2.0, 4.0]))
        ap = average_precision(dets, gts, thr)
        pi = pi_average_precision(dets, gts, thr, gs)
        if math.isnan(ap):
            violations += not math.isnan(pi)
        elif pi > ap:
            violations += 1

    # errors only on zero-sensitivity agents: sensitive agents are detected exactly
    # and sit far from every other box
    gt = {"s0": np.array([0.0, 100.0]), "s1": np.array([20.0, 100.0]),
          "z0": np.array([0.0, 0.0]), "z1": np.array([3.0, 0.0]), "z2": np.array([6.0, 0.0])}
    g = {"s0": 2.0, "s1": 0.7, "z0": 0.0, "z1": 0.0, "z2": 0.0}
    boxes = DetectionSet([Box(0.0, 100.0, 1.8, 4.5, 0.0, 0.9, "s0"),
                          Box(20.0, 100.0, 1.8, 4.5, 0.0, 0.4, "s1"),
                          Box(0.3, 0.2, 1.8, 4.5, 0.0, 0.8, "z0"),
                          Box(4.2, 0.0, 1.8, 4.5, 0.0, 0.6, "z1"),
                          Box(9.0, 5.0, 1.8, 4.5, 0.0, 0.95)])
    eq = [(average_precision(boxes, gt, t), pi_average_precision(boxes, gt, t, g))
          for t in (0.5, 1.0, 2.0, 4.0)]
    equal = all(a == b for a, b in eq)

    hand_gt = {"a": np.zeros(2)}
    hand = DetectionSet([Box(0.3, 0.0, 1.8, 4.5, 0.0, 1.0, "a")])
    hand_ap = average_precision(hand, hand_gt, 0.5)
    hand_pi = pi_average_precision(hand, hand_gt, 0.5, {"a": 1.0})
    dt = time.perf_counter() - t0
    ok = violations == 0 and equal and hand_pi == 0.0 and hand_ap == 1.0 and dt < 30
    record(7, ok, f"1000 sets, {violations} violations; zero-g equality {equal}; "
                  f"hand case AP {hand_ap:g} PI-AP {hand_pi:g}, {dt:.1f} s")
    assert violations == 0
    assert equal
    assert hand_ap == 1.0 and hand_pi == 0.0
    assert dt < 30


def test_criterion_08_reoptimization(record):
    t0 = time.perf_counter()
    model = CostModel(DRIVE6, REFERENCE_THETA[DRIVE6])
    with_p, without = [], []
    for seed in range(20):
        scene = with_expert(generate_scenario(ScenarioSpec.driving(seed)), model, horizon=None)
        r = reoptimize(scene, model, include_prediction_term=True)
        r0 = reoptimize(scene, model, include_prediction_term=False)
        if scene.agents:
            with_p.append((r.max_x_error, r.max_y_error))
            without.append((r0.max_x_error, r0.max_y_error))
    dt = time.perf_counter() - t0
    mean_p, mean_0 = np.mean(with_p, axis=0), np.mean(without, axis=0)
    ok = bool(np.all(mean_p <= 0.05) and np.all(mean_p <= mean_0) and dt < 180)
    record(8, ok, f"{len(with_p)} scenes, mean max error x/y {mean_p[0]:.2e}/{mean_p[1]:.2e} m "
                  f"(without prediction term {mean_0[0]:.3f}/{mean_0[1]:.3f} m), {dt:.1f} s")
    assert np.all(mean_p <= 0.05)
    assert np.all(mean_p <= mean_0)
    assert dt < 180


def test_criterion_09_weighting_identities(record):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    exact, worst = True, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        ids = [f"a{i}" for i in range(n)]
        vals = dict(zip(ids, rng.exponential(2.0, n).tolist()))
        g = rng.exponential(1.0, n) * (rng.uniform(size=n) < 0.8)
        if not g.any():
            g[0] = 0.5
        rep = SensitivityReport(dict(zip(ids, g.tolist())), {})
        exact &= pi_metric(vals, rep, WeightingScheme.UNIFORM) == sum(vals.values()) / n
        f = pi_weights(rep, WeightingScheme.NORMALIZE)
        worst = max(worst, abs(sum(v - 1.0 for v in f.values()) - 1.0))
    dt = time.perf_counter() - t0
    ok = exact and worst <= 1e-12 and dt < 1
    record(9, ok, f"UNIFORM exact {exact}, NORMALIZE max |sum(f-1) - 1| {worst:.1e}, {dt:.2f} s")
    assert exact
    assert worst <= 1e-12
    assert dt < 1


def _digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _pipelines(tmp: Path):
    toy, drive, pair = tmp / "toy", tmp / "drive", tmp / "pair"
    common = ["--figures", "--seed", "3"]
    return [
        ["scenes", "generate", "--count", "3", "--episode-length", "12", "--jobs", "2",
         "--out", str(toy)] + common,
        ["scenes", "generate", "--count", "2", "--feature-set", "drive6", "--agents", "2",
         "--episode-length", "8", "--layout", "traffic", "--out", str(drive)] + common,
        ["scenes", "errant-pair", "--out", str(pair)] + common,
        ["fit", "--scenes", str(toy), "--out", str(tmp / "fit")] + common,
        ["evaluate", "--mode", "pred", "--scenes", str(pair / "scene_head_on.json"),
         "--model", str(pair / "model_toy.json"), "--predictions",
         str(pair / "pred_toward.json"), "--out", str(tmp / "eval_pair")] + common,
        ["evaluate", "--mode", "pred", "--scenes", str(toy), "--model",
         str(tmp / "fit" / "model.json"), "--out", str(tmp / "eval_cv")] + common,
        ["evaluate", "--mode", "det", "--scenes", str(drive), "--model",
         str(tmp / "model_drive.json"), "--noise", "0.5", "--out", str(tmp / "eval_det")]
        + common,
        ["noise-sweep", "--scenes", str(drive), "--model", str(tmp / "model_drive.json"),
         "--trials", "10", "--out", str(tmp / "sweep")] + common,
        ["reopt", "--scenes", str(drive), "--model", str(tmp / "model_drive.json"),
         "--with-predictions", "--jobs", "2", "--out", str(tmp / "reopt")] + common,
    ]


def test_criterion_10_cli_determinism(record, tmp_path):
    from planaware.cost import save_model
    save_model(CostModel(DRIVE6, REFERENCE_THETA[DRIVE6]), tmp_path / "model_drive.json")
    t0 = time.perf_counter()
    codes, digests = [], []
    for _ in range(2):
        for argv in _pipelines(tmp_path):
            codes.append(cli.main(argv))
        digests.append(_digest(tmp_path))
    dt = time.perf_counter() - t0
    same = digests[0] == digests[1]
    n_files = len(digests[0])
    ok = same and all(c == 0 for c in codes) and dt < 60
    record(10, ok, f"{len(codes) // 2} pipelines run twice, {n_files} files, "
                   f"byte-identical {same}, {dt:.1f} s")
    assert all(c == 0 for c in codes)
    assert same
    assert dt < 60
