import numpy as np
import pytest

from planaware.core import Lane, rollout
from planaware.cost import DRIVE6, REFERENCE_THETA, TOY4, CostModel, Window, trajectory_cost
from planaware.planner import (closest_expected_approach, initial_plan, invert_positions,
                               optimize_controls, reopt_error, reoptimize)
from planaware.sim import ScenarioSpec, generate_scenario, with_expert

MODEL = CostModel(DRIVE6, REFERENCE_THETA[DRIVE6])


def test_optimize_controls_quadratic():
    m = CostModel(TOY4, [1.0, 1.0, 0.0, 0.0])
    w = Window([1.0, 0.0, np.pi], 0.5)
    res = optimize_controls(m, w, np.zeros((1, 2)))
    # one step: minimize (1 - v/2)^2 + v^2 + omega^2 -> v = 0.4
    assert res.converged
    assert np.allclose(res.controls, [[0.4, 0.0]], atol=1e-8)


def test_optimize_never_increases_cost():
    rng = np.random.default_rng(0)
    sc = generate_scenario(ScenarioSpec.driving(2, episode_length=6))
    from planaware.cost import window_from_scene
    w = window_from_scene(sc, 0)
    init = rng.normal(0, 0.5, (6, 2))
    res = optimize_controls(MODEL, w, init, max_iter=20)
    assert res.objective <= trajectory_cost(MODEL, w, init)


def test_invert_positions_roundtrip():
    s0 = np.array([0.0, 0.0, 0.1, 3.0])
    U = np.array([[0.5, 0.1], [-0.2, 0.0], [0.3, -0.2], [0.0, 0.0]])
    S = rollout(s0, U, 0.5)
    U2 = invert_positions(s0, S[:, :2], 0.5)
    assert np.allclose(rollout(s0, U2, 0.5)[:, :2], S[:, :2])


def test_initial_plan_defaults_to_zero_without_lanes():
    w = Window([0.0, 0.0, 0.0], 0.5)
    assert np.array_equal(initial_plan(CostModel(TOY4, [1.0] * 4), w, 3), np.zeros((3, 2)))


def test_reopt_error():
    from planaware.core import Trajectory
    a = Trajectory([[0, 0], [1, 1]], 0.5)
    b = Trajectory([[0, 0.5], [3, 1]], 0.5)
    assert reopt_error(a, b) == (2.0, 0.5)
    with pytest.raises(ValueError):
        reopt_error(Trajectory([[0, 0]], 0.5), b)


def test_reoptimize_recovers_expert():
    sc = with_expert(generate_scenario(ScenarioSpec.driving(1, episode_length=8)), MODEL,
                     horizon=None)
    res = reoptimize(sc, MODEL)
    assert max(res.max_x_error, res.max_y_error) < 0.05
    assert res.stage2_objective <= res.stage1_objective


def test_reoptimize_checks_inputs():
    sc = generate_scenario(ScenarioSpec(seed=0))
    with pytest.raises(ValueError):
        reoptimize(sc, CostModel(TOY4, [1.0] * 4))


def test_closest_expected_approach():
    lane = Lane([[0, 0], [50, 0]])
    from planaware.cost import AgentFuture
    af = AgentFuture([10.0, 3.0], np.array([[[10.0, 3.0]] * 3]), [1.0])
    w = Window([0.0, 0.0, 0.0, 5.0], 0.5, [20.0, 0.0], [lane], {"a": af})
    U = np.zeros((4, 2))
    # ego reaches x = 10 at step 4: closest expected approach 3 m
    assert closest_expected_approach(MODEL, w, U) == pytest.approx(3.0)
