import numpy as np
import pytest

from planaware.cost import DRIVE6, REFERENCE_THETA, TOY4, CostModel
from planaware.metrics import ade, fde
from planaware.sim import (PLANTED_TOY, PerturbationSpec, ScenarioSpec, errant_predictions,
                           expert_rollout, far_agent_scenario, generate_scenario,
                           head_on_scenario, make_errant_prediction_pair, perturb_detections,
                           with_expert)


def test_generate_is_deterministic():
    from planaware.core import scene_to_dict
    a = scene_to_dict(generate_scenario(ScenarioSpec(seed=5)))
    b = scene_to_dict(generate_scenario(ScenarioSpec(seed=5)))
    assert a == b
    assert a != scene_to_dict(generate_scenario(ScenarioSpec(seed=6)))


@pytest.mark.parametrize("layout", ["crossing", "traffic"])
def test_driving_scene_shape(layout):
    sc = generate_scenario(ScenarioSpec.driving(3, n_agents=2, layout=layout))
    assert sc.dynamics == "extended"
    assert len(sc.lanes) >= 1 and len(sc.agents) == 2
    assert sc.meta["spec"]["layout"] == layout


@pytest.mark.parametrize("kw", [dict(radius=0.0), dict(n_agents=-1), dict(dynamics="car"),
                                dict(layout="x"), dict(speed_range=(2.0, 1.0))])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ScenarioSpec(**kw)


def test_expert_reaches_goal_without_agents():
    model = CostModel(TOY4, PLANTED_TOY, horizon=5)
    for seed in range(64):
        sc = generate_scenario(ScenarioSpec(seed=seed, n_agents=0))
        traj, U = expert_rollout(sc, model)
        assert np.linalg.norm(traj.positions[-1] - sc.goal) < 0.1, seed
        assert len(U) == len(traj) - 1


def test_receding_expert_from_aligned_start():
    from planaware.core import Scene, Trajectory
    sc = Scene(0.5, 5, [0.0, 0.0], Trajectory([[2.0, 0.0]], 0.5, [np.pi]))
    traj, _ = expert_rollout(sc, CostModel(TOY4, PLANTED_TOY, horizon=5), horizon=5, steps=40)
    assert np.linalg.norm(traj.positions[-1]) < 0.1


def test_expert_noise_is_seeded():
    sc = generate_scenario(ScenarioSpec(seed=1, episode_length=6))
    m = CostModel(TOY4, PLANTED_TOY, horizon=5)
    a = expert_rollout(sc, m, noise_std=0.1, seed=3)[1]
    b = expert_rollout(sc, m, noise_std=0.1, seed=3)[1]
    c = expert_rollout(sc, m, noise_std=0.1, seed=4)[1]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_with_expert_records_model():
    sc = generate_scenario(ScenarioSpec.driving(0, episode_length=4))
    m = CostModel(DRIVE6, REFERENCE_THETA[DRIVE6])
    out = with_expert(sc, m, horizon=None)
    assert out.n_steps == 4
    assert out.meta["expert"]["model"]["theta"] == list(REFERENCE_THETA[DRIVE6])


def test_perturbation_scales_common_noise():
    sc = head_on_scenario()
    d1 = perturb_detections(sc, PerturbationSpec(1.0, seed=9))
    d2 = perturb_detections(sc, PerturbationSpec(2.0, seed=9))
    true = sc.agents["agent0"].positions[0]
    assert np.allclose(2 * (d1.boxes[0].center - true), d2.boxes[0].center - true)
    d0 = perturb_detections(sc, PerturbationSpec(0.0, seed=9))
    assert np.array_equal(d0.boxes[0].center, true)
    with pytest.raises(ValueError):
        PerturbationSpec(-1.0)


@pytest.mark.parametrize("T", [1, 2, 6])
def test_errant_pair_equal_metrics(T):
    rng = np.random.default_rng(T)
    gt = rng.normal(size=(T, 2)) * 3
    toward, away = make_errant_prediction_pair(gt, [10.0, 10.0], 0.2)
    assert ade(toward, gt) == pytest.approx(ade(away, gt), abs=1e-15)
    assert fde(toward, gt) == pytest.approx(fde(away, gt), abs=1e-15)
    if T > 1:
        assert ade(toward, gt) == pytest.approx(0.2, abs=1e-15)
    assert fde(toward, gt) == pytest.approx(0.4, abs=1e-15)
    # the toward prediction ends closer to the ego
    ego = np.array([10.0, 10.0])
    assert np.linalg.norm(toward[-1] - ego) < np.linalg.norm(away[-1] - ego)


def test_errant_pair_rejects():
    with pytest.raises(ValueError):
        make_errant_prediction_pair(np.zeros((2, 2)), [0.0, 0.0], 0.1)
    with pytest.raises(ValueError):
        make_errant_prediction_pair(np.ones((2, 2)), [0.0, 0.0], 0.0)


def test_head_on_and_far_agent_scenes():
    sc = head_on_scenario(gap=6.0, steps=5)
    assert np.allclose(sc.ego.positions[0], [-3.0, 0.0])
    assert len(sc.agents["agent0"]) == 7
    toward, away = errant_predictions(sc)
    assert toward.horizon == sc.horizon + 1
    far = far_agent_scenario(distance=4.0)
    assert np.all(far.agents["agent0"].positions[:, 1] == 4.0)
