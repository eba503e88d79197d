import numpy as np
import pytest

from latentdyn.core import ContractError
from latentdyn.planner import (
    PlanConfig,
    action_distribution,
    plan,
    run_planning_eval,
    summary_stats,
)
from latentdyn.predictor import Method
from latentdyn.retrieval import TransitionRef
from latentdyn.synthworld import SynthConfig, generate

from conftest import chain_dataset, random_dataset


def line_dataset(offset, action, n_actions, steps=6):
    xs = np.linspace(0.0, 1.0, steps + 1)
    states = np.stack([xs + offset[0], np.full_like(xs, offset[1])], axis=1)
    return states, np.full(steps, action, dtype=np.uint32)


class TestActionDistribution:
    def test_unanimous(self):
        ds = chain_dataset(
            [np.zeros((7, 3))], [np.full(6, 2, dtype=np.uint32)], n_actions=5
        )
        refs = [TransitionRef(0, i, 0.0) for i in range(3)]
        probs = action_distribution(refs, ds)
        assert np.array_equal(probs, [0, 0, 1, 0, 0])

    def test_counting(self):
        ds = chain_dataset(
            [np.zeros((4, 2))], [np.array([0, 0, 1])], n_actions=2
        )
        refs = [TransitionRef(0, 0, 0.0), TransitionRef(0, 1, 0.0),
                TransitionRef(0, 2, 0.0)]
        probs = action_distribution(refs, ds)
        assert np.allclose(probs, [2 / 3, 1 / 3])

    def test_counting_oracle_and_order_invariance(self, rng):
        ds = random_dataset(rng, n_traj=3, length=10, d=3, n_actions=4)
        refs = [
            TransitionRef(int(rng.integers(0, 3)), int(rng.integers(0, 10)), 0.0)
            for _ in range(12)
        ]
        probs = action_distribution(refs, ds)
        counts = np.zeros(4)
        for ref in refs:
            counts[int(ds.actions[ds.row(ref.trajectory_id, ref.index)])] += 1
        assert np.allclose(probs, counts / counts.sum())
        assert probs.sum() == pytest.approx(1.0)
        shuffled = list(refs)
        rng.shuffle(shuffled)
        assert np.array_equal(action_distribution(shuffled, ds), probs)

    def test_empty_batch(self, small_ds):
        with pytest.raises(ContractError):
            action_distribution([], small_ds)


class TestPlan:
    def test_forced_mode_single_action(self):
        states, acts = line_dataset((0.0, 0.0), action=1, n_actions=3)
        ds = chain_dataset([states], [acts], n_actions=3)
        cfg = PlanConfig(horizon=5, episodes=1, seed=0)
        actions = plan(
            ds, Method.replay_l2(3), ds.dist_at(0, 0),
            ds.z[0].astype(np.float64), cfg, np.random.default_rng(0),
        )
        assert actions == [1] * 5

    def test_deterministic(self, rng):
        ds = random_dataset(rng, n_traj=4, length=12, d=4, n_actions=3)
        cfg = PlanConfig(horizon=6, episodes=1, seed=0)
        a = plan(ds, Method.rollout(), ds.dist_at(0, 0),
                 ds.z[0].astype(np.float64), cfg, np.random.default_rng(5))
        b = plan(ds, Method.rollout(), ds.dist_at(0, 0),
                 ds.z[0].astype(np.float64), cfg, np.random.default_rng(5))
        assert a == b

    def test_follows_nearer_cluster(self):
        near_states, near_acts = line_dataset((0.0, 0.0), action=2, n_actions=4)
        far_states, far_acts = line_dataset((50.0, 50.0), action=3, n_actions=4)
        ds = chain_dataset([near_states, far_states], [near_acts, far_acts],
                           n_actions=4)
        cfg = PlanConfig(horizon=4, episodes=1, seed=0)
        actions = plan(
            ds, Method.replay_l2(2), ds.dist_at(0, 0),
            ds.z[0].astype(np.float64), cfg, np.random.default_rng(1),
        )
        assert actions == [2] * 4

    def test_kl_point_mass_actions(self, rng):
        ds = random_dataset(rng, n_traj=3, length=10, d=4, n_actions=3)
        cfg = PlanConfig(horizon=3, episodes=1, seed=0)
        actions = plan(ds, Method.replay_kl(), ds.dist_at(1, 2),
                       ds.z[ds.row(1, 2)].astype(np.float64), cfg,
                       np.random.default_rng(2))
        assert len(actions) == 3
        assert all(0 <= a < 3 for a in actions)


class TestSummaryStats:
    def test_ci_hand_computed(self):
        stats = summary_stats(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        assert stats["mean"] == 3.0
        assert stats["std"] == pytest.approx(1.5811388300841898, abs=1e-12)
        half = 1.96 * 1.5811388300841898 / np.sqrt(5)
        assert stats["ci_low"] == pytest.approx(3.0 - half, abs=1e-12)
        assert stats["ci_high"] == pytest.approx(3.0 + half, abs=1e-12)

    def test_ci_contains_mean(self, rng):
        for _ in range(10):
            r = rng.normal(size=17)
            stats = summary_stats(r)
            assert stats["ci_low"] <= stats["mean"] <= stats["ci_high"]


class TestPlanningEval:
    def test_small_run_structure(self):
        cfg = SynthConfig(seed=2, accel=0.0008, v_max=0.006, noise=0.0012)
        ds, _ = generate(cfg, 20, 40, policy="scripted", episodes_seed=8)
        pc = PlanConfig(horizon=10, episodes=3, seed=1)
        result = run_planning_eval(cfg, ds, Method.replay_kl(), pc)
        assert result.returns.shape == (3,)
        assert result.random_returns.shape == (3,)
        summary = result.summary()
        assert {"mean", "std", "ci_low", "ci_high", "random"} <= set(summary)

    def test_same_seeds_reproduce(self):
        cfg = SynthConfig(seed=2, accel=0.0008, v_max=0.006, noise=0.0012)
        ds, _ = generate(cfg, 10, 30, policy="scripted", episodes_seed=8)
        pc = PlanConfig(horizon=8, episodes=2, seed=6)
        a = run_planning_eval(cfg, ds, Method.replay_l2(4), pc)
        b = run_planning_eval(cfg, ds, Method.replay_l2(4), pc)
        assert np.array_equal(a.returns, b.returns)
        assert np.array_equal(a.random_returns, b.random_returns)

    def test_incompatible_env_rejected(self, rng):
        ds = random_dataset(rng, n_traj=2, length=8, d=4, n_actions=3)
        cfg = SynthConfig(seed=0)  # d=16 != 4
        with pytest.raises(ContractError):
            run_planning_eval(cfg, ds, Method.rollout(),
                              PlanConfig(horizon=2, episodes=1, seed=0))
