import numpy as np
import pytest

from latentdyn.core import ContractError, DiagGaussian, SIGMA_FLOOR
from latentdyn.predictor import (
    Method,
    evaluate_long_horizon,
    evaluate_one_step,
    predict_step,
    rollout,
    sample_starts,
)
from latentdyn.retrieval import EmptyRetrievalError

from conftest import chain_dataset, random_dataset


class TestMethod:
    def test_kinds(self):
        assert Method.rollout().kind == "rollout"
        assert Method.replay_l2(4).k == 4
        assert Method.replay_kl().kind == "kl"

    def test_rejects_bad_k(self):
        with pytest.raises(ContractError):
            Method("l2", k=0)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ContractError):
            Method("hnsw")


class TestPredictStep:
    def test_kl_self_retrieval_adopts_stored_successor(self, rng):
        ds = random_dataset(rng, n_traj=4, length=10, d=5, n_actions=3)
        t, i = 2, 4
        step = predict_step(
            ds, Method.replay_kl(), None, ds.dist_at(t, i), None,
            np.random.default_rng(0),
        )
        assert step.dist == ds.dist_next_at(t, i)
        assert step.retrieved[0].trajectory_id == t
        assert step.retrieved[0].index == i

    def test_rollout_single_trajectory_collapses_sigma(self, rng):
        ds = random_dataset(rng, n_traj=1, length=10, d=4, n_actions=2)
        step = predict_step(
            ds, Method.rollout(), rng.normal(size=4), None, None,
            np.random.default_rng(0),
        )
        assert np.all(step.dist.sigma == SIGMA_FLOOR)
        assert len(step.retrieved) == 1

    def test_l2_k4_hand_average(self):
        # 8 stored transitions on a line; query at the origin; the 4 nearest
        # have successors 1, 2, 3, 4 on the x axis -> mean (2.5, 0)
        states = np.array(
            [[0.1, 0], [1, 0], [0.2, 0], [2, 0], [0.3, 0], [3, 0], [0.4, 0],
             [4, 0], [50, 50]],
        )
        ds = chain_dataset([states], [np.zeros(8, dtype=np.uint32)], n_actions=1)
        step = predict_step(
            ds, Method.replay_l2(4), np.zeros(2), None, None,
            np.random.default_rng(0),
        )
        assert np.array_equal(step.dist.mu, [2.5, 0.0])
        got_rows = sorted(
            ds.row(r.trajectory_id, r.index) for r in step.retrieved
        )
        assert got_rows == [0, 2, 4, 6]

    def test_action_out_of_range(self, small_ds):
        with pytest.raises(ContractError):
            predict_step(
                small_ds, Method.rollout(), np.zeros(small_ds.d), None, 99,
                np.random.default_rng(0),
            )

    def test_mean_mode_uses_mu(self, rng):
        ds = random_dataset(rng, n_traj=3, length=8, d=4, n_actions=2)
        step = predict_step(
            ds, Method.replay_l2(4), rng.normal(size=4), None, None,
            np.random.default_rng(0), use_mean=True,
        )
        assert np.array_equal(step.z_hat, step.dist.mu)

    def test_random_baseline_uniform_pick(self, rng):
        ds = random_dataset(rng, n_traj=3, length=8, d=4, n_actions=2)
        step = predict_step(
            ds, Method.random_baseline(), None, None, None,
            np.random.default_rng(0),
        )
        t, i = step.retrieved[0].trajectory_id, step.retrieved[0].index
        assert step.dist == ds.dist_next_at(t, i)


class TestRollout:
    def test_horizon_one_equals_predict_step(self, rng):
        ds = random_dataset(rng, n_traj=4, length=10, d=4, n_actions=3)
        z0 = rng.normal(size=4)
        d0 = DiagGaussian(rng.normal(size=4), rng.uniform(0.1, 1.0, 4))
        trace = rollout(ds, Method.replay_l2(3), z0, d0, [None],
                        np.random.default_rng(7))
        step = predict_step(ds, Method.replay_l2(3), z0, d0, None,
                            np.random.default_rng(7))
        assert trace.steps[0].dist == step.dist
        assert np.array_equal(trace.steps[0].z_hat, step.z_hat)

    def test_kl_thread_following(self, rng):
        ds = random_dataset(rng, n_traj=3, length=12, d=4, n_actions=3)
        t, i = 1, 2
        trace = rollout(
            ds, Method.replay_kl(), ds.z[ds.row(t, i)].astype(np.float64),
            ds.dist_at(t, i), [None] * 3, np.random.default_rng(0),
        )
        for j, step in enumerate(trace.steps):
            assert step.dist == ds.dist_at(t, i + j + 1)

    def test_bit_identical_given_seed(self, rng):
        ds = random_dataset(rng, n_traj=4, length=10, d=4, n_actions=3)
        z0 = rng.normal(size=4)
        d0 = ds.dist_at(0, 0)
        a = rollout(ds, Method.rollout(), z0, d0, [None, 1, None],
                    np.random.default_rng(3))
        b = rollout(ds, Method.rollout(), z0, d0, [None, 1, None],
                    np.random.default_rng(3))
        for x, y in zip(a.steps, b.steps):
            assert np.array_equal(x.z_hat, y.z_hat)
            assert x.dist == y.dist
            assert x.retrieved == y.retrieved

    def test_trace_chaining_reproducible_from_rng_state(self, rng):
        # the recorded dist of each step is the distribution its z_hat was
        # sampled from: replaying the rng state reproduces z_hat exactly
        ds = random_dataset(rng, n_traj=4, length=10, d=4, n_actions=3)
        z0 = rng.normal(size=4)
        d0 = ds.dist_at(0, 0)
        gen = np.random.default_rng(11)
        states = []
        probe = np.random.default_rng(11)
        trace_steps = []
        z, dist = z0, d0
        for _ in range(4):
            states.append(probe.bit_generator.state)
            step = predict_step(ds, Method.replay_l2(3), z, dist, None, probe)
            trace_steps.append(step)
            z, dist = step.z_hat, step.dist
        for state, step in zip(states, trace_steps):
            replay = np.random.default_rng(0)
            replay.bit_generator.state = state
            again = step.dist.mu + step.dist.sigma * replay.standard_normal(4)
            assert np.array_equal(again, step.z_hat)

    def test_mask_propagation(self, rng):
        ds = random_dataset(rng, n_traj=5, length=15, d=4, n_actions=3)
        trace = rollout(
            ds, Method.replay_l2(4), rng.normal(size=4), ds.dist_at(0, 0),
            [1, 1, 1], np.random.default_rng(0),
        )
        for step in trace.steps:
            for ref in step.retrieved:
                assert int(ds.actions[ds.row(ref.trajectory_id, ref.index)]) == 1

    def test_error_tagged_with_step(self):
        ds = chain_dataset(
            [np.array([[0.0, 0], [1, 0], [2, 0]])],
            [np.array([0, 0])],
            n_actions=3,
        )
        with pytest.raises(EmptyRetrievalError) as exc:
            rollout(ds, Method.rollout(), np.zeros(2), ds.dist_at(0, 0),
                    [0, 2], np.random.default_rng(0))
        assert exc.value.step == 1

    def test_method_agnostic_shape(self, rng):
        ds = random_dataset(rng, n_traj=4, length=10, d=4, n_actions=3)
        z0 = rng.normal(size=4)
        d0 = ds.dist_at(0, 0)
        for m in (Method.rollout(), Method.replay_l2(3), Method.replay_kl()):
            trace = rollout(ds, m, z0, d0, [None] * 5, np.random.default_rng(0))
            assert trace.horizon == 5
            assert len(trace.steps) == 5
            assert all(s.z_hat.shape == (4,) for s in trace.steps)


class TestEvaluate:
    def test_self_dataset_kl_near_zero(self, rng):
        ds = random_dataset(rng, n_traj=4, length=12, d=4, n_actions=3)
        series = evaluate_one_step(
            ds, Method.replay_kl(), ds, n_starts=6, horizon=4,
            conditioned=False, rng=np.random.default_rng(0),
        )
        assert np.all(series.kl_mean < 1e-9)

    def test_series_shape(self, rng):
        ds = random_dataset(rng, n_traj=4, length=30, d=4, n_actions=3)
        test = random_dataset(rng, n_traj=2, length=30, d=4, n_actions=3)
        series = evaluate_one_step(
            ds, Method.rollout(), test, n_starts=20, horizon=20,
            conditioned=True, rng=np.random.default_rng(0),
        )
        assert series.kl_mean.shape == (20,)
        assert series.kl_var.shape == (20,)
        assert series.n_starts == 20

    def test_long_horizon_h1_equals_one_step(self, rng):
        ds = random_dataset(rng, n_traj=4, length=12, d=4, n_actions=3)
        test = random_dataset(rng, n_traj=3, length=12, d=4, n_actions=3)
        for conditioned in (False, True):
            a = evaluate_one_step(ds, Method.replay_l2(4), test, 8, 1,
                                  conditioned, np.random.default_rng(4))
            b = evaluate_long_horizon(ds, Method.replay_l2(4), test, 8, 1,
                                      conditioned, np.random.default_rng(4))
            assert np.array_equal(a.kl_mean, b.kl_mean)
            assert np.array_equal(a.kl_var, b.kl_var)

    def test_horizon_longer_than_trajectories(self, rng):
        ds = random_dataset(rng, n_traj=3, length=5, d=4, n_actions=3)
        with pytest.raises(ContractError):
            sample_starts(ds, 4, horizon=9, rng=np.random.default_rng(0))

    def test_matches_scripted_reference(self, rng):
        # independent reimplementation of the one-step protocol on a tiny set
        ds = random_dataset(rng, n_traj=3, length=10, d=4, n_actions=3)
        test = random_dataset(rng, n_traj=3, length=10, d=4, n_actions=3)
        n_starts, horizon, seed = 4, 3, 21
        series = evaluate_one_step(
            ds, Method.replay_kl(), test, n_starts, horizon, False,
            np.random.default_rng(seed),
        )

        ref_rng = np.random.default_rng(seed)
        candidates = [
            (t, i)
            for t in range(test.n_trajectories)
            for i in range(test.trajectory_length(t) - horizon + 1)
        ]
        starts = [candidates[int(p)] for p in
                  ref_rng.integers(0, len(candidates), size=n_starts)]
        ref_rng.integers(0, 2**63 - 1, size=n_starts)  # per-start streams
        from latentdyn.core import kl_divergence
        from latentdyn.retrieval import search_kl
        kls = np.empty((n_starts, horizon))
        for s, (t, i0) in enumerate(starts):
            for j in range(horizon):
                q = test.dist_at(t, i0 + j)
                ref = search_kl(ds, q)
                pred = ds.dist_next_at(ref.trajectory_id, ref.index)
                true = test.dist_next_at(t, i0 + j)
                kls[s, j] = kl_divergence(pred, true)
        assert np.allclose(series.kl_mean, kls.mean(axis=0), atol=1e-12)
        assert np.allclose(series.kl_var, kls.var(axis=0), atol=1e-12)

    def test_masked_jump_conditioning_hurts(self):
        # two distant threads; test latents sit on thread A but carry thread
        # B's action, so conditioning forces retrieval onto the far thread
        steps = 8
        xs = np.linspace(0.0, 1.0, steps + 1)
        thread_a = np.stack([xs, np.zeros_like(xs)], axis=1)
        thread_b = thread_a + 40.0
        ds = chain_dataset(
            [thread_a, thread_b],
            [np.zeros(steps, dtype=np.uint32), np.ones(steps, dtype=np.uint32)],
            n_actions=2,
        )
        test = chain_dataset(
            [thread_a + 0.01], [np.ones(steps, dtype=np.uint32)], n_actions=2
        )
        kw = dict(n_starts=5, horizon=4)
        free = evaluate_long_horizon(ds, Method.replay_kl(), test,
                                     conditioned=False,
                                     rng=np.random.default_rng(5), **kw)
        forced = evaluate_long_horizon(ds, Method.replay_kl(), test,
                                       conditioned=True,
                                       rng=np.random.default_rng(5), **kw)
        assert np.all(forced.kl_mean >= free.kl_mean)
        assert forced.kl_mean.mean() > 10 * max(free.kl_mean.mean(), 1e-9)

    def test_incompatible_datasets_rejected(self, rng):
        ds = random_dataset(rng, n_traj=2, length=6, d=4, n_actions=3)
        test = random_dataset(rng, n_traj=2, length=6, d=5, n_actions=3)
        with pytest.raises(ContractError):
            evaluate_one_step(ds, Method.rollout(), test, 2, 2, False,
                              np.random.default_rng(0))
