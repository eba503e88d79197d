import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentdyn.core import (
    SIGMA_FLOOR,
    ContractError,
    DiagGaussian,
    EmptyBatchError,
    fit_gaussian,
    kl_divergence,
    sample,
)

from conftest import random_dataset


def mc_kl(p: DiagGaussian, q: DiagGaussian, n: int, seed: int) -> float:
    """Monte-Carlo estimate of E_p[ln p(X) - ln q(X)]; the sampling oracle
    the closed form is checked against."""
    rng = np.random.default_rng(seed)
    x = p.mu + p.sigma * rng.standard_normal((n, p.d))
    def logpdf(mu, sigma):
        return -0.5 * np.sum(
            ((x - mu) / sigma) ** 2 + np.log(2.0 * np.pi * sigma**2), axis=1
        )
    return float(np.mean(logpdf(p.mu, p.sigma) - logpdf(q.mu, q.sigma)))


class TestDiagGaussian:
    def test_floors_sigma(self):
        g = DiagGaussian([0.0, 1.0], [0.5, 0.0])
        assert g.sigma[0] == 0.5
        assert g.sigma[1] == SIGMA_FLOOR

    def test_rejects_length_mismatch(self):
        with pytest.raises(ContractError):
            DiagGaussian([0.0, 1.0], [1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ContractError):
            DiagGaussian([np.nan], [1.0])
        with pytest.raises(ContractError):
            DiagGaussian([0.0], [np.inf])

    def test_equality_is_componentwise(self):
        a = DiagGaussian([1.0, 2.0], [0.3, 0.4])
        b = DiagGaussian([1.0, 2.0], [0.3, 0.4])
        c = DiagGaussian([1.0, 2.1], [0.3, 0.4])
        assert a == b
        assert a != c


class TestKlDivergence:
    def test_identity_is_zero(self):
        g = DiagGaussian(np.zeros(4), np.ones(4))
        assert kl_divergence(g, g) == 0.0

    def test_hand_evaluated_1d(self):
        # ln 2 + (1 + 1) / 8 - 1/2
        p = DiagGaussian([0.0], [1.0])
        q = DiagGaussian([1.0], [2.0])
        assert kl_divergence(p, q) == pytest.approx(0.4431471805599453, abs=1e-12)

    def test_asymmetry_witness(self):
        # reversed direction: ln(1/2) + (4 + 1)/2 - 1/2
        p = DiagGaussian([0.0], [1.0])
        q = DiagGaussian([1.0], [2.0])
        fwd = kl_divergence(p, q)
        rev = kl_divergence(q, p)
        assert rev == pytest.approx(1.3068528194400546, abs=1e-12)
        assert fwd != rev

    def test_matches_monte_carlo_d8(self):
        rng = np.random.default_rng(77)
        p = DiagGaussian(rng.normal(size=8), rng.uniform(0.2, 2.0, 8))
        q = DiagGaussian(rng.normal(size=8), rng.uniform(0.2, 2.0, 8))
        exact = kl_divergence(p, q)
        est = mc_kl(p, q, 200_000, seed=78)
        assert exact == pytest.approx(est, rel=0.02, abs=0.01)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            kl_divergence(DiagGaussian([0.0], [1.0]), DiagGaussian([0.0, 0.0], [1.0, 1.0]))

    @given(
        mu1=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        mu2=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        s1=st.lists(st.floats(0.05, 3), min_size=3, max_size=3),
        s2=st.lists(st.floats(0.05, 3), min_size=3, max_size=3),
    )
    @settings(max_examples=200, deadline=None)
    def test_non_negative(self, mu1, mu2, s1, s2):
        p = DiagGaussian(mu1, s1)
        q = DiagGaussian(mu2, s2)
        assert kl_divergence(p, q) >= -1e-12

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = DiagGaussian(rng.normal(size=3), rng.uniform(0.1, 2.0, 3))
            q = DiagGaussian(
                p.mu + rng.choice([0.0, 0.1]), p.sigma
            )
            kl = kl_divergence(p, q)
            if np.allclose(p.mu, q.mu, atol=1e-12) and np.allclose(
                p.sigma, q.sigma, atol=1e-12
            ):
                assert kl <= 1e-12
            else:
                assert kl > 1e-12


class TestSample:
    def test_degenerate_sigma_stays_near_mu(self):
        mu = np.array([3.0, -1.0, 0.5])
        g = DiagGaussian(mu, np.zeros(3))  # floored to SIGMA_FLOOR
        out = sample(g, np.random.default_rng(0))
        assert np.all(np.abs(out - mu) < 3 * SIGMA_FLOOR)

    def test_deterministic_given_seed(self):
        g = DiagGaussian([0.0, 1.0], [1.0, 2.0])
        a = sample(g, np.random.default_rng(42))
        b = sample(g, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_law_of_large_numbers(self):
        g = DiagGaussian([0.5, -2.0], [0.7, 1.3])
        rng = np.random.default_rng(9)
        draws = np.stack([sample(g, rng) for _ in range(100_000)])
        assert np.all(np.abs(draws.mean(axis=0) - g.mu) < 0.02)
        assert np.all(np.abs(draws.std(axis=0) / g.sigma - 1.0) < 0.02)


class TestFitGaussian:
    def test_hand_computed(self):
        g = fit_gaussian([(0.0, 0.0), (2.0, 0.0)], floor=1e-3)
        assert np.array_equal(g.mu, [1.0, 0.0])
        assert np.array_equal(g.sigma, [1.0, 1e-3])

    def test_single_element_collapses_to_floor(self):
        v = np.array([0.3, -1.7, 2.2])
        g = fit_gaussian([v])
        assert np.array_equal(g.mu, v)
        assert np.all(g.sigma == SIGMA_FLOOR)

    def test_self_kl_zero(self, rng):
        batch = rng.normal(size=(7, 5))
        g = fit_gaussian(batch)
        assert kl_divergence(g, g) == 0.0

    def test_identical_copies_exact_mean(self):
        v = np.array([0.1, 1 / 3, -7.77e-3])
        g = fit_gaussian([v] * 13)
        assert np.array_equal(g.mu, v)
        assert np.all(g.sigma == SIGMA_FLOOR)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            fit_gaussian(np.empty((0, 3)))


class TestDatasetContainer:
    def test_chain_is_bit_exact(self, small_ds):
        for t in range(small_ds.n_trajectories):
            traj = small_ds.trajectory(t)
            for i in range(len(traj) - 1):
                assert np.array_equal(traj[i].z_next, traj[i + 1].z)
                assert traj[i].dist_next == traj[i + 1].dist
        assert small_ds.chain_breaks() == []

    def test_total_and_locate(self, small_ds):
        assert small_ds.total == sum(
            small_ds.trajectory_length(t) for t in range(small_ds.n_trajectories)
        )
        for row in range(small_ds.total):
            t, i = small_ds.locate(row)
            assert small_ds.row(t, i) == row

    def test_rejects_out_of_range_action(self, rng):
        ds = random_dataset(rng, n_traj=2, length=5, d=3, n_actions=4)
        with pytest.raises(ContractError):
            type(ds)(
                ds.z,
                ds.actions,
                ds.z_next,
                ds.mu,
                ds.sigma,
                ds.mu_next,
                ds.sigma_next,
                ds.traj_offsets,
                n_actions=1,
            )

    def test_take_prefix(self, small_ds):
        sub = small_ds.take(2)
        assert sub.n_trajectories == 2
        assert sub.total == small_ds.trajectory_length(0) + small_ds.trajectory_length(1)
        assert np.array_equal(sub.z, small_ds.z[: sub.total])

    def test_take_transitions_whole_trajectories(self, small_ds):
        length = small_ds.trajectory_length(0)
        sub = small_ds.take_transitions(length * 2 + 3)
        assert sub.n_trajectories == 2
