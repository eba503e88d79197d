import numpy as np
import pytest

from latentdyn.core import LatentDataset, dataset_from_state_arrays


def random_dataset(
    rng: np.random.Generator,
    n_traj: int = 4,
    length: int = 25,
    d: int = 6,
    n_actions: int = 4,
    sigma_low: float = 0.01,
    sigma_high: float = 1.5,
    source: str = "",
) -> LatentDataset:
    """Random but internally consistent dataset (chained state sequences)."""
    states_z, actions, states_mu, states_sigma = [], [], [], []
    for _ in range(n_traj):
        n_states = length + 1
        mu = rng.normal(0.0, 2.0, size=(n_states, d))
        sigma = rng.uniform(sigma_low, sigma_high, size=(n_states, d))
        z = mu + sigma * rng.standard_normal((n_states, d))
        states_z.append(z)
        states_mu.append(mu)
        states_sigma.append(sigma)
        actions.append(rng.integers(0, n_actions, size=length))
    return dataset_from_state_arrays(
        states_z, actions, states_mu, states_sigma, n_actions, source=source
    )


def chain_dataset(
    states_z: list, actions: list, n_actions: int, sigma: float = 0.1
) -> LatentDataset:
    """Dataset from explicit per-trajectory latent state sequences; mu is the
    state itself, sigma constant. Handy for crafted retrieval scenarios."""
    states_mu = [np.asarray(z, dtype=np.float64) for z in states_z]
    states_sigma = [np.full_like(m, sigma) for m in states_mu]
    return dataset_from_state_arrays(
        states_mu, actions, states_mu, states_sigma, n_actions
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_ds(rng):
    return random_dataset(rng, n_traj=5, length=12, d=4, n_actions=3)
