"""Closed-form benchmark environment: a point mass on the unit torus with a
seeded sinusoidal latent encoder.

Dynamics, encoder, and the true next-state distribution are all analytic,
so predictions can be scored against ground truth without any trained model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .core import ContractError, DiagGaussian, LatentDataset, dataset_from_state_arrays

# action ids: 0 noop, 1 thrust +x, 2 thrust -x, 3 thrust +y, 4 thrust -y
ACTION_DELTAS = np.array(
    [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
)

_EMBED_STREAM = 0x5E3D
_EPISODE_STREAM = 0xE915

# Velocity features are down-weighted relative to position so that retrieval
# resolves position first; velocity only moves the state by <= v_max per step.
VEL_FEATURE_WEIGHT = 0.3


@dataclass(frozen=True)
class WorldState:
    pos: np.ndarray  # (2,) on the unit torus [0, 1)
    vel: np.ndarray  # (2,) with |components| <= v_max

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=np.float64))
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=np.float64))


@dataclass(frozen=True)
class SynthConfig:
    d: int = 16
    n_actions: int = 5
    noise: float = 0.01
    sigma_obs: float = 0.05
    seed: int = 0
    accel: float = 0.005
    v_max: float = 0.05
    target: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.d < 4:
            raise ContractError("latent dimension must be >= 4")
        if not 2 <= self.n_actions <= ACTION_DELTAS.shape[0]:
            raise ContractError(
                f"action count must be in [2, {ACTION_DELTAS.shape[0]}]"
            )
        if self.noise < 0 or self.sigma_obs <= 0:
            raise ContractError("noise must be >= 0 and sigma_obs > 0")

    @classmethod
    def from_dict(cls, payload: dict) -> "SynthConfig":
        kwargs = dict(payload)
        if "target" in kwargs:
            kwargs["target"] = tuple(kwargs["target"])
        return cls(**kwargs)


def torus_distance(a, b) -> float:
    """Euclidean distance on the unit torus."""
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    diff = np.minimum(diff, 1.0 - diff)
    return float(np.sqrt(np.sum(diff * diff)))


def step(
    s: WorldState,
    action: int,
    cfg: SynthConfig,
    rng: np.random.Generator | None = None,
) -> WorldState:
    """Kinematic update: the action nudges velocity by a fixed delta, the
    position advances modulo 1, then Gaussian noise perturbs velocity.
    Deterministic when cfg.noise == 0 (rng is not consumed)."""
    if not 0 <= action < cfg.n_actions:
        raise ContractError(f"action {action} out of range")
    vel = np.clip(s.vel + cfg.accel * ACTION_DELTAS[action], -cfg.v_max, cfg.v_max)
    pos = np.mod(s.pos + vel, 1.0)
    if cfg.noise > 0:
        if rng is None:
            raise ContractError("noisy dynamics need a random state")
        vel = np.clip(vel + rng.normal(0.0, cfg.noise, size=2), -cfg.v_max, cfg.v_max)
    return WorldState(pos=pos, vel=vel)


def _embedding(cfg: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _EMBED_STREAM]))
    return rng.standard_normal((cfg.d, 6)) / np.sqrt(6.0)


def _features(pos: np.ndarray, vel: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    two_pi = 2.0 * np.pi
    return np.concatenate(
        [
            np.sin(two_pi * pos),
            np.cos(two_pi * pos),
            VEL_FEATURE_WEIGHT * vel / cfg.v_max,
        ]
    )


def encode(s: WorldState, cfg: SynthConfig) -> DiagGaussian:
    """Analytic encoder: seeded linear map of sinusoidal position features
    and normalized velocity; constant observation noise."""
    mu = _embedding(cfg) @ _features(s.pos, s.vel, cfg)
    return DiagGaussian(mu, np.full(cfg.d, cfg.sigma_obs))


def true_next_dist(s: WorldState, action: int, cfg: SynthConfig) -> DiagGaussian:
    """Ground-truth next latent distribution: encode the noiseless update."""
    return encode(step(s, action, replace(cfg, noise=0.0)), cfg)


def greedy_action(s: WorldState, cfg: SynthConfig) -> int:
    """Action whose noiseless update lands nearest the configured target
    (ties break toward the lowest action id)."""
    best, best_d = 0, np.inf
    for a in range(cfg.n_actions):
        vel = np.clip(s.vel + cfg.accel * ACTION_DELTAS[a], -cfg.v_max, cfg.v_max)
        pos = np.mod(s.pos + vel, 1.0)
        dist = torus_distance(pos, cfg.target)
        if dist < best_d:
            best, best_d = a, dist
    return best


def generate(
    cfg: SynthConfig,
    n_traj: int,
    length: int,
    policy: str = "random",
    episodes_seed: int | None = None,
) -> tuple[LatentDataset, list]:
    """Roll episodes, encode every state, and assemble a dataset.

    The encoder embedding is fixed by cfg.seed; episode randomness comes
    from `episodes_seed` (default cfg.seed), so train/test splits of the
    same world use the same latent space but disjoint trajectories.
    Returns the dataset and the ground-truth state log
    ([[pos, vel] per state] per trajectory).
    """
    if n_traj < 1 or length < 1:
        raise ContractError("need n_traj >= 1 and length >= 1")
    if policy not in ("random", "scripted"):
        raise ContractError(f"unknown policy {policy!r}")
    ep_seed = cfg.seed if episodes_seed is None else episodes_seed
    root = np.random.SeedSequence([ep_seed, _EPISODE_STREAM])
    children = root.spawn(n_traj)

    states_z, actions_all, states_mu, states_sigma = [], [], [], []
    state_log = []
    emb = _embedding(cfg)
    sigma_row = np.full(cfg.d, cfg.sigma_obs)
    for child in children:
        rng = np.random.default_rng(child)
        s = WorldState(pos=rng.random(2), vel=np.zeros(2))
        states = [s]
        acts = np.empty(length, dtype=np.uint32)
        for t in range(length):
            if policy == "random":
                a = int(rng.integers(0, cfg.n_actions))
            else:
                a = greedy_action(s, cfg)
            acts[t] = a
            s = step(s, a, cfg, rng)
            states.append(s)
        mus = np.stack([emb @ _features(st.pos, st.vel, cfg) for st in states])
        zs = mus + cfg.sigma_obs * rng.standard_normal(mus.shape)
        states_z.append(zs)
        states_mu.append(mus)
        states_sigma.append(np.broadcast_to(sigma_row, mus.shape).copy())
        actions_all.append(acts)
        state_log.append([[list(st.pos), list(st.vel)] for st in states])

    source = (
        f"synth(seed={cfg.seed},episodes={ep_seed},n_traj={n_traj},"
        f"length={length},policy={policy})"
    )
    ds = dataset_from_state_arrays(
        states_z, actions_all, states_mu, states_sigma, cfg.n_actions, source=source
    )
    return ds, state_log


def state_log_path(ltd_path: str) -> str:
    base = ltd_path[: -len(".ltd")] if ltd_path.endswith(".ltd") else ltd_path
    return base + ".states.json"


def save_state_log(state_log: list, path: str) -> None:
    with open(path, "w") as f:
        json.dump(state_log, f)
        f.write("\n")


def load_state_log(path: str) -> list:
    with open(path) as f:
        return json.load(f)
