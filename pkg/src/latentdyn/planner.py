"""Open-loop planning: observe once, roll the model forward, commit a fixed
block of mode actions, execute them blind, then observe again."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, DiagGaussian, LatentDataset, sample
from .predictor import Method, predict_step
from .retrieval import TransitionRef, search_kl, search_l2, search_rollout
from .synthworld import SynthConfig, WorldState, encode, step, torus_distance

EPISODE_STEPS = 200

_EPISODE_STREAM = 0x91A4


@dataclass(frozen=True)
class PlanConfig:
    horizon: int = 20
    episodes: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1 or self.episodes < 1:
            raise ContractError("horizon and episodes must be >= 1")


def action_distribution(retrieved, ds: LatentDataset) -> np.ndarray:
    """Empirical action frequencies of a retrieved batch; sums to 1."""
    refs = list(retrieved)
    if not refs:
        raise ContractError("empty retrieval batch")
    counts = np.zeros(ds.n_actions, dtype=np.float64)
    for ref in refs:
        counts[int(ds.actions[ds.row(ref.trajectory_id, ref.index)])] += 1.0
    return counts / counts.sum()


def _retrieve_unconstrained(
    ds: LatentDataset, method: Method, z: np.ndarray, dist: DiagGaussian
) -> list[TransitionRef]:
    if method.kind == "rollout":
        return search_rollout(ds, z)
    if method.kind == "l2":
        return search_l2(ds, z, method.k)
    if method.kind == "kl":
        return [search_kl(ds, dist)]
    raise ContractError(f"method {method.kind!r} cannot plan")


def plan(
    ds: LatentDataset,
    method: Method,
    observed_dist: DiagGaussian,
    observed_z: np.ndarray,
    cfg: PlanConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Commit `horizon` actions from one observation: at each virtual step,
    retrieve unconstrained, take the mode of the retrieved action
    distribution (ties to the lowest id), then advance the model conditioned
    on that action."""
    z = np.asarray(observed_z, dtype=np.float64)
    dist = observed_dist
    actions: list[int] = []
    for _ in range(cfg.horizon):
        refs = _retrieve_unconstrained(ds, method, z, dist)
        probs = action_distribution(refs, ds)
        a = int(np.argmax(probs))
        nxt = predict_step(ds, method, z, dist, a, rng)
        actions.append(a)
        z = nxt.z_hat
        dist = nxt.dist
    return actions


def summary_stats(returns: np.ndarray) -> dict:
    """Mean, sample std, and normal-approximation 95% confidence interval."""
    returns = np.asarray(returns, dtype=np.float64)
    n = returns.shape[0]
    mean = float(returns.mean())
    std = float(returns.std(ddof=1)) if n > 1 else 0.0
    half = 1.96 * std / np.sqrt(n)
    return {
        "mean": mean,
        "std": std,
        "ci_low": mean - half,
        "ci_high": mean + half,
        "n": n,
    }


def _run_episode(
    env_cfg: SynthConfig,
    ds: LatentDataset | None,
    method: Method | None,
    plan_cfg: PlanConfig,
    start_rng,
    env_rng,
    agent_rng,
) -> float:
    """One fixed-length episode; reward is per-step reduction of torus
    distance to the configured target. ds=None runs the uniform-random
    policy instead of the planner."""
    s = WorldState(pos=start_rng.random(2), vel=np.zeros(2))
    ret = 0.0
    t = 0
    while t < EPISODE_STEPS:
        if ds is None:
            acts = [
                int(a)
                for a in agent_rng.integers(0, env_cfg.n_actions, size=plan_cfg.horizon)
            ]
        else:
            obs_dist = encode(s, env_cfg)
            obs_z = sample(obs_dist, agent_rng)
            acts = plan(ds, method, obs_dist, obs_z, plan_cfg, agent_rng)
        for a in acts:
            if t >= EPISODE_STEPS:
                break
            before = torus_distance(s.pos, env_cfg.target)
            s = step(s, a, env_cfg, env_rng)
            ret += before - torus_distance(s.pos, env_cfg.target)
            t += 1
    return ret


@dataclass(frozen=True)
class PlanningEvalResult:
    returns: np.ndarray
    random_returns: np.ndarray

    def summary(self) -> dict:
        out = summary_stats(self.returns)
        out["random"] = summary_stats(self.random_returns)
        return out


def run_planning_eval(
    env_cfg: SynthConfig,
    ds: LatentDataset,
    method: Method,
    plan_cfg: PlanConfig,
) -> PlanningEvalResult:
    """Evaluate open-loop planning against a uniform-random policy on the
    same per-episode seeds (same starts, same dynamics-noise streams)."""
    if ds.d != env_cfg.d or ds.n_actions != env_cfg.n_actions:
        raise ContractError(
            f"dataset incompatible with environment: d {ds.d} vs {env_cfg.d}, "
            f"A {ds.n_actions} vs {env_cfg.n_actions}"
        )
    root = np.random.SeedSequence([plan_cfg.seed, _EPISODE_STREAM])
    children = root.spawn(plan_cfg.episodes)
    returns = np.empty(plan_cfg.episodes)
    random_returns = np.empty(plan_cfg.episodes)
    for e, child in enumerate(children):
        start_seed, env_seed, agent_seed, baseline_seed = child.spawn(4)
        returns[e] = _run_episode(
            env_cfg,
            ds,
            method,
            plan_cfg,
            np.random.default_rng(start_seed),
            np.random.default_rng(env_seed),
            np.random.default_rng(agent_seed),
        )
        random_returns[e] = _run_episode(
            env_cfg,
            None,
            None,
            plan_cfg,
            np.random.default_rng(start_seed),
            np.random.default_rng(env_seed),
            np.random.default_rng(baseline_seed),
        )
    return PlanningEvalResult(returns=returns, random_returns=random_returns)
