"""Dynamics prediction on top of retrieval.

One-step estimation of the next latent distribution, iterative long-horizon
rollouts that feed predictions back as queries, and the two evaluation
protocols (refresh from the true state each step vs. evolve independently).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    SIGMA_FLOOR,
    ContractError,
    DiagGaussian,
    LatentDataset,
    fit_gaussian,
    sample,
)
from .retrieval import (
    ActionMask,
    EmptyRetrievalError,
    TransitionRef,
    search_kl,
    search_l2,
    search_rollout,
)

METHOD_KINDS = ("rollout", "l2", "kl", "random")


@dataclass(frozen=True)
class Method:
    """Prediction method: 'rollout' (per-trajectory nearest), 'l2'
    (global k-NN), 'kl' (nearest distribution), or 'random' (uniform pick,
    the evaluation baseline). k applies to 'l2' only."""

    kind: str
    k: int = 16

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ContractError(f"unknown method kind {self.kind!r}")
        if self.kind == "l2" and self.k < 1:
            raise ContractError("l2 batch size k must be >= 1")

    @classmethod
    def rollout(cls) -> "Method":
        return cls("rollout")

    @classmethod
    def replay_l2(cls, k: int = 16) -> "Method":
        return cls("l2", k=k)

    @classmethod
    def replay_kl(cls) -> "Method":
        return cls("kl")

    @classmethod
    def random_baseline(cls) -> "Method":
        return cls("random")

    def label(self) -> str:
        return {"rollout": "rollout", "l2": f"l2(k={self.k})", "kl": "kl",
                "random": "random"}[self.kind]


@dataclass(eq=False, frozen=True)
class PredictionStep:
    dist: DiagGaussian
    z_hat: np.ndarray
    action_used: int | None
    retrieved: tuple[TransitionRef, ...]


@dataclass(eq=False, frozen=True)
class PredictionTrace:
    steps: tuple[PredictionStep, ...]
    horizon: int

    def __post_init__(self):
        if len(self.steps) != self.horizon:
            raise ContractError("trace length != horizon")

    def dists(self) -> list[DiagGaussian]:
        return [s.dist for s in self.steps]


def _mask_for(action: int | None) -> ActionMask:
    return ActionMask.unconstrained() if action is None else ActionMask.equals(action)


def _random_pick(ds: LatentDataset, mask: ActionMask, rng) -> TransitionRef:
    if mask.is_unconstrained:
        rows = None
        n = ds.total
    else:
        rows = np.flatnonzero(ds.actions == mask.action)
        n = rows.shape[0]
        if n == 0:
            raise EmptyRetrievalError(f"no transition passes {mask}")
    pick = int(rng.integers(0, n))
    row = pick if rows is None else int(rows[pick])
    t, i = ds.locate(row)
    return TransitionRef(t, i, 0.0)


def predict_step(
    ds: LatentDataset,
    method: Method,
    query_z: np.ndarray | None,
    query_dist: DiagGaussian | None,
    action: int | None,
    rng: np.random.Generator,
    use_mean: bool = False,
) -> PredictionStep:
    """Estimate the next latent distribution and draw one latent from it.

    'rollout' and 'l2' search with the latent and fit a Gaussian over the
    retrieved successor latents; 'kl' searches with the distribution and
    adopts the retrieved transition's successor distribution directly.
    """
    if action is not None and action >= ds.n_actions:
        raise ContractError(f"action {action} out of range (A={ds.n_actions})")
    if method.kind in ("rollout", "l2") and query_z is None:
        raise ContractError(f"{method.kind} prediction requires a query latent")
    mask = _mask_for(action)

    if method.kind == "rollout":
        refs = search_rollout(ds, query_z, mask)
        dist = fit_gaussian(
            ds.z_next[[ds.row(r.trajectory_id, r.index) for r in refs]]
        )
    elif method.kind == "l2":
        refs = search_l2(ds, query_z, method.k, mask)
        dist = fit_gaussian(
            ds.z_next[[ds.row(r.trajectory_id, r.index) for r in refs]]
        )
    elif method.kind == "kl":
        if query_dist is None:
            raise ContractError("kl prediction requires a query distribution")
        ref = search_kl(ds, query_dist, mask)
        refs = [ref]
        dist = ds.dist_next_at(ref.trajectory_id, ref.index)
    elif method.kind == "random":
        ref = _random_pick(ds, mask, rng)
        refs = [ref]
        dist = ds.dist_next_at(ref.trajectory_id, ref.index)
    else:  # pragma: no cover - guarded by Method
        raise ContractError(method.kind)

    z_hat = dist.mu.copy() if use_mean else sample(dist, rng)
    return PredictionStep(
        dist=dist, z_hat=z_hat, action_used=action, retrieved=tuple(refs)
    )


def rollout(
    ds: LatentDataset,
    method: Method,
    start_z: np.ndarray,
    start_dist: DiagGaussian,
    actions,
    rng: np.random.Generator,
    use_mean: bool = False,
) -> PredictionTrace:
    """Iterate predict_step over a horizon, feeding each step's sampled
    latent and predicted distribution back as the next query."""
    horizon = len(actions)
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    z = np.asarray(start_z, dtype=np.float64)
    dist = start_dist
    steps = []
    for i, action in enumerate(actions):
        try:
            step = predict_step(ds, method, z, dist, action, rng, use_mean=use_mean)
        except EmptyRetrievalError as e:
            raise EmptyRetrievalError(f"step {i}: {e}", step=i) from e
        steps.append(step)
        z = step.z_hat
        dist = step.dist
    return PredictionTrace(steps=tuple(steps), horizon=horizon)


@dataclass(frozen=True)
class EvalSeries:
    """Per-step mean and variance of KL(predicted || true) across starts."""

    kl_mean: np.ndarray
    kl_var: np.ndarray
    n_starts: int

    @property
    def horizon(self) -> int:
        return self.kl_mean.shape[0]


def _kl_closed(p_mu, p_sigma, q_mu, q_sigma) -> float:
    ps2 = p_sigma * p_sigma
    qs2 = q_sigma * q_sigma
    dm = p_mu - q_mu
    return float(
        np.sum(np.log(q_sigma / p_sigma) + (ps2 + dm * dm) / (2.0 * qs2) - 0.5)
    )


def sample_starts(
    test: LatentDataset, n_starts: int, horizon: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Random (trajectory, index) pairs with at least `horizon` transitions
    remaining after the start."""
    candidates = []
    for t in range(test.n_trajectories):
        length = test.trajectory_length(t)
        candidates.extend((t, i) for i in range(max(length - horizon + 1, 0)))
    if not candidates:
        raise ContractError(
            f"no test trajectory offers {horizon} consecutive transitions"
        )
    picks = rng.integers(0, len(candidates), size=n_starts)
    return [candidates[int(p)] for p in picks]


def _check_compatible(ds: LatentDataset, test: LatentDataset) -> None:
    if ds.d != test.d or ds.n_actions != test.n_actions:
        raise ContractError(
            f"dataset/test mismatch: d {ds.d} vs {test.d}, "
            f"A {ds.n_actions} vs {test.n_actions}"
        )


def _start_rngs(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    # One child stream per start so results are schedule-independent.
    seeds = rng.integers(0, 2**63 - 1, size=n)
    return [np.random.default_rng(int(s)) for s in seeds]


def evaluate_one_step(
    ds: LatentDataset,
    method: Method,
    test: LatentDataset,
    n_starts: int,
    horizon: int,
    conditioned: bool,
    rng: np.random.Generator,
    use_mean: bool = False,
) -> EvalSeries:
    """One-step protocol: at every step the model queries with the true test
    latent and distribution; the predicted distribution is scored against the
    true successor distribution."""
    _check_compatible(ds, test)
    starts = sample_starts(test, n_starts, horizon, rng)
    rngs = _start_rngs(rng, n_starts)
    kls = np.empty((n_starts, horizon), dtype=np.float64)
    for s, ((t, i0), srng) in enumerate(zip(starts, rngs)):
        base = int(test.traj_offsets[t])
        for j in range(horizon):
            r = base + i0 + j
            action = int(test.actions[r]) if conditioned else None
            query_z = test.z[r].astype(np.float64)
            query_dist = DiagGaussian(test.mu[r], test.sigma[r])
            step = predict_step(
                ds, method, query_z, query_dist, action, srng, use_mean=use_mean
            )
            kls[s, j] = _kl_closed(
                step.dist.mu,
                step.dist.sigma,
                test.mu_next[r].astype(np.float64),
                np.maximum(test.sigma_next[r].astype(np.float64), SIGMA_FLOOR),
            )
    return EvalSeries(
        kl_mean=kls.mean(axis=0), kl_var=kls.var(axis=0), n_starts=n_starts
    )


def evaluate_long_horizon(
    ds: LatentDataset,
    method: Method,
    test: LatentDataset,
    n_starts: int,
    horizon: int,
    conditioned: bool,
    rng: np.random.Generator,
    use_mean: bool = False,
) -> EvalSeries:
    """Long-horizon protocol: one rollout per start from the true start
    state, predictions fed back as intermediate queries; step i is scored
    against the true distribution i+1 steps ahead."""
    _check_compatible(ds, test)
    starts = sample_starts(test, n_starts, horizon, rng)
    rngs = _start_rngs(rng, n_starts)
    kls = np.empty((n_starts, horizon), dtype=np.float64)
    for s, ((t, i0), srng) in enumerate(zip(starts, rngs)):
        base = int(test.traj_offsets[t])
        r0 = base + i0
        if conditioned:
            actions = [int(a) for a in test.actions[r0 : r0 + horizon]]
        else:
            actions = [None] * horizon
        start_z = test.z[r0].astype(np.float64)
        start_dist = DiagGaussian(test.mu[r0], test.sigma[r0])
        trace = rollout(
            ds, method, start_z, start_dist, actions, srng, use_mean=use_mean
        )
        for j, step in enumerate(trace.steps):
            r = r0 + j
            kls[s, j] = _kl_closed(
                step.dist.mu,
                step.dist.sigma,
                test.mu_next[r].astype(np.float64),
                np.maximum(test.sigma_next[r].astype(np.float64), SIGMA_FLOOR),
            )
    return EvalSeries(
        kl_mean=kls.mean(axis=0), kl_var=kls.var(axis=0), n_starts=n_starts
    )
