"""Core domain types and the diagonal-Gaussian algebra.

Datasets are stored as flat, trajectory-major float32 arrays so the search
kernels can scan contiguous memory; all statistics and divergences are
accumulated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Lower bound applied to standard deviations so divergences stay finite and
# sampling stays well-defined even when a retrieved batch collapses.
SIGMA_FLOOR = 1e-3


class ContractError(ValueError):
    """An operation was called with arguments violating its contract."""


class EmptyBatchError(ValueError):
    """A distribution fit was requested on an empty batch (retrieval
    produced no candidates)."""


class DiagGaussian:
    """Multivariate Normal with diagonal covariance, parameterized by
    per-dimension mean and standard deviation.

    Standard deviations are floored at `floor` on construction.
    """

    __slots__ = ("mu", "sigma")

    def __init__(self, mu, sigma, floor: float = SIGMA_FLOOR):
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.ndim != 1:
            raise ContractError("mu and sigma must be 1-D vectors")
        if mu.shape[0] != sigma.shape[0]:
            raise ContractError(
                f"mu and sigma length mismatch: {mu.shape[0]} != {sigma.shape[0]}"
            )
        if mu.shape[0] == 0:
            raise ContractError("zero-dimensional Gaussian")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise ContractError("non-finite Gaussian parameters")
        self.mu = mu
        self.sigma = np.maximum(sigma, floor)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiagGaussian):
            return NotImplemented
        return np.array_equal(self.mu, other.mu) and np.array_equal(
            self.sigma, other.sigma
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"DiagGaussian(d={self.d})"


def kl_divergence(p: DiagGaussian, q: DiagGaussian) -> float:
    """KL(p || q) in nats for diagonal Gaussians.

    Closed form, summed over dimensions:
        ln(q.sigma/p.sigma) + (p.sigma^2 + (p.mu - q.mu)^2) / (2 q.sigma^2) - 1/2
    """
    if p.d != q.d:
        raise ContractError(f"dimension mismatch: {p.d} != {q.d}")
    ps2 = p.sigma * p.sigma
    qs2 = q.sigma * q.sigma
    dm = p.mu - q.mu
    terms = np.log(q.sigma / p.sigma) + (ps2 + dm * dm) / (2.0 * qs2) - 0.5
    return float(np.sum(terms))


def sample(g: DiagGaussian, rng: np.random.Generator) -> np.ndarray:
    """Draw mu + sigma * eps with eps ~ N(0, I) from `rng`."""
    return g.mu + g.sigma * rng.standard_normal(g.d)


def fit_gaussian(latents, floor: float = SIGMA_FLOOR) -> DiagGaussian:
    """Fit a diagonal Gaussian to a batch of vectors.

    mu is the per-dimension sample mean; sigma is the maximum-likelihood
    standard deviation (divide by K), floored elementwise at `floor`.
    """
    batch = np.asarray(latents, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise EmptyBatchError("cannot fit a distribution to an empty batch")
    # Centered mean: exact when all rows are identical, better conditioned
    # in general.
    ref = batch[0]
    mu = ref + np.mean(batch - ref, axis=0)
    dev = batch - mu
    sigma = np.sqrt(np.mean(dev * dev, axis=0))
    return DiagGaussian(mu, sigma, floor=floor)


@dataclass(eq=False, frozen=True)
class Transition:
    """One stored step: latent, action, successor latent, and the Gaussian
    parameters of both the current and the successor state."""

    z: np.ndarray
    action: int
    z_next: np.ndarray
    dist: DiagGaussian
    dist_next: DiagGaussian

    def __eq__(self, other) -> bool:
        if not isinstance(other, Transition):
            return NotImplemented
        return (
            self.action == other.action
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.z_next, other.z_next)
            and self.dist == other.dist
            and self.dist_next == other.dist_next
        )


@dataclass(eq=False, frozen=True)
class Trajectory:
    """Temporally ordered, non-empty sequence of transitions."""

    transitions: tuple
    id: int

    def __len__(self) -> int:
        return len(self.transitions)

    def __getitem__(self, i) -> Transition:
        return self.transitions[i]

    def __iter__(self):
        return iter(self.transitions)


class LatentDataset:
    """Immutable store of encoded trajectories, flattened trajectory-major.

    Arrays:
        z, z_next, mu, sigma, mu_next, sigma_next: (total, d) float32
        actions: (total,) uint32
        traj_offsets: (n_trajectories + 1,) int64; trajectory t occupies
            rows [traj_offsets[t], traj_offsets[t + 1]).
    """

    __slots__ = (
        "z",
        "actions",
        "z_next",
        "mu",
        "sigma",
        "mu_next",
        "sigma_next",
        "traj_offsets",
        "n_actions",
        "source",
    )

    def __init__(
        self,
        z,
        actions,
        z_next,
        mu,
        sigma,
        mu_next,
        sigma_next,
        traj_offsets,
        n_actions: int,
        source: str = "",
    ):
        self.z = np.ascontiguousarray(z, dtype=np.float32)
        self.actions = np.ascontiguousarray(actions, dtype=np.uint32)
        self.z_next = np.ascontiguousarray(z_next, dtype=np.float32)
        self.mu = np.ascontiguousarray(mu, dtype=np.float32)
        self.sigma = np.ascontiguousarray(sigma, dtype=np.float32)
        self.mu_next = np.ascontiguousarray(mu_next, dtype=np.float32)
        self.sigma_next = np.ascontiguousarray(sigma_next, dtype=np.float32)
        self.traj_offsets = np.ascontiguousarray(traj_offsets, dtype=np.int64)
        self.n_actions = int(n_actions)
        self.source = source
        self._validate()

    def _validate(self) -> None:
        n, d = self.z.shape
        for name in ("z_next", "mu", "sigma", "mu_next", "sigma_next"):
            arr = getattr(self, name)
            if arr.shape != (n, d):
                raise ContractError(f"{name} shape {arr.shape} != {(n, d)}")
        if self.actions.shape != (n,):
            raise ContractError("actions shape mismatch")
        if self.n_actions < 1:
            raise ContractError("action vocabulary must be non-empty")
        off = self.traj_offsets
        if off.ndim != 1 or off.shape[0] < 2 or off[0] != 0 or off[-1] != n:
            raise ContractError("malformed trajectory offsets")
        if np.any(np.diff(off) < 1):
            raise ContractError("trajectories must be non-empty")
        if n > 0 and int(self.actions.max(initial=0)) >= self.n_actions:
            bad = int(np.argmax(self.actions >= self.n_actions))
            raise ContractError(
                f"action {int(self.actions[bad])} out of range at row {bad}"
            )
        for name in ("sigma", "sigma_next"):
            arr = getattr(self, name)
            if n > 0 and not np.all(arr > 0):
                r, c = np.argwhere(~(arr > 0))[0]
                t, i = self.locate(int(r))
                raise ContractError(
                    f"non-positive {name}[{c}] in trajectory {t} index {i}"
                )

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def total(self) -> int:
        return self.z.shape[0]

    @property
    def n_trajectories(self) -> int:
        return self.traj_offsets.shape[0] - 1

    def locate(self, row: int) -> tuple[int, int]:
        """Map a flat row to (trajectory_id, index within trajectory)."""
        t = int(np.searchsorted(self.traj_offsets, row, side="right")) - 1
        return t, row - int(self.traj_offsets[t])

    def row(self, trajectory_id: int, index: int) -> int:
        """Map (trajectory_id, index) to the flat row."""
        start = int(self.traj_offsets[trajectory_id])
        end = int(self.traj_offsets[trajectory_id + 1])
        if not 0 <= index < end - start:
            raise IndexError(
                f"index {index} out of range for trajectory {trajectory_id}"
            )
        return start + index

    def transition(self, trajectory_id: int, index: int) -> Transition:
        r = self.row(trajectory_id, index)
        return Transition(
            z=self.z[r].astype(np.float64),
            action=int(self.actions[r]),
            z_next=self.z_next[r].astype(np.float64),
            dist=self.dist_at(trajectory_id, index),
            dist_next=self.dist_next_at(trajectory_id, index),
        )

    def dist_at(self, trajectory_id: int, index: int) -> DiagGaussian:
        r = self.row(trajectory_id, index)
        return DiagGaussian(self.mu[r], self.sigma[r])

    def dist_next_at(self, trajectory_id: int, index: int) -> DiagGaussian:
        r = self.row(trajectory_id, index)
        return DiagGaussian(self.mu_next[r], self.sigma_next[r])

    def trajectory(self, trajectory_id: int) -> Trajectory:
        start = int(self.traj_offsets[trajectory_id])
        end = int(self.traj_offsets[trajectory_id + 1])
        return Trajectory(
            transitions=tuple(
                self.transition(trajectory_id, i) for i in range(end - start)
            ),
            id=trajectory_id,
        )

    @property
    def trajectories(self):
        return [self.trajectory(t) for t in range(self.n_trajectories)]

    def trajectory_length(self, trajectory_id: int) -> int:
        return int(
            self.traj_offsets[trajectory_id + 1] - self.traj_offsets[trajectory_id]
        )

    def state_mus(self) -> np.ndarray:
        """Gaussian means of every encoded state (per trajectory: each
        transition's mu plus the final transition's mu_next)."""
        parts = []
        for t in range(self.n_trajectories):
            start = int(self.traj_offsets[t])
            end = int(self.traj_offsets[t + 1])
            parts.append(self.mu[start:end])
            parts.append(self.mu_next[end - 1 : end])
        return np.concatenate(parts, axis=0)

    def take(self, n_trajectories: int) -> "LatentDataset":
        """Dataset view holding the first `n_trajectories` trajectories."""
        if not 1 <= n_trajectories <= self.n_trajectories:
            raise ContractError(
                f"cannot take {n_trajectories} of {self.n_trajectories} trajectories"
            )
        end = int(self.traj_offsets[n_trajectories])
        return LatentDataset(
            self.z[:end],
            self.actions[:end],
            self.z_next[:end],
            self.mu[:end],
            self.sigma[:end],
            self.mu_next[:end],
            self.sigma_next[:end],
            self.traj_offsets[: n_trajectories + 1],
            self.n_actions,
            source=self.source,
        )

    def take_transitions(self, n: int) -> "LatentDataset":
        """Dataset holding the largest whole-trajectory prefix with at most
        `n` transitions (at least one trajectory)."""
        if n < 1:
            raise ContractError("need at least one transition")
        k = int(np.searchsorted(self.traj_offsets, n, side="right")) - 1
        return self.take(max(k, 1))

    def chain_breaks(self) -> list[tuple[int, int]]:
        """(trajectory_id, index) pairs where a transition's successor fields
        do not bit-match the following transition."""
        breaks = []
        for t in range(self.n_trajectories):
            start = int(self.traj_offsets[t])
            end = int(self.traj_offsets[t + 1])
            for i in range(start, end - 1):
                ok = (
                    np.array_equal(self.z_next[i], self.z[i + 1])
                    and np.array_equal(self.mu_next[i], self.mu[i + 1])
                    and np.array_equal(self.sigma_next[i], self.sigma[i + 1])
                )
                if not ok:
                    breaks.append((t, i - start))
        return breaks

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatentDataset):
            return NotImplemented
        return (
            self.n_actions == other.n_actions
            and np.array_equal(self.traj_offsets, other.traj_offsets)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.z_next, other.z_next)
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma, other.sigma)
            and np.array_equal(self.mu_next, other.mu_next)
            and np.array_equal(self.sigma_next, other.sigma_next)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"LatentDataset(trajectories={self.n_trajectories}, "
            f"total={self.total}, d={self.d}, actions={self.n_actions})"
        )


def dataset_from_state_arrays(
    states_z: list[np.ndarray],
    actions: list[np.ndarray],
    states_mu: list[np.ndarray],
    states_sigma: list[np.ndarray],
    n_actions: int,
    source: str = "",
) -> LatentDataset:
    """Assemble a LatentDataset from per-trajectory state sequences.

    Each trajectory supplies T+1 states (rows of z/mu/sigma) and T actions;
    transition i is (state i, action i, state i+1). Successor fields are
    slices of the same state arrays, so chain continuity is bit-exact.
    """
    if len(states_z) == 0:
        raise ContractError("no trajectories")
    zs, acts, zns, mus, sigs, muns, signs_, lengths = [], [], [], [], [], [], [], []
    for k, (sz, sa, sm, ss) in enumerate(
        zip(states_z, actions, states_mu, states_sigma)
    ):
        sz = np.asarray(sz, dtype=np.float32)
        sm = np.asarray(sm, dtype=np.float32)
        ss = np.asarray(ss, dtype=np.float32)
        sa = np.asarray(sa, dtype=np.uint32)
        if sz.ndim != 2 or sz.shape[0] < 2:
            raise ContractError(f"trajectory {k}: need at least 2 states")
        if sm.shape != sz.shape or ss.shape != sz.shape:
            raise ContractError(f"trajectory {k}: state array shape mismatch")
        if sa.shape != (sz.shape[0] - 1,):
            raise ContractError(f"trajectory {k}: need T actions for T+1 states")
        zs.append(sz[:-1])
        zns.append(sz[1:])
        mus.append(sm[:-1])
        muns.append(sm[1:])
        sigs.append(ss[:-1])
        signs_.append(ss[1:])
        acts.append(sa)
        lengths.append(sa.shape[0])
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    return LatentDataset(
        np.concatenate(zs),
        np.concatenate(acts),
        np.concatenate(zns),
        np.concatenate(mus),
        np.concatenate(sigs),
        np.concatenate(muns),
        np.concatenate(signs_),
        offsets,
        n_actions,
        source=source,
    )
