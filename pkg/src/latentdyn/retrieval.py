"""Search engines over a LatentDataset.

Three exact, brute-force scans: per-trajectory nearest latent, global
k-nearest by L2, and nearest stored distribution by KL. Ties break
lexicographically by (score, trajectory_id, index) so results are
reproducible across runs and platforms.
"""

from __future__ import annotations

import time
from typing import NamedTuple

import numpy as np

from . import _kernels
from .core import ContractError, DiagGaussian, LatentDataset


class EmptyRetrievalError(Exception):
    """No stored transition passes the action mask."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class TransitionRef(NamedTuple):
    """Locator for a stored transition plus its retrieval score
    (squared-L2-derived distance or KL, depending on the search)."""

    trajectory_id: int
    index: int
    score: float


class ActionMask:
    """Either unconstrained or restricted to one action id."""

    __slots__ = ("action",)

    def __init__(self, action: int | None = None):
        if action is not None and action < 0:
            raise ContractError("action id must be non-negative")
        self.action = action

    @classmethod
    def unconstrained(cls) -> "ActionMask":
        return cls(None)

    @classmethod
    def equals(cls, action: int) -> "ActionMask":
        return cls(int(action))

    @property
    def is_unconstrained(self) -> bool:
        return self.action is None

    def passes(self, action: int) -> bool:
        return self.action is None or action == self.action

    def kernel_action(self) -> int:
        return _kernels.NO_MASK if self.action is None else int(self.action)

    def __repr__(self) -> str:
        return "ActionMask(unconstrained)" if self.action is None else (
            f"ActionMask(equals {self.action})"
        )


def _check_mask(ds: LatentDataset, mask: ActionMask) -> None:
    if mask.action is not None and mask.action >= ds.n_actions:
        raise ContractError(
            f"mask action {mask.action} out of range (A={ds.n_actions})"
        )


def _check_query_dim(ds: LatentDataset, length: int) -> None:
    if length != ds.d:
        raise ContractError(f"query dimension {length} != dataset d {ds.d}")


def _refs_from_rows(ds: LatentDataset, rows, scores) -> list[TransitionRef]:
    offsets = ds.traj_offsets
    tids = np.searchsorted(offsets, rows, side="right") - 1
    return [
        TransitionRef(int(t), int(r - offsets[t]), float(s))
        for t, r, s in zip(tids, rows, scores)
    ]


def search_rollout(
    ds: LatentDataset,
    query: np.ndarray,
    mask: ActionMask | None = None,
    backend: str | None = None,
) -> list[TransitionRef]:
    """Nearest mask-passing transition of each trajectory by L2 distance.

    Trajectories with no mask-passing transition contribute nothing; the
    result is ordered by trajectory id. Scores are Euclidean distances.
    """
    mask = mask or ActionMask.unconstrained()
    _check_mask(ds, mask)
    query = np.asarray(query, dtype=np.float64)
    _check_query_dim(ds, query.shape[0])
    sq = _kernels.l2_sq_scores(
        ds.z, ds.actions, mask.kernel_action(), query, backend=backend
    )
    idx, best = _kernels.segment_argmin(sq, ds.traj_offsets, backend=backend)
    keep = idx >= 0
    if not np.any(keep):
        raise EmptyRetrievalError(f"no transition passes {mask}")
    rows = idx[keep]
    return _refs_from_rows(ds, rows, np.sqrt(best[keep]))


def search_l2(
    ds: LatentDataset,
    query: np.ndarray,
    k: int,
    mask: ActionMask | None = None,
    backend: str | None = None,
) -> list[TransitionRef]:
    """k nearest mask-passing transitions by L2 distance, ascending by
    (distance, trajectory_id, index). Returns fewer than k when the mask
    admits fewer transitions."""
    if k < 1:
        raise ContractError("k must be >= 1")
    mask = mask or ActionMask.unconstrained()
    _check_mask(ds, mask)
    query = np.asarray(query, dtype=np.float64)
    _check_query_dim(ds, query.shape[0])
    sq = _kernels.l2_sq_scores(
        ds.z, ds.actions, mask.kernel_action(), query, backend=backend
    )
    n_pass = int(np.count_nonzero(np.isfinite(sq)))
    if n_pass == 0:
        raise EmptyRetrievalError(f"no transition passes {mask}")
    # Stable sort on score; rows are trajectory-major, so ties fall back to
    # (trajectory_id, index) automatically.
    order = np.argsort(sq, kind="stable")[: min(k, n_pass)]
    return _refs_from_rows(ds, order, np.sqrt(sq[order]))


def search_kl(
    ds: LatentDataset,
    query: DiagGaussian,
    mask: ActionMask | None = None,
    backend: str | None = None,
) -> TransitionRef:
    """The stored transition whose state distribution minimizes
    KL(query || stored)."""
    mask = mask or ActionMask.unconstrained()
    _check_mask(ds, mask)
    _check_query_dim(ds, query.d)
    scores = _kernels.kl_scores(
        ds.mu,
        ds.sigma,
        ds.actions,
        mask.kernel_action(),
        query.mu,
        query.sigma,
        backend=backend,
    )
    row = int(np.argmin(scores))
    if np.isinf(scores[row]):
        raise EmptyRetrievalError(f"no transition passes {mask}")
    t, i = ds.locate(row)
    return TransitionRef(t, i, float(scores[row]))


def scan_time(
    ds: LatentDataset,
    query,
    method,
    mask: ActionMask | None = None,
    backend: str | None = None,
) -> float:
    """Wall-clock seconds for a single search, measured around the search
    call only. `method` is 'rollout', 'l2', or 'kl' (or a predictor Method)."""
    kind = getattr(method, "kind", method)
    k = getattr(method, "k", 1)
    if kind == "kl" and not isinstance(query, DiagGaussian):
        raise ContractError("kl search times require a DiagGaussian query")
    t0 = time.perf_counter()
    if kind == "rollout":
        search_rollout(ds, query, mask, backend=backend)
    elif kind == "l2":
        search_l2(ds, query, k, mask, backend=backend)
    elif kind == "kl":
        search_kl(ds, query, mask, backend=backend)
    else:
        raise ContractError(f"unknown search method {kind!r}")
    return time.perf_counter() - t0
