"""Scan kernels for the search engines.

Each kernel exists twice: a numba-jitted loop over contiguous float32 rows
(accumulating in float64) and a vectorized numpy fallback. The active backend
is numba when importable, unless LATENTDYN_DISABLE_NUMBA or NUMBA_DISABLE_JIT
is set in the environment; callers may also force a backend per call.

Masked-out rows score +inf. fastmath stays off: self-retrieval must score
exactly 0.0 and tie order must be platform-stable.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


NO_MASK = -1  # action value meaning "unconstrained"


def _env_disabled() -> bool:
    for var in ("LATENTDYN_DISABLE_NUMBA", "NUMBA_DISABLE_JIT"):
        val = os.environ.get(var, "")
        if val not in ("", "0"):
            return True
    return False


def use_numba() -> bool:
    return HAS_NUMBA and not _env_disabled()


def active_backend() -> str:
    return "numba" if use_numba() else "numpy"


def _resolve(backend: str | None) -> str:
    if backend in (None, "auto"):
        return active_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    return backend


@njit(cache=True)
def _l2_sq_jit(z, actions, action, query, out):
    n, d = z.shape
    for i in range(n):
        if action >= 0 and actions[i] != action:
            out[i] = np.inf
            continue
        acc = 0.0
        for j in range(d):
            diff = query[j] - z[i, j]
            acc += diff * diff
        out[i] = acc


def _l2_sq_np(z, actions, action, query, out):
    diff = z.astype(np.float64) - query[None, :]
    np.einsum("ij,ij->i", diff, diff, out=out)
    if action >= 0:
        out[actions != action] = np.inf


@njit(cache=True)
def _kl_jit(mu, sigma, actions, action, q_mu, q_sigma, out):
    n, d = mu.shape
    for i in range(n):
        if action >= 0 and actions[i] != action:
            out[i] = np.inf
            continue
        acc = 0.0
        for j in range(d):
            sp = q_sigma[j]
            sq = float(sigma[i, j])
            dm = q_mu[j] - float(mu[i, j])
            acc += math.log(sq / sp) + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5
        out[i] = acc


def _kl_np(mu, sigma, actions, action, q_mu, q_sigma, out):
    mu64 = mu.astype(np.float64)
    sg64 = sigma.astype(np.float64)
    dm = q_mu[None, :] - mu64
    terms = (
        np.log(sg64 / q_sigma[None, :])
        + (q_sigma[None, :] ** 2 + dm * dm) / (2.0 * sg64 * sg64)
        - 0.5
    )
    np.sum(terms, axis=1, out=out)
    if action >= 0:
        out[actions != action] = np.inf


@njit(cache=True)
def _segment_argmin_jit(scores, offsets, out_idx, out_score):
    n_seg = offsets.shape[0] - 1
    for t in range(n_seg):
        best = -1
        best_score = np.inf
        for i in range(offsets[t], offsets[t + 1]):
            s = scores[i]
            if s < best_score:
                best_score = s
                best = i
        out_idx[t] = best
        out_score[t] = best_score


def _segment_argmin_np(scores, offsets, out_idx, out_score):
    n_seg = offsets.shape[0] - 1
    for t in range(n_seg):
        seg = scores[offsets[t] : offsets[t + 1]]
        k = int(np.argmin(seg))
        s = seg[k]
        if np.isinf(s):
            out_idx[t] = -1
            out_score[t] = np.inf
        else:
            out_idx[t] = offsets[t] + k
            out_score[t] = s


def l2_sq_scores(z, actions, action: int, query, backend: str | None = None):
    """Squared Euclidean distance of `query` to every row of `z`; rows whose
    action fails the mask score +inf."""
    out = np.empty(z.shape[0], dtype=np.float64)
    q = np.ascontiguousarray(query, dtype=np.float64)
    if _resolve(backend) == "numba":
        _l2_sq_jit(z, actions, np.int64(action), q, out)
    else:
        _l2_sq_np(z, actions, action, q, out)
    return out


def kl_scores(mu, sigma, actions, action: int, q_mu, q_sigma, backend=None):
    """KL(query || stored_i) for every stored row; masked rows score +inf."""
    out = np.empty(mu.shape[0], dtype=np.float64)
    qm = np.ascontiguousarray(q_mu, dtype=np.float64)
    qs = np.ascontiguousarray(q_sigma, dtype=np.float64)
    if _resolve(backend) == "numba":
        _kl_jit(mu, sigma, actions, np.int64(action), qm, qs, out)
    else:
        _kl_np(mu, sigma, actions, action, qm, qs, out)
    return out


def segment_argmin(scores, offsets, backend: str | None = None):
    """First index of the minimum per segment (-1 where a segment is all
    +inf), plus the minimum itself."""
    n_seg = offsets.shape[0] - 1
    out_idx = np.empty(n_seg, dtype=np.int64)
    out_score = np.empty(n_seg, dtype=np.float64)
    if _resolve(backend) == "numba":
        _segment_argmin_jit(scores, offsets, out_idx, out_score)
        out_idx[np.isinf(out_score)] = -1
    else:
        _segment_argmin_np(scores, offsets, out_idx, out_score)
    return out_idx, out_score


def warmup() -> None:
    """Trigger jit compilation of all kernels (no-op on the numpy path)."""
    if not use_numba():
        return
    z = np.zeros((2, 3), dtype=np.float32)
    a = np.zeros(2, dtype=np.uint32)
    q = np.zeros(3, dtype=np.float64)
    s = np.ones(3, dtype=np.float64)
    off = np.array([0, 2], dtype=np.int64)
    l2_sq_scores(z, a, NO_MASK, q, backend="numba")
    kl_scores(z, np.ones_like(z), a, NO_MASK, q, s, backend="numba")
    segment_argmin(np.zeros(2, dtype=np.float64), off, backend="numba")
