"""LTD binary dataset format.

Little-endian layout:
    magic "LTD1" | u32 version (=1) | u32 d | u32 A | u32 num_trajectories
    per trajectory: u32 length L, then L records of
        [z: d*f32][action: u32][z_next: d*f32][mu: d*f32][sigma: d*f32]
        [mu_next: d*f32][sigma_next: d*f32]

An optional JSON sidecar `<name>.manifest.json` with keys
{"d", "A", "num_trajectories", "total_transitions", "source"} is validated
against the header when present.
"""

from __future__ import annotations

import json
import os
import struct
import warnings

import numpy as np

from .core import LatentDataset

MAGIC = b"LTD1"
VERSION = 1

_HEADER = struct.Struct("<4sIIII")
_U32 = struct.Struct("<I")


class LtdError(Exception):
    """Base class for dataset file errors."""


class BadMagicError(LtdError):
    pass


class VersionMismatchError(LtdError):
    pass


class TruncatedFileError(LtdError):
    pass


class RecordInvariantError(LtdError):
    """A record violates a dataset invariant (bad sigma, action range, ...)."""


class ManifestMismatchError(LtdError):
    pass


class ChainWarning(UserWarning):
    """Consecutive transitions of a trajectory do not bit-match."""


def _record_dtype(d: int) -> np.dtype:
    return np.dtype(
        [
            ("z", "<f4", (d,)),
            ("action", "<u4"),
            ("z_next", "<f4", (d,)),
            ("mu", "<f4", (d,)),
            ("sigma", "<f4", (d,)),
            ("mu_next", "<f4", (d,)),
            ("sigma_next", "<f4", (d,)),
        ]
    )


def manifest_path(path: str) -> str:
    base = path[: -len(".ltd")] if path.endswith(".ltd") else path
    return base + ".manifest.json"


def save_dataset(ds: LatentDataset, path: str, write_manifest: bool = True) -> None:
    """Write `ds` to `path` in LTD format (plus a manifest sidecar)."""
    d = ds.d
    rec = _record_dtype(d)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, d, ds.n_actions, ds.n_trajectories))
        for t in range(ds.n_trajectories):
            start = int(ds.traj_offsets[t])
            end = int(ds.traj_offsets[t + 1])
            n = end - start
            block = np.empty(n, dtype=rec)
            block["z"] = ds.z[start:end]
            block["action"] = ds.actions[start:end]
            block["z_next"] = ds.z_next[start:end]
            block["mu"] = ds.mu[start:end]
            block["sigma"] = ds.sigma[start:end]
            block["mu_next"] = ds.mu_next[start:end]
            block["sigma_next"] = ds.sigma_next[start:end]
            f.write(_U32.pack(n))
            f.write(block.tobytes())
    if write_manifest:
        manifest = {
            "d": d,
            "A": ds.n_actions,
            "num_trajectories": ds.n_trajectories,
            "total_transitions": ds.total,
            "source": ds.source,
        }
        with open(manifest_path(path), "w") as f:
            json.dump(manifest, f, sort_keys=True, indent=2)
            f.write("\n")


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated file while reading {what}")
    return buf


def load_dataset(path: str, check_chain: bool = True) -> LatentDataset:
    """Read an LTD file, validating header, records, and manifest sidecar.

    Emits a ChainWarning when consecutive transitions of a trajectory do not
    bit-match (the file was not produced from contiguous state sequences).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as f:
        magic, version, d, n_actions, n_traj = _HEADER.unpack(
            _read_exact(f, _HEADER.size, "header")
        )
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise VersionMismatchError(f"unsupported version {version}")
        if d < 1:
            raise RecordInvariantError("latent dimension must be positive")
        if n_actions < 1:
            raise RecordInvariantError("action vocabulary must be non-empty")
        if n_traj < 1:
            raise RecordInvariantError("dataset holds no trajectories")
        rec = _record_dtype(d)
        blocks = []
        lengths = []
        for t in range(n_traj):
            (n,) = _U32.unpack(_read_exact(f, 4, f"trajectory {t} length"))
            if n < 1:
                raise RecordInvariantError(f"trajectory {t} is empty")
            raw = _read_exact(f, n * rec.itemsize, f"trajectory {t} records")
            blocks.append(np.frombuffer(raw, dtype=rec))
            lengths.append(n)
        if f.read(1) != b"":
            raise RecordInvariantError("trailing bytes after last trajectory")

    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    all_rec = np.concatenate(blocks) if len(blocks) > 0 else np.empty(0, dtype=rec)

    for name in ("sigma", "sigma_next"):
        arr = all_rec[name]
        bad = ~(arr > 0)
        if np.any(bad):
            r, c = np.argwhere(bad)[0]
            t = int(np.searchsorted(offsets, r, side="right")) - 1
            raise RecordInvariantError(
                f"non-positive {name}[{c}] in trajectory {t} index {r - offsets[t]}"
            )
    if all_rec.shape[0] and int(all_rec["action"].max()) >= n_actions:
        r = int(np.argmax(all_rec["action"] >= n_actions))
        t = int(np.searchsorted(offsets, r, side="right")) - 1
        raise RecordInvariantError(
            f"action {int(all_rec['action'][r])} >= A={n_actions} "
            f"in trajectory {t} index {r - offsets[t]}"
        )

    source = ""
    mpath = manifest_path(path)
    if os.path.exists(mpath):
        with open(mpath) as f:
            manifest = json.load(f)
        expected = {
            "d": d,
            "A": n_actions,
            "num_trajectories": n_traj,
            "total_transitions": int(offsets[-1]),
        }
        for key, want in expected.items():
            if key in manifest and manifest[key] != want:
                raise ManifestMismatchError(
                    f"manifest {key}={manifest[key]} does not match file ({want})"
                )
        source = str(manifest.get("source", ""))

    ds = LatentDataset(
        np.ascontiguousarray(all_rec["z"]),
        np.ascontiguousarray(all_rec["action"]),
        np.ascontiguousarray(all_rec["z_next"]),
        np.ascontiguousarray(all_rec["mu"]),
        np.ascontiguousarray(all_rec["sigma"]),
        np.ascontiguousarray(all_rec["mu_next"]),
        np.ascontiguousarray(all_rec["sigma_next"]),
        offsets,
        n_actions,
        source=source,
    )
    if check_chain:
        breaks = ds.chain_breaks()
        if breaks:
            t, i = breaks[0]
            warnings.warn(
                f"{len(breaks)} chain discontinuities, first at trajectory {t} "
                f"index {i}",
                ChainWarning,
                stacklevel=2,
            )
    return ds
