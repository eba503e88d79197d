"""Measurement suite: L1 distance and SSIM on image arrays, latent-space
coverage ratio, and Pearson correlation."""

from __future__ import annotations

import json

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ContractError, LatentDataset

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined (a series has zero variance)."""


def l1_distance(a, b) -> float:
    """Mean absolute difference per element."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def _gaussian_window() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _as_hwc(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ContractError(f"expected (H, W, C) image, got shape {arr.shape}")
    return arr


def ssim(a, b, value_range: float = 1.0) -> float:
    """Mean structural similarity over valid (un-padded) 11x11 Gaussian
    windows, averaged over windows then channels.

    Uses the reference parameterization: sigma 1.5, C1=(0.01 L)^2,
    C2=(0.03 L)^2 for dynamic range L.
    """
    x = _as_hwc(a)
    y = _as_hwc(b)
    if x.shape != y.shape:
        raise ContractError(f"shape mismatch: {x.shape} vs {y.shape}")
    h, w, _ = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ContractError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    c1 = (SSIM_K1 * value_range) ** 2
    c2 = (SSIM_K2 * value_range) ** 2
    per_channel = []
    for c in range(x.shape[2]):
        xc = x[:, :, c]
        yc = y[:, :, c]
        wx = sliding_window_view(xc, (SSIM_WINDOW, SSIM_WINDOW))
        wy = sliding_window_view(yc, (SSIM_WINDOW, SSIM_WINDOW))
        mx = np.einsum("ijkl,kl->ij", wx, _WINDOW)
        my = np.einsum("ijkl,kl->ij", wy, _WINDOW)
        mxx = np.einsum("ijkl,ijkl,kl->ij", wx, wx, _WINDOW)
        myy = np.einsum("ijkl,ijkl,kl->ij", wy, wy, _WINDOW)
        mxy = np.einsum("ijkl,ijkl,kl->ij", wx, wy, _WINDOW)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        ssim_map = ((2 * mx * my + c1) * (2 * cov + c2)) / (
            (mx * mx + my * my + c1) * (vx + vy + c2)
        )
        per_channel.append(float(ssim_map.mean()))
    return float(np.mean(per_channel))


def projection_matrix(d: int, projection_seed: int) -> np.ndarray:
    """Fixed seeded random linear map from d dimensions to 2."""
    rng = np.random.default_rng(projection_seed)
    return rng.standard_normal((d, 2)) / np.sqrt(d)


def project_state_mus(ds: LatentDataset, projection_seed: int) -> np.ndarray:
    """Project every encoded state mean to 2 dimensions."""
    proj = projection_matrix(ds.d, projection_seed)
    return ds.state_mus().astype(np.float64) @ proj


def bounding_box(points: np.ndarray) -> tuple[float, float, float, float]:
    return (
        float(points[:, 0].min()),
        float(points[:, 0].max()),
        float(points[:, 1].min()),
        float(points[:, 1].max()),
    )


def coverage_ratio(
    ds: LatentDataset,
    projection_seed: int = 0,
    grid: int = 32,
    box: tuple[float, float, float, float] | None = None,
) -> float:
    """Fraction of grid x grid sectors of the projected plane occupied by the
    dataset's encoded state means.

    The box defaults to the dataset's own projected bounds; pass the
    reference (test) set's box to compare coverage across datasets. Points
    outside the box land in the nearest edge sector.
    """
    if grid < 2:
        raise ContractError("grid must be >= 2")
    pts = project_state_mus(ds, projection_seed)
    if box is None:
        box = bounding_box(pts)
    x0, x1, y0, y1 = box
    sx = (x1 - x0) or 1.0
    sy = (y1 - y0) or 1.0
    ix = np.clip(((pts[:, 0] - x0) / sx * grid).astype(np.int64), 0, grid - 1)
    iy = np.clip(((pts[:, 1] - y0) / sy * grid).astype(np.int64), 0, grid - 1)
    occupied = np.unique(ix * grid + iy).shape[0]
    return occupied / float(grid * grid)


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("series must be 1-D and equally long")
    if x.shape[0] < 2:
        raise ContractError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.sum(dx * dx))
    vy = float(np.sum(dy * dy))
    if vx == 0.0 or vy == 0.0:
        raise UndefinedCorrelationError("a series has zero variance")
    return float(np.sum(dx * dy) / np.sqrt(vx * vy))


def save_image_array(img: np.ndarray, path: str, value_range: float = 1.0) -> None:
    """Write an image as flat little-endian f32 plus a JSON shape header."""
    arr = _as_hwc(img).astype("<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    header = {
        "height": arr.shape[0],
        "width": arr.shape[1],
        "channels": arr.shape[2],
        "range": value_range,
    }
    with open(path + ".json", "w") as f:
        json.dump(header, f, sort_keys=True)
        f.write("\n")


def load_image_array(path: str) -> tuple[np.ndarray, float]:
    """Read a flat-binary f32 image and its JSON shape header; returns the
    (H, W, C) array and its dynamic range."""
    with open(path + ".json") as f:
        header = json.load(f)
    shape = (int(header["height"]), int(header["width"]), int(header["channels"]))
    data = np.fromfile(path, dtype="<f4")
    if data.shape[0] != shape[0] * shape[1] * shape[2]:
        raise ContractError(
            f"image payload {data.shape[0]} values does not match header {shape}"
        )
    return data.reshape(shape).astype(np.float64), float(header.get("range", 1.0))
