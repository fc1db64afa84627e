"""Image quality metrics: PSNR, windowed SSIM, and region-restricted variants.

All metrics operate on linear [0,1] images (clamp first), shaped (3,H,W) or
(H,W).  Grayscale conversion uses Rec.601 luma weights (0.299, 0.587, 0.114).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ContractError

PSNR_CAP_DB = 99.0
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0, cap: float = PSNR_CAP_DB) -> float:
    """10*log10(peak^2 / MSE); identical inputs report the cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * np.log10(peak * peak / mse), cap)


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[0] != 3:
        raise ContractError(f"expected (3,H,W) or (H,W), got {img.shape}")
    return np.tensordot(_LUMA, img, axes=(0, 0))


def _gaussian_taps(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-d array."""
    win = np.lib.stride_tricks.sliding_window_view(a, taps.size, axis=1)
    a = win @ taps
    win = np.lib.stride_tricks.sliding_window_view(a, taps.size, axis=0)
    return win @ taps


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM over valid 11x11 Gaussian windows of the luma planes."""
    ga = to_gray(clamp01(a))
    gb = to_gray(clamp01(b))
    if ga.shape != gb.shape:
        raise ContractError("ssim inputs must share a shape")
    if min(ga.shape) < 11:
        raise ContractError("ssim needs images at least 11x11")
    taps = _gaussian_taps()
    mu_a = _filter_valid(ga, taps)
    mu_b = _filter_valid(gb, taps)
    ex_aa = _filter_valid(ga * ga, taps)
    ex_bb = _filter_valid(gb * gb, taps)
    ex_ab = _filter_valid(ga * gb, taps)
    var_a = ex_aa - mu_a * mu_a
    var_b = ex_bb - mu_b * mu_b
    cov = ex_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    return float(ssim_map(a, b).mean())


def edge_mask(img: np.ndarray, low: float = 100.0, high: float = 200.0) -> np.ndarray:
    """Gradient-magnitude edges with dual-threshold hysteresis on 8-bit scale."""
    gray = to_gray(clamp01(img)) * 255.0
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    strong = mag >= high
    weak = mag >= low
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return np.zeros_like(strong)
    keep = np.zeros(count + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def region_psnr(
    a: np.ndarray, b: np.ndarray, region: np.ndarray, peak: float = 1.0
) -> float | None:
    """PSNR over the masked pixels only; None for an empty region."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if region.shape != a.shape[-2:]:
        raise ContractError("region mask dims do not match the images")
    if not region.any():
        return None
    if a.ndim == 3:
        diff = (a - b)[:, region]
    else:
        diff = (a - b)[region]
    mse = float(np.mean(diff**2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def region_ssim(a: np.ndarray, b: np.ndarray, region: np.ndarray) -> float | None:
    """Mean SSIM over windows whose center pixel lies in the region."""
    region = np.asarray(region, dtype=bool)
    smap = ssim_map(a, b)
    centers = region[5:-5, 5:-5]
    if centers.shape != smap.shape:
        raise ContractError("region mask dims do not match the images")
    if not centers.any():
        return None
    return float(smap[centers].mean())
