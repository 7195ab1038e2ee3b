"""PSNR/SSIM scoring and the exposure-pair selection / patching protocol.

Both metrics operate on 8-bit images so the rounding of denormalization is
included in every score, matching what an external scorer would see on
files. SSIM is the standard single-scale formulation: 11x11 Gaussian window
with sigma 1.5, C1 = (0.01*255)^2, C2 = (0.03*255)^2, valid windows only
(no padding), averaged over windows then channels.
"""

import math

import numpy as np

__all__ = [
    "psnr",
    "ssim",
    "select_extreme_pair",
    "extract_patches",
    "format_scores",
]

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_C1 = (0.01 * 255) ** 2
_C2 = (0.03 * 255) ** 2


def _check_same_images(a, b):
    for img in (a, b):
        if not isinstance(img, np.ndarray) or img.dtype != np.uint8 or img.ndim != 3:
            raise ValueError("expected uint8 images of shape (H, W, 3)")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) over all interleaved values; inf when identical."""
    _check_same_images(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(n=_SSIM_WINDOW, sigma=_SSIM_SIGMA):
    r = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x, kernel):
    """Separable 2D correlation, valid windows only."""
    n = kernel.size
    oh = x.shape[0] - n + 1
    ow = x.shape[1] - n + 1
    tmp = np.zeros((oh, x.shape[1]))
    for u in range(n):
        tmp += kernel[u] * x[u : u + oh, :]
    out = np.zeros((oh, ow))
    for v in range(n):
        out += kernel[v] * tmp[:, v : v + ow]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean single-scale SSIM over valid windows, averaged across channels."""
    _check_same_images(a, b)
    if min(a.shape[0], a.shape[1]) < _SSIM_WINDOW:
        raise ValueError(f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW} for SSIM")
    win = _gaussian_window()
    channel_means = []
    for c in range(a.shape[2]):
        x = a[:, :, c].astype(np.float64)
        y = b[:, :, c].astype(np.float64)
        mx = _filter_valid(x, win)
        my = _filter_valid(y, win)
        vx = _filter_valid(x * x, win) - mx * mx
        vy = _filter_valid(y * y, win) - my * my
        cxy = _filter_valid(x * y, win) - mx * my
        smap = ((2.0 * mx * my + _C1) * (2.0 * cxy + _C2)) / (
            (mx * mx + my * my + _C1) * (vx + vy + _C2)
        )
        channel_means.append(float(smap.mean()))
    return float(np.mean(channel_means))


def select_extreme_pair(images) -> tuple:
    """Indices of the darkest and brightest images by mean pixel value.

    Exposure is estimated as the mean over all values. Ties go to the lowest
    index; the two returned indices are always distinct.
    """
    if len(images) < 2:
        raise ValueError("need at least two images to select a pair")
    shape = images[0].shape
    for img in images[1:]:
        if img.shape != shape:
            raise ValueError("all images must share the same dimensions")
    means = [float(np.mean(img, dtype=np.float64)) for img in images]
    under = int(np.argmin(means))
    max_mean = max(means)
    over = next(i for i, m in enumerate(means) if m == max_mean and i != under)
    return under, over


def extract_patches(img: np.ndarray, size: int = 256, stride: int = 256):
    """Non-overlapping size x size patches from the top-left grid.

    Residual borders smaller than the patch size are discarded.
    """
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} is smaller than the {size}x{size} patch size")
    patches = []
    for r in range(0, h - size + 1, stride):
        for c in range(0, w - size + 1, stride):
            patches.append(img[r : r + size, c : c + size].copy())
    return patches


def format_scores(psnr_value: float, ssim_value: float) -> str:
    return f"psnr={psnr_value:.3f} ssim={ssim_value:.3f}"
