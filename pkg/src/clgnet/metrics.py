"""NMSE, PSNR and SSIM for real-valued images."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError
from .tensor import Tensor

SSIM_WINDOW = 7
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def _pair(x, ref):
    a, b = _arr(x), _arr(ref)
    if a.shape != b.shape:
        raise DimensionError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def nmse(x, ref) -> float:
    """||x - ref||^2 / ||ref||^2."""
    a, b = _pair(x, ref)
    denom = float(np.sum(b * b))
    if denom == 0.0:
        raise ContractError("nmse reference is identically zero")
    return float(np.sum((a - b) ** 2)) / denom


def psnr(x, ref, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE); ``inf`` when the images are identical."""
    a, b = _pair(x, ref)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / mse))


def ssim(x, ref, data_range: float = 1.0) -> float:
    """Mean SSIM over all valid 7x7 windows (uniform weights).

    Leading axes are treated as a stack of images and averaged over.
    """
    a, b = _pair(x, ref)
    if a.ndim < 2 or min(a.shape[-2:]) < SSIM_WINDOW:
        raise ContractError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    axes = (-2, -1)

    def local_mean(img):
        return sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW), axis=axes).mean(axis=(-2, -1))

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
