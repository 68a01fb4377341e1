"""
Synthetic single-coil MRI: ellipse phantoms, centered k-space, random
cartesian column masks and zero-filled magnitude reconstructions.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .tensor import Tensor

# Modified Shepp-Logan: intensity, semi-axis x, semi-axis y, centre x, centre y, angle (deg)
SHEPP_LOGAN = np.array([
    [1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
    [-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
    [0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
    [0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
    [0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
    [0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
])

JITTER = 0.05

# Published low-frequency fractions for the two standard accelerations.
CENTER_FRACTIONS = {4: 0.08, 8: 0.04}


def phantom_ellipses(variant_seed: Optional[int] = None) -> np.ndarray:
    """Ellipse table, optionally jittered by up to +-5% per parameter.

    Semi-axes scale by (1 + u), centres move by u times the matching
    semi-axis, angles rotate by u * 90 degrees, with u ~ U(-0.05, 0.05).
    ``None`` gives the standard table.
    """
    table = SHEPP_LOGAN.copy()
    if variant_seed is None:
        return table
    rng = np.random.default_rng(variant_seed)
    u = rng.uniform(-JITTER, JITTER, size=(len(table), 5))
    table[:, 1] *= 1 + u[:, 0]
    table[:, 2] *= 1 + u[:, 1]
    table[:, 3] += u[:, 2] * table[:, 1]
    table[:, 4] += u[:, 3] * table[:, 2]
    table[:, 5] += u[:, 4] * 90.0
    return table


def pixel_grid(H: int, W: int):
    """Pixel-centre coordinates on [-1, 1]^2, y pointing up."""
    xs = -1.0 + (2 * np.arange(W) + 1) / W
    ys = 1.0 - (2 * np.arange(H) + 1) / H
    return np.meshgrid(xs, ys)


def phantom(H: int, W: int, variant_seed: Optional[int] = None) -> Tensor:
    """Rasterized modified Shepp-Logan phantom, shape [1, H, W], in [0, 1]."""
    if H < 32 or W < 32 or H % 2 or W % 2:
        raise ConfigurationError(f"phantom needs even H, W >= 32, got {(H, W)}")
    X, Y = pixel_grid(H, W)
    img = np.zeros((H, W))
    for val, a, b, x0, y0, deg in phantom_ellipses(variant_seed):
        th = np.deg2rad(deg)
        dx, dy = X - x0, Y - y0
        xr = dx * np.cos(th) + dy * np.sin(th)
        yr = -dx * np.sin(th) + dy * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return Tensor(np.clip(img, 0.0, 1.0)[None])


@dataclass
class SamplingMask:
    columns: np.ndarray
    acceleration: int
    center_fraction: float
    seed: int

    @property
    def width(self) -> int:
        return self.columns.size

    def center_slice(self) -> slice:
        return center_columns(self.width, self.center_fraction)


def center_columns(W: int, center_fraction: float) -> slice:
    """The round(center_fraction * W) columns around W/2 in shifted k-space."""
    n = int(round(center_fraction * W))
    start = (W - n + 1) // 2
    return slice(start, start + n)


def cartesian_mask(W: int, R: int, center_fraction: float, seed: int) -> SamplingMask:
    """Random column mask with a fully sampled centre and E[#columns] = W / R."""
    if R < 1:
        raise ConfigurationError(f"acceleration must be >= 1, got {R}")
    if not 0.0 < center_fraction < 1.0:
        raise ConfigurationError(f"center_fraction must be in (0, 1), got {center_fraction}")
    center = center_columns(W, center_fraction)
    n_center = center.stop - center.start
    if W / R < n_center:
        raise ConfigurationError(f"W/R = {W / R:g} is smaller than the {n_center}-column centre block")
    prob = (W / R - n_center) / (W - n_center) if W > n_center else 0.0
    rng = np.random.default_rng(seed)
    cols = rng.random(W) < prob
    cols[center] = True
    return SamplingMask(cols, R, center_fraction, seed)


def full_mask(W: int) -> SamplingMask:
    return SamplingMask(np.ones(W, dtype=bool), 1, 0.5, 0)


def to_kspace(img) -> np.ndarray:
    """Centered 2-D FFT (zero frequency at index (H//2, W//2))."""
    arr = np.asarray(img.data if isinstance(img, Tensor) else img)
    return np.fft.fftshift(np.fft.fft2(arr, axes=(-2, -1)), axes=(-2, -1))


def from_kspace(kspace: np.ndarray) -> np.ndarray:
    """Complex image from centered k-space."""
    return np.fft.ifft2(np.fft.ifftshift(kspace, axes=(-2, -1)), axes=(-2, -1))


def apply_mask(kspace: np.ndarray, mask: SamplingMask) -> np.ndarray:
    if kspace.shape[-1] != mask.width:
        raise DimensionError(f"k-space width {kspace.shape[-1]} != mask width {mask.width}")
    return kspace * mask.columns


@dataclass
class SamplePair:
    gt: Tensor
    input: Tensor
    mask: SamplingMask


def zero_filled(gt, mask: SamplingMask) -> np.ndarray:
    """Complex zero-filled reconstruction from the masked k-space of ``gt``."""
    return from_kspace(apply_mask(to_kspace(gt), mask))


def make_pair(gt: Tensor, mask: SamplingMask) -> SamplePair:
    """Simulate acquisition: mask the centered k-space, invert, take magnitude."""
    if gt.ndim not in (2, 3):
        raise DimensionError(f"gt must be [H, W] or [1, H, W], got {gt.shape}")
    if gt.shape[-1] != mask.width:
        raise DimensionError(f"gt width {gt.shape[-1]} != mask width {mask.width}")
    if not np.all(np.isfinite(gt.data)):
        raise ContractError("gt contains non-finite values")
    data = gt.data if gt.ndim == 3 else gt.data[None]
    return SamplePair(Tensor(data.copy()), Tensor(np.abs(zero_filled(data, mask))), mask)
