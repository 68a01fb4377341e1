"""
Differentiable 2-D real FFT and one-level orthonormal Haar DWT.

Normalization: the forward FFT is unnormalized, the inverse carries 1/(H*W).
The half spectrum of width ``W // 2 + 1`` is stored, as with any real FFT.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, apply_op

# Fault-injection hook used by the self-check negative control.
_forward_scale = 1.0


@dataclass
class ComplexGrid:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise DimensionError(f"re/im shape mismatch {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


@dataclass
class WaveletSubbands:
    LL: Tensor
    LH: Tensor
    HL: Tensor
    HH: Tensor

    def __post_init__(self):
        shapes = {b.shape for b in self.bands()}
        if len(shapes) != 1:
            raise DimensionError(f"ragged subbands {[b.shape for b in self.bands()]}")

    def bands(self):
        return (self.LL, self.LH, self.HL, self.HH)


def rfft2(x: Tensor) -> ComplexGrid:
    """Unnormalized real FFT over the last two axes."""
    if x.ndim < 2 or min(x.shape[-2:]) < 1:
        raise DimensionError(f"rfft2 needs at least 2 axes, got {x.shape}")
    h, w = x.shape[-2:]
    scale = _forward_scale
    freq = np.fft.rfft2(x.data) * scale

    def grad(g_re, g_im):
        full = np.zeros(x.shape, dtype=np.complex128)
        full[..., : freq.shape[-1]] = g_re + 1j * g_im
        return (np.fft.ifft2(full).real * (h * w * scale),)

    re, im = apply_op("rfft2", [x], [freq.real.copy(), freq.imag.copy()], grad)
    return ComplexGrid(re, im)


def irfft2(X: ComplexGrid, out_shape) -> Tensor:
    """Inverse of :func:`rfft2` with 1/(H*W) normalization."""
    h, w = out_shape
    if X.shape[-2:] != (h, w // 2 + 1):
        raise DimensionError(f"spectrum {X.shape[-2:]} inconsistent with output {(h, w)}")
    out = np.fft.irfft2(X.to_complex(), s=(h, w))
    weight = np.full(w // 2 + 1, 2.0)
    weight[0] = 1.0
    if w % 2 == 0:
        weight[-1] = 1.0

    def grad(g):
        back = np.fft.rfft2(g) * (weight / (h * w))
        return back.real.copy(), back.imag.copy()

    return apply_op("irfft2", [X.re, X.im], [out], grad)[0]


def dft2_oracle(x) -> np.ndarray:
    """Direct O((mn)^2) evaluation of the 2-D DFT double sum.

    Deliberately independent of ``numpy.fft``: plain loops over the spatial
    indices with explicit complex exponentials.  Returns the full complex grid.
    """
    f = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    m, n = f.shape
    out = np.zeros((m, n), dtype=np.complex128)
    xs = np.arange(m)[:, None]
    ys = np.arange(n)[None, :]
    for u in range(m):
        for v in range(n):
            phase = -2j * np.pi * (u * xs / m + v * ys / n)
            out[u, v] = np.sum(f * np.exp(phase))
    return out


def _haar_analysis(x: np.ndarray):
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a + b - c - d) * 0.5
    hl = (a - b + c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, lh, hl, hh


def _haar_synthesis(ll, lh, hl, hh) -> np.ndarray:
    h2, w2 = ll.shape[-2:]
    out = np.empty(ll.shape[:-2] + (2 * h2, 2 * w2))
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    out[..., 0::2, 1::2] = (ll + lh - hl - hh) * 0.5
    out[..., 1::2, 0::2] = (ll - lh + hl - hh) * 0.5
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return out


def dwt2(x: Tensor) -> WaveletSubbands:
    """One-level Haar analysis, applied independently per channel.

    LH carries vertical-direction detail (top row pair minus bottom row
    pair), HL horizontal-direction detail.
    """
    if x.ndim != 4:
        raise DimensionError(f"dwt2 expects NCHW, got {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"dwt2 needs even spatial dims, got {(h, w)}")
    bands = apply_op(
        "dwt2", [x], list(_haar_analysis(x.data)),
        lambda *gs: (_haar_synthesis(*gs),),
    )
    return WaveletSubbands(*bands)


def idwt2(s: WaveletSubbands) -> Tensor:
    """Exact Haar synthesis; the orthonormal filters make it the adjoint too."""
    bands = s.bands()
    out = _haar_synthesis(*(b.data for b in bands))
    return apply_op("idwt2", list(bands), [out], lambda g: _haar_analysis(g))[0]
