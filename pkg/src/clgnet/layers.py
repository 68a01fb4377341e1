"""
CLGNet: preprocessing convs, a wavelet branch and a spatial branch built from
Spatial-and-Fourier residual groups, fused by an output conv.

Parameters live in a flat mapping keyed by dotted layer paths such as
``wavelet.sfrir0.sfrb1.sfl0.local.weight``; every forward function takes the
mapping plus the prefix of the sub-module it evaluates.
"""

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Tuple

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .spectral import ComplexGrid, WaveletSubbands, dwt2, idwt2, irfft2, rfft2
from .tensor import Tensor

ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "relu": T.relu,
    "leaky_relu": T.leaky_relu,
}


@dataclass(frozen=True)
class NetConfig:
    base_channels: int = 32
    sfrir_count: int = 4
    sfrb_per_sfrir: int = 3
    kernel_size: int = 3
    activation: str = "relu"

    @classmethod
    def tiny(cls) -> "NetConfig":
        return cls(base_channels=4, sfrir_count=1, sfrb_per_sfrir=1)

    @classmethod
    def paper(cls) -> "NetConfig":
        return cls()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    """All learnable tensors of one network, in architecture order."""

    config: NetConfig
    seed: int
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, path: str) -> Tensor:
        return self.tensors[path]

    def __contains__(self, path: str) -> bool:
        return path in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config, self.seed,
            {k: Tensor(v.data.copy(), requires_grad=v.requires_grad) for k, v in self.tensors.items()},
        )

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None


# ---------------------------------------------------------------------------
# architecture layout
# ---------------------------------------------------------------------------

def _conv(prefix: str, cin: int, cout: int, k: int) -> List[Tuple[str, tuple]]:
    return [(f"{prefix}.weight", (cout, cin, k, k)), (f"{prefix}.bias", (cout,))]


def sfl_layout(prefix, c, k):
    return (
        _conv(f"{prefix}.local", c, c, k)
        + _conv(f"{prefix}.global", 2 * c, 2 * c, 1)
        + _conv(f"{prefix}.fuse", 2 * c, c, k)
    )


def _sfrb_layout(prefix, c, k):
    return sfl_layout(f"{prefix}.sfl0", c, k) + sfl_layout(f"{prefix}.sfl1", c, k)


def _sfrir_layout(prefix, c, k, blocks):
    out = []
    for b in range(blocks):
        out += _sfrb_layout(f"{prefix}.sfrb{b}", c, k)
    return out + _conv(f"{prefix}.tail", c, c, k)


def param_layout(cfg: NetConfig) -> List[Tuple[str, tuple]]:
    """(path, shape) for every parameter, in a fixed order."""
    c, k = cfg.base_channels, cfg.kernel_size
    layout = _conv("pre.conv0", 1, c, k) + _conv("pre.conv1", c, c, k)
    for i in range(cfg.sfrir_count):
        layout += _sfrir_layout(f"wavelet.sfrir{i}", 4 * c, k, cfg.sfrb_per_sfrir)
    layout += _conv("spatial.down", c, 4 * c, k)
    for i in range(cfg.sfrir_count):
        layout += _sfrir_layout(f"spatial.sfrir{i}", 4 * c, k, cfg.sfrb_per_sfrir)
    layout += _conv("spatial.up", 4 * c, c, k)
    layout += _conv("out", 2 * c, 1, k)
    return layout


def param_count(cfg: NetConfig) -> int:
    return int(sum(np.prod(shape) for _, shape in param_layout(cfg)))


def init_params(cfg: NetConfig, seed: int = 0) -> ModelParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for path, shape in param_layout(cfg):
        if path.endswith(".weight"):
            bound = 1.0 / np.sqrt(np.prod(shape[1:]))
            data = rng.uniform(-bound, bound, size=shape)
        else:
            data = np.zeros(shape)
        tensors[path] = Tensor(data, requires_grad=True)
    return ModelParams(cfg, seed, tensors)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _conv_apply(x: Tensor, params: Mapping[str, Tensor], prefix: str, stride=1, padding=None) -> Tensor:
    w = params[f"{prefix}.weight"]
    if w.shape[1] != x.shape[1]:
        raise DimensionError(f"{prefix}: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    if padding is None:
        padding = w.shape[-1] // 2
    return T.conv2d(x, w, params[f"{prefix}.bias"], stride=stride, padding=padding)


def _activation(params) -> Callable[[Tensor], Tensor]:
    cfg = getattr(params, "config", None)
    return ACTIVATIONS[cfg.activation if cfg is not None else "relu"]


def sfl_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str = "sfl") -> Tensor:
    """Spatial-and-Fourier layer.

    The local branch is a k x k conv; the global branch applies a 1x1 conv to
    the real FFT of the input (real and imaginary planes stacked as channels)
    and maps back with the inverse FFT.  A k x k conv fuses both branches.
    """
    act = _activation(params)
    h, w = x.shape[-2:]
    c = x.shape[1]
    local = act(_conv_apply(x, params, f"{prefix}.local"))

    freq = rfft2(x)
    z = act(_conv_apply(T.concat([freq.re, freq.im], axis=1), params, f"{prefix}.global"))
    re, im = T.split(z, 2, axis=1)
    glob = irfft2(ComplexGrid(re, im), (h, w))
    if glob.shape[1] != c:
        raise DimensionError(f"{prefix}: global branch produced {glob.shape[1]} channels, expected {c}")

    return _conv_apply(T.concat([local, glob], axis=1), params, f"{prefix}.fuse")


def sfrb_forward(x: Tensor, params, prefix: str = "sfrb") -> Tensor:
    y = sfl_forward(x, params, f"{prefix}.sfl0")
    y = sfl_forward(y, params, f"{prefix}.sfl1")
    return T.add(x, y)


def _block_count(params, prefix: str) -> int:
    n = 0
    while f"{prefix}.sfrb{n}.sfl0.local.weight" in params:
        n += 1
    return n


def sfrir_forward(x: Tensor, params, prefix: str = "sfrir") -> Tensor:
    """Residual-in-residual group: blocks, trailing conv, long skip."""
    y = x
    for b in range(_block_count(params, prefix)):
        y = sfrb_forward(y, params, f"{prefix}.sfrb{b}")
    return T.add(x, _conv_apply(y, params, f"{prefix}.tail"))


def _group_count(params, prefix: str) -> int:
    n = 0
    while f"{prefix}.sfrir{n}.tail.weight" in params:
        n += 1
    return n


def _check_even(x: Tensor, where: str) -> None:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"{where} needs even spatial dims, got {(h, w)}")


def wavelet_branch(F: Tensor, params, prefix: str = "wavelet") -> Tensor:
    """DWT, concatenate subbands, residual groups at 4C channels, IDWT."""
    _check_even(F, "wavelet_branch")
    sub = dwt2(F)
    y = T.concat(list(sub.bands()), axis=1)
    for i in range(_group_count(params, prefix)):
        y = sfrir_forward(y, params, f"{prefix}.sfrir{i}")
    return idwt2(WaveletSubbands(*T.split(y, 4, axis=1)))


def spatial_branch(F: Tensor, params, prefix: str = "spatial") -> Tensor:
    """Strided-conv downsample, residual groups, upsample + conv, skip add."""
    _check_even(F, "spatial_branch")
    # top/left padding only: a 3x3 stride-2 conv then lands exactly on H/2
    k = params[f"{prefix}.down.weight"].shape[-1]
    p = k // 2
    y = T.pad2d(F, (p, p - 1, p, p - 1)) if p else F
    y = _conv_apply(y, params, f"{prefix}.down", stride=2, padding=0)
    for i in range(_group_count(params, prefix)):
        y = sfrir_forward(y, params, f"{prefix}.sfrir{i}")
    y = _conv_apply(T.upsample_nearest2d(y, 2), params, f"{prefix}.up")
    return T.add(y, F)


def clgnet_forward(I: Tensor, params: ModelParams) -> Tensor:
    """Full network: magnitude image [N,1,H,W] -> reconstruction [N,1,H,W]."""
    if I.ndim != 4 or I.shape[1] != 1:
        raise DimensionError(f"clgnet_forward expects [N,1,H,W], got {I.shape}")
    _check_even(I, "clgnet_forward")
    act = _activation(params)
    F = act(_conv_apply(I, params, "pre.conv0"))
    F = act(_conv_apply(F, params, "pre.conv1"))
    o_w = wavelet_branch(F, params, "wavelet")
    o_s = spatial_branch(F, params, "spatial")
    return _conv_apply(T.concat([o_w, o_s], axis=1), params, "out")
