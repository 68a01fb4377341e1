"""
Minimal double-precision tensor library with tape-based reverse-mode autodiff.

Every differentiable operation appends one record to the active :class:`Tape`
when at least one of its inputs requires gradients.  Because records are
appended in execution order the tape is topologically sorted by construction,
and :func:`backward` simply walks it in reverse.

Broadcasting is deliberately limited to "same shape" or "one side is a
scalar"; anything else raises :class:`DimensionError`.
"""

import threading
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError, NumericError

Number = Union[int, float]


class Tensor:
    """N-d float64 array with optional gradient tracking."""

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; the functional forms below are the real API
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class _Record:
    __slots__ = ("name", "inputs", "outputs", "backward")

    def __init__(self, name, inputs, outputs, backward):
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Ordered log of executed differentiable operations."""

    def __init__(self):
        self.records: List[_Record] = []

    def __len__(self):
        return len(self.records)

    def record(self, name, inputs, outputs, backward) -> None:
        self.records.append(_Record(name, tuple(inputs), tuple(outputs), backward))

    def clear(self) -> None:
        self.records.clear()


_state = threading.local()


def get_tape() -> Tape:
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = _state.tape = Tape()
    return tape


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable recording for the enclosed block (evaluation, oracles)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _check_finite(arr: np.ndarray, name: str, what: str = "output") -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite {what} in op '{name}'")


def apply_op(
    name: str,
    inputs: Sequence[Tensor],
    outputs: Sequence[np.ndarray],
    backward: Callable,
) -> List[Tensor]:
    """Wrap raw output arrays as tensors and record the op if needed.

    ``backward`` receives one upstream gradient per output (zeros for outputs
    that did not reach the loss) and returns one gradient or ``None`` per input.
    """
    outs = []
    for arr in outputs:
        _check_finite(arr, name)
        outs.append(Tensor(arr))
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        for t in outs:
            t.requires_grad = True
        get_tape().record(name, inputs, outs, backward)
    return outs


def _unary(name, x, out, grad_fn):
    return apply_op(name, [x], [out], lambda g: (grad_fn(g),))[0]


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tracked tensor that ``loss`` depends on.

    Gradients accumulate (``+=``) into an existing ``.grad``.  The tape is
    cleared afterwards, also when an error interrupts the pass.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = get_tape()
    if len(tape) == 0:
        raise ContractError("backward() called on an empty tape")
    try:
        grads = {id(loss): np.ones_like(loss.data)}
        keep = {id(loss): loss}
        for rec in reversed(tape.records):
            gouts = [grads.pop(id(o), None) for o in rec.outputs]
            if all(g is None for g in gouts):
                continue
            gouts = [np.zeros_like(o.data) if g is None else g for o, g in zip(rec.outputs, gouts)]
            for o, g in zip(rec.outputs, gouts):
                o.grad = g if o.grad is None else o.grad + g
            gins = rec.backward(*gouts)
            for t, g in zip(rec.inputs, gins):
                if g is None or not t.requires_grad:
                    continue
                _check_finite(g, rec.name, "gradient")
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    keep[key] = t
        # whatever is left never appeared as a record output: leaves
        for key, g in grads.items():
            t = keep[key]
            t.grad = g.copy() if t.grad is None else t.grad + g
    finally:
        tape.clear()


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_pair(a: Tensor, b: Tensor, name: str):
    if a.shape == b.shape or b.size == 1 or a.size == 1:
        return
    raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.full(t.shape, g.sum())


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair(a, b, "add")
    out = a.data + b.data
    return apply_op("add", [a, b], [out], lambda g: (_reduce_to(g, a), _reduce_to(g, b)))[0]


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair(a, b, "sub")
    out = a.data - b.data
    return apply_op("sub", [a, b], [out], lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))[0]


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair(a, b, "mul")
    out = a.data * b.data
    return apply_op(
        "mul", [a, b], [out],
        lambda g: (_reduce_to(g * b.data, a), _reduce_to(g * a.data, b)),
    )[0]


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair(a, b, "div")
    if np.any(b.data == 0):
        raise NumericError("division by zero in op 'div'")
    out = a.data / b.data

    def grad(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _reduce_to(ga, a), _reduce_to(gb, b)

    return apply_op("div", [a, b], [out], grad)[0]


def scale(x: Tensor, c: Number) -> Tensor:
    c = float(c)
    return _unary("scale", x, x.data * c, lambda g: g * c)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _unary("relu", x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _unary("leaky_relu", x, x.data * factor, lambda g: g * factor)


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors the op name
    sign = np.sign(x.data)
    return _unary("abs", x, np.abs(x.data), lambda g: g * sign)


def elementwise(kind: str, a: Tensor, b=None, c: Optional[Number] = None) -> Tensor:
    """Dispatch by name: add, sub, mul, div, relu, leaky_relu, abs, scale."""
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    if kind in binary:
        if b is None:
            raise ContractError(f"elementwise '{kind}' needs two operands")
        return binary[kind](a, b)
    if kind == "relu":
        return relu(a)
    if kind == "leaky_relu":
        return leaky_relu(a, 0.2 if c is None else c)
    if kind == "abs":
        return abs(a)
    if kind == "scale":
        if c is None:
            raise ContractError("elementwise 'scale' needs a constant")
        return scale(a, c)
    raise ContractError(f"unknown elementwise kind '{kind}'")


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes)
    kept = x.data.sum(axis=axes, keepdims=True).shape

    def grad(g):
        return (np.broadcast_to(g.reshape(kept), x.shape).copy(),)

    return apply_op("sum", [x], [np.asarray(out, dtype=np.float64)], grad)[0]


def mean(x: Tensor, axis=None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axes), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _unary("reshape", x, out, lambda g: g.reshape(x.shape))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; gradient is split back into slices."""
    if len(parts) == 0:
        raise DimensionError("concat of an empty list")
    parts = [_as_tensor(p) for p in parts]
    ndim = parts[0].ndim
    ax = axis % ndim
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != ndim or any(p.shape[i] != ref[i] for i in range(ndim) if i != ax):
            raise DimensionError(f"concat: ragged shapes {[q.shape for q in parts]} along axis {axis}")
    if len(parts) == 1:
        return parts[0]
    out = np.concatenate([p.data for p in parts], axis=ax)
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]
    return apply_op("concat", parts, [out], lambda g: tuple(np.split(g, bounds, axis=ax)))[0]


def split(x: Tensor, sections: int, axis: int = 0) -> List[Tensor]:
    """Split into ``sections`` equal parts along ``axis``."""
    ax = axis % x.ndim
    if x.shape[ax] % sections:
        raise DimensionError(f"split: axis size {x.shape[ax]} not divisible by {sections}")
    pieces = [p.copy() for p in np.split(x.data, sections, axis=ax)]
    return apply_op("split", [x], pieces, lambda *gs: (np.concatenate(gs, axis=ax),))


def pad2d(x: Tensor, pads: Tuple[int, int, int, int]) -> Tensor:
    """Zero-pad the last two axes by (top, bottom, left, right)."""
    top, bottom, left, right = pads
    if min(pads) < 0:
        raise ConfigurationError(f"negative padding {pads}")
    width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    out = np.pad(x.data, width)
    h, w = x.shape[-2:]
    return _unary("pad2d", x, out, lambda g: g[..., top:top + h, left:left + w].copy())


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(f"avg_pool2d: spatial dims {(h, w)} not divisible by {k}")
    out = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def grad(g):
        return (np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k),)

    return apply_op("avg_pool2d", [x], [out], grad)[0]


def upsample_nearest2d(x: Tensor, k: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, k, axis=2), k, axis=3)

    def grad(g):
        return (g.reshape(n, c, h, k, w, k).sum(axis=(3, 5)),)

    return apply_op("upsample_nearest2d", [x], [out], grad)[0]


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation (no kernel flip) over NCHW input."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise DimensionError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"conv2d: kernel {kh}x{kw} must be odd-sized")
    if padding < 0 or stride < 1:
        raise ConfigurationError(f"conv2d: invalid stride {stride} / padding {padding}")
    span_h, span_w = h + 2 * padding - kh, w + 2 * padding - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ConfigurationError(
            f"conv2d: output size for input {(h, w)}, kernel {(kh, kw)}, "
            f"stride {stride}, padding {padding} is not a positive integer"
        )
    ho, wo = span_h // stride + 1, span_w // stride + 1

    # channel-first im2col: cols[(c, i, j), (n, y, x)]
    xt = x.data.transpose(1, 0, 2, 3)
    if padding:
        xt = np.pad(xt, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((cin, kh, kw, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    cols = cols.reshape(cin * kh * kw, n * ho * wo)
    wmat = weight.data.reshape(cout, -1)
    out = (wmat @ cols).reshape(cout, n, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None, None]
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def grad(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, -1)
        gw = (gt @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = gt.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ gt).reshape(cin, kh, kw, n, ho, wo)
            gxt = np.zeros(xt.shape)
            for i in range(kh):
                for j in range(kw):
                    gxt[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
            if padding:
                gxt = gxt[:, :, padding:padding + h, padding:padding + w]
            gx = np.ascontiguousarray(gxt.transpose(1, 0, 2, 3))
        return gx, gw, gb

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return apply_op("conv2d", inputs, [out], grad)[0]
