"""Central-difference gradient oracle and an autodiff-vs-oracle comparator."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def finite_diff_grad(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    ``indices`` restricts the evaluation to a subset of flat coordinates;
    the other entries of the returned array are left at zero.  ``x`` is
    perturbed in place and restored bit-for-bit.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape)
    coords = range(flat.size) if indices is None else indices
    with no_grad():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(x).data.sum())
            flat[i] = orig - h
            fm = float(f(x).data.sum())
            flat[i] = orig
            grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    """``|a - b| / max(|a|, |b|, floor)`` elementwise."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    kinked: List[str] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def _probe(f, flat, i, h):
    """Central differences at h and h/2 plus one-sided differences at h."""
    orig = flat[i]
    vals = {}
    for step in (h, -h, h / 2, -h / 2, 0.0):
        flat[i] = orig + step
        vals[step] = float(f().data.sum())
    flat[i] = orig
    central = (vals[h] - vals[-h]) / (2 * h)
    half = (vals[h / 2] - vals[-h / 2]) / h
    fwd = (vals[h] - vals[0.0]) / h
    bwd = (vals[0.0] - vals[-h]) / h
    return central, max(abs(central - half), abs(fwd - bwd))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    n_coords: Optional[int] = 10,
    h: float = 1e-5,
    seed: int = 0,
    rel_floor: float = 1e-4,
    smooth_tol: float = 1e-3,
    max_tries: int = 5,
) -> "GradCheckReport":
    """Compare autodiff against central differences for each named tensor.

    ``loss_fn`` rebuilds the scalar loss from the current tensor values.
    For each tensor, ``n_coords`` random flat coordinates are checked (all of
    them when ``n_coords`` is None).  Returns the worst relative error
    ``|a - n| / max(|a|, |n|, rel_floor * max|a|)`` per tensor.

    A coordinate whose central difference changes between steps ``h`` and
    ``h / 2``, or whose forward and backward differences disagree, by more
    than ``smooth_tol`` (relative) has a ReLU kink inside the stencil; it
    is replaced by another random coordinate, at most ``max_tries`` times
    per slot.  Tensors where a kinked coordinate had to
    be checked anyway are listed in ``report.kinked`` so callers can draw a
    new evaluation point.
    """
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.requires_grad = True
        t.grad = None
    backward(loss_fn())
    report = GradCheckReport()
    with no_grad():
        for name, t in tensors.items():
            auto = t.grad.reshape(-1)
            floor = max(rel_floor * float(np.abs(auto).max()), 1e-12)
            flat = t.data.reshape(-1)
            if n_coords is None or n_coords >= t.size:
                slots = [[i] for i in range(t.size)]
                spare = []
            else:
                order = rng.permutation(t.size)
                slots = [[i] for i in order[:n_coords]]
                spare = list(order[n_coords:])
            worst = 0.0
            for slot in slots:
                i = slot[0]
                for attempt in range(max_tries + 1):
                    n1, spread = _probe(loss_fn, flat, i, h)
                    smooth = spread <= smooth_tol * max(abs(n1), floor)
                    if smooth or attempt == max_tries or not spare:
                        break
                    i = spare.pop()
                if not smooth:
                    report.kinked.append(name)
                err = abs(auto[i] - n1) / max(abs(auto[i]), abs(n1), floor)
                worst = max(worst, err)
            report.errors[name] = float(worst)
    return report
