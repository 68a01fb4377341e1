"""Oracle suites run by ``clgnet selfcheck``."""

import time
from contextlib import contextmanager
from typing import Callable, List, Tuple

import numpy as np

from . import spectral
from . import tensor as T
from .gradcheck import check_gradients
from .layers import NetConfig, sfl_layout, clgnet_forward, init_params, sfl_forward
from .spectral import dft2_oracle, dwt2, idwt2, irfft2, rfft2
from .tensor import Tensor, no_grad

SuiteResult = Tuple[str, bool, str]


def hermitian_weights(W: int) -> np.ndarray:
    """Multiplicity of each stored half-spectrum column in the full spectrum."""
    wts = np.full(W // 2 + 1, 2.0)
    wts[0] = 1.0
    if W % 2 == 0:
        wts[-1] = 1.0
    return wts


def half_spectrum_energy(x: np.ndarray) -> float:
    X = rfft2(Tensor(x)).to_complex()
    return float(np.sum(np.abs(X) ** 2 * hermitian_weights(x.shape[-1])))


@contextmanager
def corrupted_fft_normalization(factor: float = 2.0):
    """Negative-control hook: scale the forward FFT by ``factor``."""
    prev = spectral._forward_scale
    spectral._forward_scale = factor
    try:
        yield
    finally:
        spectral._forward_scale = prev


def suite_fft_oracle(rng) -> Tuple[bool, str]:
    worst = 0.0
    with no_grad():
        for m in range(1, 9):
            for n in range(1, 9):
                x = rng.standard_normal((m, n))
                fast = rfft2(Tensor(x)).to_complex()
                ref = dft2_oracle(x)[:, : n // 2 + 1]
                worst = max(worst, float(np.abs(fast - ref).max()))
    return worst < 1e-10, f"max abs err {worst:.2e} over sizes up to 8x8"


def suite_roundtrips(rng) -> Tuple[bool, str]:
    with no_grad():
        x = rng.standard_normal((2, 3, 16, 16))
        e_dwt = float(np.abs(idwt2(dwt2(Tensor(x))).data - x).max())
        y = rng.standard_normal((3, 8, 8))
        e_fft = float(np.abs(irfft2(rfft2(Tensor(y)), (8, 8)).data - y).max())
    ok = e_dwt < 1e-10 and e_fft < 1e-10
    return ok, f"dwt {e_dwt:.2e}, fft {e_fft:.2e}"


def suite_parseval(rng) -> Tuple[bool, str]:
    worst = 0.0
    with no_grad():
        for h, w in [(4, 4), (8, 8), (7, 5), (16, 9)]:
            x = rng.standard_normal((h, w))
            lhs = half_spectrum_energy(x)
            rhs = h * w * float(np.sum(x * x))
            worst = max(worst, abs(lhs - rhs) / rhs)
    return worst < 1e-10, f"max rel err {worst:.2e}"


def model_gradcheck(cfg: NetConfig = None, size: int = 16, seed: int = 0, n_coords: int = 10,
                    h: float = 1e-5, max_draws: int = 10):
    """Finite-difference check of every parameter tensor of a full network.

    The evaluation point (input image, projection, biases) is redrawn when
    some coordinate that had to be checked sits on a ReLU kink within the
    stencil.  Returns ``(report, draws_used)`` for the first kink-free point,
    or for the last point tried.
    """
    cfg = cfg or NetConfig.tiny()
    rng = np.random.default_rng(seed)
    report = None
    for draw in range(1, max_draws + 1):
        params = init_params(cfg, seed=int(rng.integers(1 << 30)))
        for t in params.tensors.values():
            # non-zero biases so every bias gradient is exercised off the kinks
            if t.ndim == 1:
                t.data[:] = rng.uniform(-0.05, 0.05, t.shape)
        x = Tensor(rng.random((1, 1, size, size)))
        proj = rng.standard_normal((1, 1, size, size))

        def loss():
            return T.sum(T.mul(clgnet_forward(x, params), proj))

        report = check_gradients(loss, params.tensors, n_coords=n_coords, h=h,
                                 seed=int(rng.integers(1 << 30)))
        if not report.kinked:
            break
    return report, draw


def suite_gradcheck(rng) -> Tuple[bool, str]:
    report, draws = model_gradcheck(seed=int(rng.integers(1 << 30)))
    ok = report.worst < 1e-3 and not report.kinked
    return ok, f"max rel err {report.worst:.2e} over {len(report.errors)} tensors ({draws} draw(s))"


def receptive_field_response(params, x: np.ndarray, delta: float = 1e-3) -> float:
    """|change of output[0,0]| when the far corner pixel is perturbed."""
    h, w = x.shape[-2:]
    with no_grad():
        base = sfl_forward(Tensor(x), params, "sfl").data
        bumped = x.copy()
        bumped[..., h - 1, w - 1] += delta
        moved = sfl_forward(Tensor(bumped), params, "sfl").data
    return float(np.abs(moved[..., 0, 0] - base[..., 0, 0]).max())


def single_sfl_params(channels: int, seed: int, global_branch: bool = True):
    rng = np.random.default_rng(seed)
    params = {}
    for path, shape in sfl_layout("sfl", channels, 3):
        if path.endswith(".weight"):
            bound = 1.0 / np.sqrt(np.prod(shape[1:]))
            params[path] = Tensor(rng.uniform(-bound, bound, shape))
        else:
            params[path] = Tensor(np.zeros(shape))
    if not global_branch:
        params["sfl.global.weight"].data[:] = 0.0
        params["sfl.global.bias"].data[:] = 0.0
    return params


def suite_receptive_field(rng) -> Tuple[bool, str]:
    x = rng.random((1, 1, 32, 32))
    full = receptive_field_response(single_sfl_params(1, 7), x)
    local = receptive_field_response(single_sfl_params(1, 7, global_branch=False), x)
    return full > 1e-12 and local == 0.0, f"with global branch {full:.2e}, conv-only {local:.1e}"


SUITES: List[Tuple[str, Callable]] = [
    ("fft-vs-dft-oracle", suite_fft_oracle),
    ("transform-roundtrips", suite_roundtrips),
    ("parseval", suite_parseval),
    ("tiny-model-gradcheck", suite_gradcheck),
    ("receptive-field", suite_receptive_field),
]


def run_selfcheck(seed: int = 0, corrupt_fft: bool = False, echo=print) -> List[SuiteResult]:
    results = []
    rng = np.random.default_rng(seed)
    for name, fn in SUITES:
        t0 = time.perf_counter()
        try:
            if corrupt_fft:
                with corrupted_fft_normalization():
                    ok, detail = fn(rng)
            else:
                ok, detail = fn(rng)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        if echo is not None:
            echo(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail} ({dt:.1f}s)")
        results.append((name, ok, detail))
    return results
