import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clgnet.errors import ContractError
from clgnet.metrics import nmse, psnr, ssim
from clgnet.mrisim import cartesian_mask, make_pair, phantom

C1 = (0.01 * 1.0) ** 2


def rand(seed, shape=(16, 16)):
    return np.random.default_rng(seed).random(shape)


def test_nmse_values():
    x = rand(0)
    assert nmse(x, x) == 0.0
    assert nmse(np.full((4, 4), 1.1), np.ones((4, 4))) == pytest.approx(0.01, rel=1e-12)


@given(st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
@settings(max_examples=30)
def test_nmse_scale_invariant(c):
    x, r = rand(1), rand(2)
    assert nmse(c * x, c * r) == pytest.approx(nmse(x, r), rel=1e-12)


def test_nmse_zero_reference():
    with pytest.raises(ContractError):
        nmse(np.ones((4, 4)), np.zeros((4, 4)))


def test_psnr_values():
    x = rand(3)
    assert psnr(x, x) == float("inf")
    assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-9)


def test_psnr_matches_independent_mse():
    x, r = rand(4), rand(5)
    mse = sum((a - b) ** 2 for a, b in zip(x.ravel().tolist(), r.ravel().tolist())) / x.size
    assert abs(psnr(x, r) - 10 * np.log10(1.0 / mse)) < 1e-10


def test_psnr_decreases_with_error():
    r = rand(6)
    vals = [psnr(r + e, r) for e in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_ssim_identity_and_symmetry():
    x, r = rand(7), rand(8)
    assert ssim(x, x) == 1.0
    assert ssim(x, r) == ssim(r, x)


@pytest.mark.parametrize("c1,c2", [(0.2, 0.7), (0.5, 0.5), (0.0, 0.9)])
def test_ssim_constant_images(c1, c2):
    got = ssim(np.full((10, 12), c1), np.full((10, 12), c2))
    assert got == pytest.approx((2 * c1 * c2 + C1) / (c1 ** 2 + c2 ** 2 + C1), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(ContractError):
        ssim(np.ones((6, 6)), np.ones((6, 6)))


def test_ssim_bounds_on_reconstructions():
    for s in range(5):
        p = make_pair(phantom(64, 64, variant_seed=s), cartesian_mask(64, 4, 0.08, s))
        v = ssim(p.input, p.gt)
        assert 0.0 <= v <= 1.0
        assert nmse(p.input, p.gt) >= 0
