import numpy as np
import pytest

from clgnet import tensor as T
from clgnet.errors import DimensionError
from clgnet.gradcheck import check_gradients
from clgnet.layers import (NetConfig, clgnet_forward, init_params, param_count, param_layout,
                           sfl_forward, sfrb_forward, sfrir_forward, spatial_branch, wavelet_branch)
from clgnet.selfcheck import model_gradcheck, receptive_field_response, single_sfl_params
from clgnet.tensor import Tensor, no_grad

# recorded once from param_count(NetConfig()) and cross-checked by the
# closed-form count below
DEFAULT_PARAM_COUNT = 25_668_673
TINY_PARAM_COUNT = 38_073


def conv_count(cin, cout, k):
    return cout * cin * k * k + cout


def closed_form_count(C, groups, blocks, k=3):
    c4 = 4 * C
    sfl4 = conv_count(c4, c4, k) + conv_count(2 * c4, 2 * c4, 1) + conv_count(2 * c4, c4, k)
    sfrir4 = blocks * 2 * sfl4 + conv_count(c4, c4, k)
    return (conv_count(1, C, k) + conv_count(C, C, k) + 2 * groups * sfrir4
            + conv_count(C, c4, k) + conv_count(c4, C, k) + conv_count(2 * C, 1, k))


def zeroed(params):
    for t in params.tensors.values():
        t.data[:] = 0.0
    return params


def random_params(cfg, seed, bias_scale=0.05):
    p = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    for t in p.tensors.values():
        if t.ndim == 1:
            t.data[:] = rng.uniform(-bias_scale, bias_scale, t.shape)
    return p


# -- params ------------------------------------------------------------------

def test_param_counts():
    assert param_count(NetConfig()) == DEFAULT_PARAM_COUNT
    assert param_count(NetConfig.tiny()) == TINY_PARAM_COUNT
    assert closed_form_count(32, 4, 3) == DEFAULT_PARAM_COUNT
    assert closed_form_count(4, 1, 1) == TINY_PARAM_COUNT


def test_layout_paths_unique_and_complete():
    cfg = NetConfig(base_channels=2, sfrir_count=2, sfrb_per_sfrir=2)
    paths = [p for p, _ in param_layout(cfg)]
    assert len(paths) == len(set(paths))
    p = init_params(cfg, 0)
    assert list(p) == paths
    assert "wavelet.sfrir1.sfrb1.sfl0.local.weight" in p
    assert p.count() == param_count(cfg)


def test_sfrb_count_difference():
    a = param_count(NetConfig(base_channels=4, sfrir_count=1, sfrb_per_sfrir=3))
    b = param_count(NetConfig(base_channels=4, sfrir_count=1, sfrb_per_sfrir=1))
    c = 16
    sfl = conv_count(c, c, 3) + conv_count(2 * c, 2 * c, 1) + conv_count(2 * c, c, 3)
    # two branches, each loses two SFRBs of two SFLs
    assert a - b == 2 * 2 * 2 * sfl


def test_init_deterministic_and_biases_zero():
    a, b = init_params(NetConfig.tiny(), 5), init_params(NetConfig.tiny(), 5)
    for k in a:
        assert np.array_equal(a[k].data, b[k].data)
        if k.endswith(".bias"):
            assert not a[k].data.any()
    c = init_params(NetConfig.tiny(), 6)
    assert not np.array_equal(a["out.weight"].data, c["out.weight"].data)


def test_init_weight_mean_within_three_sigma():
    p = init_params(NetConfig.tiny(), 0)
    w = p["wavelet.sfrir0.sfrb0.sfl0.local.weight"].data  # 16*16*9 = 2304 draws
    draws = np.concatenate([p[k].data.ravel() * np.sqrt(np.prod(p[k].shape[1:]))
                            for k in p if k.endswith(".weight")])
    # rescaled to U(-1, 1): variance 1/3
    assert draws.size >= 10_000
    assert abs(draws.mean()) < 3 * np.sqrt(1 / 3 / draws.size)
    assert np.abs(w).max() <= 1 / np.sqrt(16 * 9)


# -- SFL / SFRB / SFRIR ------------------------------------------------------

def test_sfl_zero_weights_is_zero():
    p = single_sfl_params(3, 0)
    for t in p.values():
        t.data[:] = 0.0
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 8, 8)))
    assert not sfl_forward(x, p, "sfl").data.any()


@pytest.mark.parametrize("size", [8, 16, 17, 32])
def test_sfl_shape(size):
    p = single_sfl_params(2, 1)
    x = Tensor(np.random.default_rng(size).standard_normal((1, 2, size, size)))
    assert sfl_forward(x, p, "sfl").shape == (1, 2, size, size)


def test_sfl_channel_mismatch():
    with pytest.raises(DimensionError):
        sfl_forward(Tensor(np.zeros((1, 3, 8, 8))), single_sfl_params(2, 0), "sfl")


def test_receptive_field_witness():
    x = np.random.default_rng(2).random((1, 1, 32, 32))
    assert receptive_field_response(single_sfl_params(1, 3), x) > 1e-12
    assert receptive_field_response(single_sfl_params(1, 3, global_branch=False), x) == 0.0


def _block_params(prefix, c, blocks=1):
    cfg = NetConfig(base_channels=c, sfrir_count=1, sfrb_per_sfrir=blocks)
    full = random_params(cfg, 11)
    # re-key the wavelet group (4C channels) under ``prefix``
    return {k.replace("wavelet.sfrir0", prefix): v for k, v in full.items() if k.startswith("wavelet.sfrir0")}


def test_sfrb_and_sfrir_identity_with_zero_weights():
    p = _block_params("g", 1, blocks=2)
    for t in p.values():
        t.data[:] = 0.0
    x = np.random.default_rng(3).standard_normal((2, 4, 8, 8))
    assert np.array_equal(sfrb_forward(Tensor(x), p, "g.sfrb0").data, x)
    assert np.array_equal(sfrir_forward(Tensor(x), p, "g").data, x)


def test_sfrb_gradcheck():
    p = _block_params("g", 1)
    x = Tensor(np.random.default_rng(4).standard_normal((1, 4, 8, 8)))
    proj = Tensor(np.random.default_rng(5).standard_normal((1, 4, 8, 8)))
    tensors = {k: v for k, v in p.items() if ".sfrb0." in k}
    tensors["x"] = x
    rep = check_gradients(lambda: T.sum(T.mul(sfrb_forward(x, p, "g.sfrb0"), proj)), tensors, seed=1)
    assert rep.kinked == []
    assert rep.worst < 1e-5


def test_sfrir_gradcheck():
    p = _block_params("g", 1)
    x = Tensor(np.random.default_rng(6).standard_normal((1, 4, 8, 8)))
    proj = Tensor(np.random.default_rng(7).standard_normal((1, 4, 8, 8)))
    rep = check_gradients(lambda: T.sum(T.mul(sfrir_forward(x, p, "g"), proj)), dict(p), seed=2)
    assert rep.kinked == []
    assert rep.worst < 1e-5


# -- branches and the full network -------------------------------------------

def test_branches_identity_with_zero_weights():
    p = zeroed(init_params(NetConfig(base_channels=2, sfrir_count=1, sfrb_per_sfrir=1), 0))
    F = np.random.default_rng(8).standard_normal((1, 2, 8, 8))
    assert np.abs(wavelet_branch(Tensor(F), p).data - F).max() < 1e-12
    assert np.array_equal(spatial_branch(Tensor(F), p).data, F)


def test_spatial_branch_halves_resolution():
    cfg = NetConfig(base_channels=2, sfrir_count=1, sfrb_per_sfrir=1)
    p = init_params(cfg, 0)
    seen = []
    orig = T.upsample_nearest2d

    def spy(x, k=2):
        seen.append(x.shape)
        return orig(x, k)

    T.upsample_nearest2d = spy
    try:
        with no_grad():
            spatial_branch(Tensor(np.zeros((1, 2, 12, 20))), p)
    finally:
        T.upsample_nearest2d = orig
    assert seen == [(1, 8, 6, 10)]


def test_branches_reject_odd():
    p = init_params(NetConfig(base_channels=2, sfrir_count=1, sfrb_per_sfrir=1), 0)
    with pytest.raises(DimensionError):
        wavelet_branch(Tensor(np.zeros((1, 2, 7, 8))), p)
    with pytest.raises(DimensionError):
        spatial_branch(Tensor(np.zeros((1, 2, 8, 9))), p)


@pytest.mark.parametrize("branch", [wavelet_branch, spatial_branch])
def test_branch_gradcheck(branch):
    cfg = NetConfig(base_channels=2, sfrir_count=1, sfrb_per_sfrir=1)
    p = random_params(cfg, 12)
    prefix = branch.__name__.split("_")[0]
    F = Tensor(np.random.default_rng(9).standard_normal((1, 2, 8, 8)))
    proj = Tensor(np.random.default_rng(10).standard_normal((1, 2, 8, 8)))
    tensors = {k: v for k, v in p.items() if k.startswith(prefix)}
    tensors["F"] = F
    rep = check_gradients(lambda: T.sum(T.mul(branch(F, p), proj)), tensors, seed=3)
    assert rep.kinked == []
    assert rep.worst < 1e-4


@pytest.mark.parametrize("size", [64, 96])
def test_clgnet_shape(size):
    p = init_params(NetConfig.tiny(), 0)
    with no_grad():
        y = clgnet_forward(Tensor(np.random.default_rng(0).random((1, 1, size, size))), p)
    assert y.shape == (1, 1, size, size)


def test_clgnet_zero_weights_is_final_bias():
    p = zeroed(init_params(NetConfig.tiny(), 0))
    p["out.bias"].data[:] = 0.37
    with no_grad():
        y = clgnet_forward(Tensor(np.random.default_rng(1).random((2, 1, 16, 16))), p)
    assert np.array_equal(y.data, np.full((2, 1, 16, 16), 0.37))


def test_clgnet_input_errors():
    p = init_params(NetConfig.tiny(), 0)
    with pytest.raises(DimensionError):
        clgnet_forward(Tensor(np.zeros((1, 1, 15, 16))), p)
    with pytest.raises(DimensionError):
        clgnet_forward(Tensor(np.zeros((1, 2, 16, 16))), p)


def test_full_model_gradcheck():
    report, draws = model_gradcheck(NetConfig.tiny(), size=16, seed=0, n_coords=10, h=1e-5)
    assert report.kinked == []
    assert len(report.errors) == len(param_layout(NetConfig.tiny()))
    assert report.worst < 1e-3
