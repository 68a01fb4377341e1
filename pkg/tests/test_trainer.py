import warnings

import numpy as np
import pytest

from clgnet import tensor as T
from clgnet.checkpoint import checkpoint_roundtrip, load_checkpoint, save_checkpoint
from clgnet.dataset import build_pairs, generate_dataset, load_split, pair_from_bytes, pair_to_bytes, split_counts
from clgnet.errors import ContractError, IntegrityError, NumericError
from clgnet.layers import NetConfig, init_params
from clgnet.losses import PerceptualExtractor
from clgnet.metrics import psnr
from clgnet.trainer import (AdamState, TrainConfig, adam_step, draw_negatives, evaluate, read_log_csv, train,
                            write_eval_csv, write_log_csv)


@pytest.fixture(scope="module")
def pairs():
    return build_pairs(6, 32, 32, 4, 0.08, seed=0)


def small_cfg(**kw):
    base = dict(batch_size=4, steps=3, alpha=0.05, k=2, lr=1e-3, seed=7)
    base.update(kw)
    return TrainConfig(**base)


# -- Adam ----------------------------------------------------------------------

def scalar_params(values):
    p = init_params(NetConfig.tiny(), 0)
    p.tensors = {"w": T.Tensor(np.array(values, dtype=float), requires_grad=True)}
    return p


def test_adam_first_step_is_lr_sign():
    p = scalar_params([0.5, -1.0, 2.0])
    g = np.array([3.0, -0.2, 1e-3])
    s = AdamState.for_params(p, lr=1e-3)
    adam_step(p, {"w": g}, s)
    delta = p["w"].data - np.array([0.5, -1.0, 2.0])
    assert np.abs(delta + 1e-3 * np.sign(g)).max() < 1e-3 * 1e-4
    assert s.t == 1


def test_adam_zero_gradient_keeps_params():
    p = scalar_params([0.5, -1.0])
    s = AdamState.for_params(p)
    for _ in range(5):
        adam_step(p, {"w": np.zeros(2)}, s)
    assert p["w"].data.tolist() == [0.5, -1.0]
    assert s.t == 5


def test_adam_matches_scalar_recurrence():
    g, lr, b1, b2, eps = 0.7, 1e-2, 0.9, 0.999, 1e-8
    x, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    p = scalar_params([1.0])
    s = AdamState.for_params(p, lr=lr)
    adam_step(p, {"w": np.array([g])}, s)
    adam_step(p, {"w": np.array([g])}, s)
    assert p["w"].data[0] == pytest.approx(x, abs=1e-15)
    assert s.m["w"].shape == p["w"].shape == s.v["w"].shape


def test_adam_nan_names_layer():
    p = scalar_params([1.0])
    with pytest.raises(NumericError, match="'w'"):
        adam_step(p, {"w": np.array([np.nan])}, AdamState.for_params(p))


# -- negatives -----------------------------------------------------------------

def test_negatives_exclude_self():
    rng = np.random.default_rng(0)
    neg = draw_negatives(rng, 10, 6)
    assert neg.shape == (10, 6)
    for i, row in enumerate(neg):
        assert i not in row
        assert len(set(row.tolist())) == 6


def test_negatives_small_batch_warns():
    with pytest.warns(UserWarning):
        neg = draw_negatives(np.random.default_rng(0), 4, 6)
    assert all(i not in row for i, row in enumerate(neg))


# -- training ------------------------------------------------------------------

def test_zero_steps_keeps_init(pairs):
    res = train(NetConfig.tiny(), small_cfg(steps=0), pairs, model_seed=3)
    init = init_params(NetConfig.tiny(), 3)
    assert all(np.array_equal(res.params[k].data, init[k].data) for k in init)
    assert [r["step"] for r in res.log] == [0]


def test_training_is_deterministic(pairs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = train(NetConfig.tiny(), small_cfg(), pairs, model_seed=1)
        b = train(NetConfig.tiny(), small_cfg(), pairs, model_seed=1)
    assert a.log == b.log
    assert [r["step"] for r in a.log] == [0, 1, 2, 3]
    assert all(np.isfinite(r["total"]) for r in a.log)
    assert a.state.t == 3


def test_alpha_zero_total_equals_l1(pairs):
    res = train(NetConfig.tiny(), small_cfg(alpha=0.0, steps=1), pairs)
    for r in res.log:
        assert r["total"] == r["l1"] and r["contrastive"] > 0


def test_extractor_untouched_by_training(pairs):
    ex = PerceptualExtractor()
    before = [w.data.copy() for w in ex.weights]
    train(NetConfig.tiny(), small_cfg(steps=2), pairs, extractor=ex)
    assert all(np.array_equal(a, w.data) for a, w in zip(before, ex.weights))


def test_train_contract_errors(pairs):
    with pytest.raises(ContractError):
        train(NetConfig.tiny(), small_cfg(), [])
    with pytest.raises(ContractError):
        train(NetConfig.tiny(), small_cfg(batch_size=10), pairs)


def test_nonfinite_loss_reports_batch(pairs):
    p = init_params(NetConfig.tiny(), 0)
    p["out.bias"].data[:] = np.inf
    with pytest.raises(NumericError, match="batch indices"):
        train(NetConfig.tiny(), small_cfg(steps=1), pairs, params=p)


def test_log_csv_roundtrip(tmp_path, pairs):
    res = train(NetConfig.tiny(), small_cfg(steps=1), pairs)
    write_log_csv(tmp_path / "loss.csv", res.log)
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "step,l1,contrastive,total"
    assert read_log_csv(tmp_path / "loss.csv") == res.log


# -- evaluation ----------------------------------------------------------------

def test_evaluate_gt_as_output(pairs):
    rep = evaluate(None, pairs, outputs=[p.gt.data for p in pairs])
    assert all(r["nmse_model"] == 0.0 and r["ssim_model"] == 1.0 for r in rep["rows"])


def test_evaluate_zero_filled_and_means(pairs, tmp_path):
    rep = evaluate(init_params(NetConfig.tiny(), 0), pairs)
    for r, p in zip(rep["rows"], pairs):
        assert r["psnr_zf"] == psnr(p.input, p.gt)
    assert abs(rep["mean"]["psnr_model"] - np.mean([r["psnr_model"] for r in rep["rows"]])) < 1e-12
    write_eval_csv(tmp_path / "e.csv", rep)
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == \
        "index,nmse_model,psnr_model,ssim_model,nmse_zf,psnr_zf,ssim_zf"


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_roundtrip_bitwise(tmp_path, pairs):
    res = train(NetConfig.tiny(), small_cfg(steps=2), pairs)
    p, s = checkpoint_roundtrip(res.params, res.state, tmp_path / "c.clgc", step=2)
    for k in res.params:
        assert np.array_equal(p[k].data, res.params[k].data)
        assert np.array_equal(s.m[k], res.state.m[k]) and np.array_equal(s.v[k], res.state.v[k])
    assert s.hyper() == res.state.hyper()


def test_truncated_or_corrupt_checkpoint(tmp_path):
    p = init_params(NetConfig.tiny(), 0)
    path = tmp_path / "c.clgc"
    save_checkpoint(path, p, AdamState.for_params(p))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 100])
    with pytest.raises(IntegrityError):
        load_checkpoint(path)
    bad = bytearray(blob)
    bad[60] ^= 0xFF
    path.write_bytes(bytes(bad))
    with pytest.raises(IntegrityError):
        load_checkpoint(path)


def test_resume_reproduces_log(tmp_path, pairs):
    cfg = small_cfg(steps=4)
    full = train(NetConfig.tiny(), cfg, pairs, model_seed=2)
    half = train(NetConfig.tiny(), small_cfg(steps=2), pairs, model_seed=2)
    save_checkpoint(tmp_path / "c.clgc", half.params, half.state, step=2)
    p, s, header = load_checkpoint(tmp_path / "c.clgc")
    rest = train(NetConfig.tiny(), cfg, pairs, params=p, state=s, start_step=header["step"])
    assert half.log[:2] + rest.log == full.log[:2] + full.log[2:]
    assert rest.log == full.log[2:]


# -- dataset files -------------------------------------------------------------

def test_split_counts():
    assert split_counts(10) == (8, 2)
    assert split_counts(5) == (4, 1)


def test_pair_bytes_roundtrip(pairs):
    pair, header = pair_from_bytes(pair_to_bytes(pairs[0], {"index": 0}))
    assert np.array_equal(pair.gt.data, pairs[0].gt.data)
    assert np.array_equal(pair.input.data, pairs[0].input.data)
    assert np.array_equal(pair.mask.columns, pairs[0].mask.columns)
    assert [e["name"] for e in header["entries"]] == ["gt", "input", "mask"]


def test_generate_dataset_layout(tmp_path):
    out = tmp_path / "d"
    generate_dataset(out, 10, 32, 32, 4, 0.08, seed=1)
    assert len(list((out / "pairs" / "train").glob("*.clgt"))) == 8
    assert len(list((out / "pairs" / "val").glob("*.clgt"))) == 2
    mem = build_pairs(10, 32, 32, 4, 0.08, seed=1)
    disk = load_split(out, "train") + load_split(out, "val")
    assert all(np.array_equal(a.input.data, b.input.data) for a, b in zip(mem, disk))
    with pytest.raises(ContractError):
        generate_dataset(out, 10, 32, 32, 4, 0.08, seed=1)
    generate_dataset(out, 5, 32, 32, 4, 0.08, seed=1, force=True)
    assert len(list((out / "pairs").glob("*/*.clgt"))) == 5
