"""
Adam training loop for CLGNet under the L1 + contrastive objective,
plus evaluation against the zero-filled baseline.
"""

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, NumericError
from .layers import ModelParams, NetConfig, clgnet_forward, init_params
from .losses import PerceptualExtractor, perceptual_features, total_loss
from .metrics import nmse, psnr, ssim
from .mrisim import SamplePair
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "l1", "contrastive", "total")
EVAL_FIELDS = ("index", "nmse_model", "psnr_model", "ssim_model", "nmse_zf", "psnr_zf", "ssim_zf")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 1e-4, **kw) -> "AdamState":
        m = {k: np.zeros(p.shape) for k, p in params.items()}
        v = {k: np.zeros(p.shape) for k, p in params.items()}
        return cls(m, v, lr=lr, **kw)

    def hyper(self) -> dict:
        return {"t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(params: ModelParams, grads: Dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    for path, g in grads.items():
        if g.shape != params[path].shape:
            raise ContractError(f"gradient for {path} has shape {g.shape}, expected {params[path].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{path}'")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for path, g in grads.items():
        m = state.m[path]
        v = state.v[path]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p = params[path].data
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    batch_size: int = 10
    steps: int = 1000
    alpha: float = 0.05
    k: int = 6
    lr: float = 1e-4
    seed: int = 0
    eval_every: int = 0
    checkpoint_path: Optional[str] = None
    resample_masks: bool = False  # per-epoch mask resampling; unused by default


@dataclass
class TrainResult:
    params: ModelParams
    state: AdamState
    log: List[dict] = field(default_factory=list)


def stack_pairs(pairs: Sequence[SamplePair]):
    """Batch arrays ([N,1,H,W] inputs, [N,1,H,W] ground truths)."""
    inputs = np.stack([p.input.data.reshape((1,) + p.input.shape[-2:]) for p in pairs])
    gts = np.stack([p.gt.data.reshape((1,) + p.gt.shape[-2:]) for p in pairs])
    return inputs, gts


def draw_negatives(rng: np.random.Generator, batch_size: int, k: int) -> np.ndarray:
    """[batch, k] indices of other batch members serving as negatives."""
    others = batch_size - 1
    if others < 1:
        raise ContractError("contrastive negatives need a batch of at least 2")
    replace = others < k
    if replace:
        warnings.warn(f"batch of {batch_size} has fewer than k={k} other members; sampling with replacement")
    rows = []
    for i in range(batch_size):
        cand = np.delete(np.arange(batch_size), i)
        rows.append(rng.choice(cand, size=k, replace=replace))
    return np.asarray(rows)


def step_rng(seed: int, step: int) -> np.random.Generator:
    # stateless per step so a resumed run draws the same batches
    return np.random.default_rng([seed, step])


def _batch(tcfg: TrainConfig, n_data: int, step: int):
    rng = step_rng(tcfg.seed, step)
    idx = rng.choice(n_data, size=tcfg.batch_size, replace=False)
    neg = draw_negatives(rng, tcfg.batch_size, tcfg.k)
    return idx, neg


def batch_loss(params, inputs, gts, neg_idx, alpha, extractor):
    """Forward + objective for one batch; negatives are the batch's own inputs."""
    out = clgnet_forward(Tensor(inputs), params)
    with no_grad():
        feats_in = perceptual_features(Tensor(inputs), extractor)
    neg_feats = [[f.data[neg_idx[:, k]] for k in range(neg_idx.shape[1])] for f in feats_in]
    return total_loss(out, Tensor(gts), None, alpha, extractor, negative_features=neg_feats)


def _log_row(step, report) -> dict:
    return {"step": step, "l1": report.l1, "contrastive": report.contrastive, "total": report.total}


def train(
    model_cfg: NetConfig,
    train_cfg: TrainConfig,
    dataset: Sequence[SamplePair],
    params: Optional[ModelParams] = None,
    state: Optional[AdamState] = None,
    extractor: Optional[PerceptualExtractor] = None,
    model_seed: int = 0,
    start_step: int = 0,
    callback=None,
) -> TrainResult:
    """Run steps ``start_step .. train_cfg.steps - 1``.

    The log holds one row per step with the loss of the parameters *before*
    that step's update, plus a final row at ``steps`` measured on the
    finished parameters.  A run resumed from step s therefore repeats row s
    of the uninterrupted log and continues it exactly.
    """
    if len(dataset) == 0:
        raise ContractError("training dataset is empty")
    if train_cfg.batch_size > len(dataset):
        raise ContractError(f"batch_size {train_cfg.batch_size} exceeds dataset size {len(dataset)}")
    if params is None:
        params = init_params(model_cfg, model_seed)
    if state is None:
        state = AdamState.for_params(params, lr=train_cfg.lr)
    extractor = extractor or PerceptualExtractor()
    inputs_all, gts_all = stack_pairs(dataset)
    rows = []
    for step in range(start_step, train_cfg.steps + 1):
        idx, neg = _batch(train_cfg, len(dataset), step)
        final = step == train_cfg.steps
        try:
            if final:
                with no_grad():
                    report = batch_loss(params, inputs_all[idx], gts_all[idx], neg, train_cfg.alpha, extractor)
            else:
                params.zero_grad()
                report = batch_loss(params, inputs_all[idx], gts_all[idx], neg, train_cfg.alpha, extractor)
                T.backward(report.loss)
                adam_step(params, {k: p.grad for k, p in params.items()}, state)
        except NumericError as exc:
            T.get_tape().clear()
            raise NumericError(f"step {step}, batch indices {idx.tolist()}: {exc}") from exc
        row = _log_row(step, report)
        rows.append(row)
        if callback is not None:
            callback(step, row, params, state)
        if step % 100 == 0 or final:
            log.info("step %d  l1 %.5f  cl %.5f  total %.5f", step, report.l1, report.contrastive, report.total)
    params.zero_grad()
    return TrainResult(params, state, rows)


def write_log_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])


def read_log_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [
            {"step": int(r["step"]), **{k: float(r[k]) for k in LOG_FIELDS[1:]}}
            for r in csv.DictReader(fh)
        ]


def predict(params: ModelParams, inputs: np.ndarray, chunk: int = 8) -> np.ndarray:
    outs = []
    with no_grad():
        for s in range(0, len(inputs), chunk):
            outs.append(clgnet_forward(Tensor(inputs[s:s + chunk]), params).data)
    return np.concatenate(outs)


def evaluate(params: Optional[ModelParams], dataset: Sequence[SamplePair], outputs=None) -> dict:
    """Per-image and mean NMSE / PSNR / SSIM for the model and zero-filling.

    ``outputs`` may be given instead of ``params`` to score arbitrary
    reconstructions (e.g. the ground truth itself).
    """
    if len(dataset) == 0:
        raise ContractError("evaluation dataset is empty")
    inputs, gts = stack_pairs(dataset)
    if outputs is None:
        outputs = predict(params, inputs)
    rows = []
    for i in range(len(dataset)):
        gt, zf = gts[i, 0], inputs[i, 0]
        out = np.asarray(outputs[i]).reshape(gt.shape)
        rows.append({
            "index": i,
            "nmse_model": nmse(out, gt), "psnr_model": psnr(out, gt), "ssim_model": ssim(out, gt),
            "nmse_zf": nmse(zf, gt), "psnr_zf": psnr(zf, gt), "ssim_zf": ssim(zf, gt),
        })
    mean = {k: float(np.mean([r[k] for r in rows])) for k in EVAL_FIELDS[1:]}
    return {"rows": rows, "mean": mean, "outputs": outputs}


def write_eval_csv(path, report: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_FIELDS)
        for r in report["rows"]:
            w.writerow([r["index"]] + [repr(float(r[k])) for k in EVAL_FIELDS[1:]])
