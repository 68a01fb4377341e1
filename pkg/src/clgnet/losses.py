"""
Training objective: L1 reconstruction term plus a contrastive term that pulls
the reconstruction towards the ground truth and away from undersampled
negatives in the feature space of a frozen conv stack.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor, no_grad

DEFAULT_LAYER_WEIGHTS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)
DENOMINATOR_EPS = 1e-8


class PerceptualExtractor:
    """Frozen, seeded stack of (3x3 conv, ReLU, 2x average pool) stages.

    Stands in for a pretrained classification backbone.  Weights are drawn
    once from ``seed`` with He-uniform scaling and never receive updates;
    gradients still flow through to the input image.
    """

    def __init__(self, channels: Sequence[int] = (8, 16, 16, 32, 32), seed: int = 1234):
        self.channels = tuple(channels)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        cin = 1
        for cout in self.channels:
            bound = np.sqrt(6.0 / (cin * 9))
            self.weights.append(Tensor(rng.uniform(-bound, bound, size=(cout, cin, 3, 3))))
            self.biases.append(Tensor(np.zeros(cout)))
            cin = cout

    @property
    def depth(self) -> int:
        return len(self.channels)

    def __call__(self, x: Tensor) -> List[Tensor]:
        return perceptual_features(x, self)


def perceptual_features(x: Tensor, extractor: PerceptualExtractor) -> List[Tensor]:
    """Per-stage features; stage j has spatial size (H / 2^j, W / 2^j)."""
    h, w = x.shape[-2:]
    step = 2 ** extractor.depth
    if h % step or w % step:
        raise DimensionError(f"input {(h, w)} not divisible by 2^{extractor.depth}")
    feats = []
    y = x
    for wt, b in zip(extractor.weights, extractor.biases):
        y = T.avg_pool2d(T.relu(T.conv2d(y, wt, b, padding=1)), 2)
        feats.append(y)
    return feats


def l1_loss(O: Tensor, GT: Tensor) -> Tensor:
    if O.shape != GT.shape:
        raise DimensionError(f"l1_loss: shapes {O.shape} and {GT.shape} differ")
    return T.mean(T.abs(T.sub(O, GT)))


def _sample_distance(a: Tensor, b) -> Tensor:
    """Mean absolute difference per sample -> shape [N]."""
    return T.mean(T.abs(T.sub(a, b)), axis=tuple(range(1, a.ndim)))


def contrastive_from_features(
    feats_out: Sequence[Tensor],
    feats_pos: Sequence,
    feats_neg: Sequence[Sequence],
    layer_weights: Sequence[float] = DEFAULT_LAYER_WEIGHTS,
    eps: float = DENOMINATOR_EPS,
):
    """Weighted ratio of positive to summed negative feature distances.

    ``feats_neg[j][k]`` is the k-th negative at layer j, shaped like
    ``feats_out[j]`` (row i is the negative paired with sample i).
    Returns ``(loss, per_layer_ratios)``; the loss is averaged over samples.
    """
    if len(layer_weights) != len(feats_out):
        raise ContractError(f"{len(layer_weights)} layer weights for {len(feats_out)} layers")
    total = None
    ratios = []
    for lam, fo, fp, fnegs in zip(layer_weights, feats_out, feats_pos, feats_neg):
        if len(fnegs) == 0:
            raise ContractError("contrastive loss needs at least one negative")
        num = _sample_distance(fo, fp)
        den = _sample_distance(fo, fnegs[0])
        for fn in fnegs[1:]:
            den = T.add(den, _sample_distance(fo, fn))
        ratio = T.div(num, T.add(den, eps))
        ratios.append(float(ratio.data.mean()))
        term = T.scale(T.mean(ratio), lam)
        total = term if total is None else T.add(total, term)
    return total, ratios


def _detached(x) -> Tensor:
    return Tensor(x.data if isinstance(x, Tensor) else x)


def contrastive_loss(
    O: Tensor,
    GT: Tensor,
    negatives: Sequence[Tensor],
    extractor: PerceptualExtractor,
    layer_weights: Sequence[float] = DEFAULT_LAYER_WEIGHTS,
    eps: float = DENOMINATOR_EPS,
) -> Tensor:
    """Contrastive term for a batch; each negative is shaped like ``O``.

    Only ``O`` receives gradient: positives and negatives are detached.
    """
    if len(negatives) == 0:
        raise ContractError("contrastive loss needs at least one negative")
    if GT.shape != O.shape or any(n.shape != O.shape for n in negatives):
        raise DimensionError("contrastive_loss: GT and negatives must match the output shape")
    feats_out = perceptual_features(O, extractor)
    with no_grad():
        feats_pos = perceptual_features(_detached(GT), extractor)
        per_neg = [perceptual_features(_detached(n), extractor) for n in negatives]
    feats_neg = [[f[j] for f in per_neg] for j in range(extractor.depth)]
    loss, _ = contrastive_from_features(feats_out, feats_pos, feats_neg, layer_weights, eps)
    return loss


@dataclass
class LossReport:
    l1: float
    contrastive: float
    total: float
    per_layer_ratios: List[float] = field(default_factory=list)
    loss: Optional[Tensor] = None  # differentiable total, for backward()


def combine(l1: float, contrastive: float, alpha: float) -> float:
    return l1 + alpha * contrastive


def total_loss(
    O: Tensor,
    GT: Tensor,
    negatives: Optional[Sequence[Tensor]],
    alpha: float,
    extractor: PerceptualExtractor,
    layer_weights: Sequence[float] = DEFAULT_LAYER_WEIGHTS,
    negative_features: Optional[Sequence[Sequence]] = None,
) -> LossReport:
    """``l1 + alpha * contrastive``.

    Negatives are given either as images (``negatives``) or as precomputed
    per-layer features (``negative_features[j][k]``), which the trainer uses
    to run the extractor once per batch instead of once per negative.
    """
    l1 = l1_loss(O, GT)
    feats_out = perceptual_features(O, extractor)
    with no_grad():
        feats_pos = perceptual_features(_detached(GT), extractor)
        if negative_features is None:
            if not negatives:
                raise ContractError("total_loss needs negatives or negative_features")
            per_neg = [perceptual_features(_detached(n), extractor) for n in negatives]
            negative_features = [[f[j] for f in per_neg] for j in range(extractor.depth)]
    cl, ratios = contrastive_from_features(feats_out, feats_pos, negative_features, layer_weights)
    loss = T.add(l1, T.scale(cl, alpha))
    return LossReport(
        l1=l1.item(),
        contrastive=cl.item(),
        total=loss.item(),
        per_layer_ratios=ratios,
        loss=loss,
    )
