"""Training losses: weighted L1 plus a frozen-feature perceptual proxy."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor


def weighted_l1(target: Tensor, pred: Tensor, weights: Tensor) -> Tensor:
    """Mean over all pixels of w * |target - pred| (normalized by pixel count,
    not by the weight sum)."""
    if target.shape != pred.shape:
        raise ContractError(f"weighted_l1 shapes differ: {target.shape} vs {pred.shape}")
    return T.mean(T.mul(weights, T.absolute(T.sub(target, pred))))


class PerceptualProxy:
    """Multi-scale structural distance through a frozen random conv stack.

    Three stages of (conv3x3, relu, 2x pool) with seed-fixed He-normal
    weights; the loss is the sum over stages of the mean squared feature
    difference.  Stands in for a pretrained-feature perceptual metric while
    keeping the whole loss self-contained and gradient-checkable.  Swap in
    real pretrained features by passing explicit ``stage_weights``.
    """

    def __init__(self, seed: int = 1234, channels=(8, 16, 32), stage_weights=None):
        self.channels = tuple(channels)
        if stage_weights is not None:
            self._weights = [Tensor(np.asarray(w, np.float32)) for w in stage_weights]
            return
        rng = np.random.default_rng(seed)
        self._weights = []
        in_c = 3
        for out_c in self.channels:
            std = np.sqrt(2.0 / (in_c * 9))
            w = rng.normal(0.0, std, (out_c, in_c, 3, 3)).astype(np.float32)
            self._weights.append(Tensor(w))
            in_c = out_c

    def _features(self, x: Tensor) -> list[Tensor]:
        feats = []
        for w in self._weights:
            x = T.avg_pool2(T.relu(T.conv2d(x, Tensor(w.data), padding=1)))
            feats.append(x)
        return feats

    def __call__(self, target: Tensor, pred: Tensor) -> Tensor:
        if target.shape != pred.shape:
            raise ContractError("perceptual proxy inputs must share a shape")
        h, w = target.shape[-2:]
        if h % 8 or w % 8:
            raise ContractError(f"proxy needs dims divisible by 8, got {h}x{w}")
        loss = None
        for ft, fp in zip(self._features(target), self._features(pred)):
            d = T.sub(ft, fp)
            term = T.mean(T.mul(d, d))
            loss = term if loss is None else T.add(loss, term)
        return loss


def total_loss(
    target: Tensor,
    pred: Tensor,
    weights: Tensor,
    proxy: PerceptualProxy | None = None,
    w_p: float = 0.01,
) -> Tensor:
    """weighted_l1 + w_p * perceptual proxy."""
    if w_p < 0:
        raise ContractError("w_p must be >= 0")
    loss = weighted_l1(target, pred, weights)
    if proxy is not None and w_p > 0:
        loss = T.add(loss, T.scale(proxy(target, pred), w_p))
    return loss
