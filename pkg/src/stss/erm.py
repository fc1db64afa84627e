"""Efficient reshading module: masked windowed ReLU linear attention.

Per query point p the module gathers light embeddings from its local window,
weighted by the non-negative similarity of reshading (BRDF) embeddings:

    phi(p) = sum_over_window ReLU(<Q(p), K(p+d)>) * V(p+d)

Keys and values are zeroed wherever the validity mask is 0, so warping holes
(including the query pixel itself) contribute nothing and phi(p) is built
purely from nearby valid pixels with similar material signatures.  Window
positions outside the frame count as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor


@dataclass
class ERMConfig:
    window: int = 5
    embed_dim: int = 32
    q_kernel: int = 3  # conv kernel of the reshading-embedding encoder
    kv_kernel: int = 1  # conv kernel of the light-embedding encoder
    out_kernel: int = 1  # projection back onto the backbone width

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ContractError(f"window must be odd and positive, got {self.window}")
        if self.embed_dim < 1:
            raise ContractError("embed_dim must be >= 1")


@dataclass
class EmbeddingPair:
    """Q/K/V maps plus the validity mask that produced K and V."""

    q: Tensor  # (N,d,h,w)
    k: Tensor  # (N,d,h,w), zero where mask is 0
    v: Tensor  # (N,d,h,w), zero where mask is 0
    mask: Tensor  # (N,1,h,w) binary


def _offsets(window: int):
    r = window // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]


def window_relu_attention(q: Tensor, k: Tensor, v: Tensor, window: int = 5) -> Tensor:
    """The attention kernel itself, differentiable in q, k, v."""
    if q.shape != k.shape or q.shape != v.shape:
        raise ContractError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    if len(q.shape) != 4:
        raise ContractError("attention expects (N,d,h,w) embeddings")
    n, d, h, w = q.shape
    r = window // 2
    offs = _offsets(window)

    pad = ((0, 0), (0, 0), (r, r), (r, r))
    kp = np.pad(k.data, pad)
    vp = np.pad(v.data, pad)
    qd = q.data

    phi = np.zeros_like(qd)
    scores = np.empty((len(offs), n, 1, h, w), dtype=qd.dtype)
    for i, (dy, dx) in enumerate(offs):
        ks = kp[:, :, r + dy : r + dy + h, r + dx : r + dx + w]
        vs = vp[:, :, r + dy : r + dy + h, r + dx : r + dx + w]
        s = (qd * ks).sum(axis=1, keepdims=True)
        scores[i] = s
        phi += np.maximum(s, 0) * vs

    def backward(g):
        dq = np.zeros_like(qd) if q.requires_grad else None
        dkp = np.zeros_like(kp) if k.requires_grad else None
        dvp = np.zeros_like(vp) if v.requires_grad else None
        for i, (dy, dx) in enumerate(offs):
            sl = (slice(None), slice(None), slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
            s = scores[i]
            act = np.maximum(s, 0)
            pos = s > 0
            if dvp is not None:
                dvp[sl] += act * g
            if dq is None and dkp is None:
                continue
            da = (g * vp[sl]).sum(axis=1, keepdims=True)
            ds = da * pos
            if dq is not None:
                dq += ds * kp[sl]
            if dkp is not None:
                dkp[sl] += ds * qd
        if dq is not None:
            q._accumulate(dq)
        if dkp is not None:
            k._accumulate(dkp[:, :, r : r + h, r : r + w])
        if dvp is not None:
            v._accumulate(dvp[:, :, r : r + h, r : r + w])

    return T._node(phi, (q, k, v), backward, "window_relu_attention")


def erm_forward(pair: EmbeddingPair, cfg: ERMConfig) -> Tensor:
    """Reshaded features phi; the mask is re-applied so masked K/V never leak."""
    km = T.mul(pair.k, pair.mask)
    vm = T.mul(pair.v, pair.mask)
    return window_relu_attention(pair.q, km, vm, cfg.window)


def encode_embeddings(
    features: Tensor,
    gbuffer_ds: Tensor,
    mask_ds: Tensor,
    params,
    cfg: ERMConfig,
    prefix: str = "erm",
) -> EmbeddingPair:
    """Build the embedding pair from backbone features and the G-buffer.

    The reshading (BRDF) embedding comes from the G-buffer alone and serves
    as Q; the light embedding comes from features concatenated with the
    G-buffer; K and V are the mask-zeroed copies of those two maps.
    """
    if features.shape[2:] != gbuffer_ds.shape[2:]:
        raise ContractError("features and downsampled G-buffer dims differ")
    q = T.conv2d(
        gbuffer_ds,
        params[f"{prefix}.q_proj.weight"],
        params[f"{prefix}.q_proj.bias"],
        padding=cfg.q_kernel // 2,
    )
    light = T.conv2d(
        T.concat_channels([features, gbuffer_ds]),
        params[f"{prefix}.kv_proj.weight"],
        params[f"{prefix}.kv_proj.bias"],
        padding=cfg.kv_kernel // 2,
    )
    k = T.mul(q, mask_ds)
    v = T.mul(light, mask_ds)
    return EmbeddingPair(q=q, k=k, v=v, mask=mask_ds)


def erm_apply(
    features: Tensor,
    gbuffer_ds: Tensor,
    mask_ds: Tensor,
    params,
    cfg: ERMConfig,
    prefix: str = "erm",
) -> Tensor:
    """Full module: encode, attend, project, and add residually."""
    pair = encode_embeddings(features, gbuffer_ds, mask_ds, params, cfg, prefix)
    phi = erm_forward(pair, cfg)
    out = T.conv2d(
        phi,
        params[f"{prefix}.out_proj.weight"],
        params[f"{prefix}.out_proj.bias"],
        padding=cfg.out_kernel // 2,
    )
    return T.add(features, out)


def erm_flops(
    cfg: ERMConfig,
    height: int,
    width: int,
    feature_channels: int = 0,
    gbuffer_channels: int = 0,
) -> dict[str, int]:
    """Analytic cost at the module's own resolution.

    Attention: per pixel, window^2 * 2d ops for the scores plus window^2 * d
    for the value-weighted sum.  Convolutions count multiplies and adds
    (2 * in * out * k^2 per pixel); channel counts of 0 mean "no encoder",
    leaving just the attention core.
    """
    px = height * width
    win2 = cfg.window * cfg.window
    d = cfg.embed_dim
    attention = px * (win2 * 2 * d + win2 * d)
    convs = 0
    if gbuffer_channels:
        convs += 2 * px * gbuffer_channels * d * cfg.q_kernel**2
    if feature_channels:
        convs += 2 * px * (feature_channels + gbuffer_channels) * d * cfg.kv_kernel**2
        convs += 2 * px * d * feature_channels * cfg.out_kernel**2
    return {"attention": attention, "convs": convs, "total": attention + convs}
