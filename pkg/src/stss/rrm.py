"""Random reshading masking: training-time hole injection.

Random rectangles (each at most a quarter of the frame in width and height)
are stamped into the validity mask; LR and G-buffer planes get zeroed inside
them in a masked copy that is concatenated with the untouched original, so
channel count stays the same between training and inference.  Masked areas
carry a larger loss weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .warp import FrameRole, NetInput


@dataclass
class RRMConfig:
    enabled: bool = True
    rect_count_min: int = 1
    rect_count_max: int = 4
    max_frac: float = 0.25
    weight_hi: float = 2.0
    weight_lo: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.max_frac <= 0.25:
            raise ContractError(f"rrm max_frac must be in (0, 0.25], got {self.max_frac}")
        if self.rect_count_min > self.rect_count_max or self.rect_count_min < 0:
            raise ContractError("rrm rect_count range is invalid")
        if self.weight_lo <= 0 or self.weight_hi <= 0:
            raise ContractError("rrm loss weights must be positive")


def sample_rects(cfg: RRMConfig, height: int, width: int, rng: np.random.Generator):
    """Draw rectangles (y0, x0, h, w) at uniform positions, clipped to frame."""
    count = int(rng.integers(cfg.rect_count_min, cfg.rect_count_max + 1))
    max_w = max(1, int(cfg.max_frac * width))
    max_h = max(1, int(cfg.max_frac * height))
    rects = []
    for _ in range(count):
        rw = int(rng.integers(1, max_w + 1))
        rh = int(rng.integers(1, max_h + 1))
        x0 = int(rng.integers(0, width))
        y0 = int(rng.integers(0, height))
        rects.append((y0, x0, min(rh, height - y0), min(rw, width - x0)))
    return rects


def rect_union(rects, height: int, width: int) -> np.ndarray:
    """Boolean map, True inside the union of rectangles."""
    m = np.zeros((height, width), dtype=bool)
    for y0, x0, h, w in rects:
        m[y0 : y0 + h, x0 : x0 + w] = True
    return m


def loss_weights(
    masks: np.ndarray,
    rect_mask: np.ndarray | None = None,
    weight_hi: float = 2.0,
    weight_lo: float = 1.0,
) -> np.ndarray:
    """Per-pixel weight map: weight_hi on reshading pixels, weight_lo elsewhere.

    Reshading pixels are the union of warping holes across the given mask set
    and any injected rectangles.
    """
    masks = np.asarray(masks, dtype=np.float32)
    if masks.ndim == 2:
        masks = masks[None]
    holes = (masks < 0.5).any(axis=0)
    if rect_mask is not None:
        if rect_mask.shape != holes.shape:
            raise ContractError("rect mask dims do not match validity masks")
        holes = holes | rect_mask
    return np.where(holes, np.float32(weight_hi), np.float32(weight_lo))


@dataclass
class AugmentedInput:
    """Network-ready planes for one sample."""

    backbone: np.ndarray  # (42,H,W) masked copy then original copy
    history: np.ndarray  # (12,H,W) warped triplet + masks, unaltered
    gbuffer: np.ndarray  # (9,H,W) original copy, for the reshading queries
    erm_mask: np.ndarray  # (H,W) nearest-frame validity, rect-zeroed in training
    loss_weight: np.ndarray  # (H,W) at LR resolution
    role: FrameRole
    index: int


def augment(net_input: NetInput, cfg: RRMConfig, rng: np.random.Generator) -> AugmentedInput:
    """Stamp random reshading rectangles and build the doubled input stack."""
    h, w = net_input.masks.shape[-2:]
    original = net_input.planes()

    if cfg.enabled:
        rects = sample_rects(cfg, h, w, rng)
        rect_mask = rect_union(rects, h, w)
        weights = loss_weights(net_input.masks, rect_mask, cfg.weight_hi, cfg.weight_lo)
    else:
        # identity augmentation: duplicate concat, no reshading emphasis
        rect_mask = np.zeros((h, w), dtype=bool)
        weights = np.full((h, w), np.float32(cfg.weight_lo))

    keep = (~rect_mask).astype(np.float32)
    masked = original * keep[None]

    return AugmentedInput(
        backbone=np.concatenate([masked, original], axis=0),
        history=np.concatenate([net_input.lr_warped, net_input.masks], axis=0),
        gbuffer=net_input.gbuffer,
        erm_mask=net_input.masks[0] * keep,
        loss_weight=weights,
        role=net_input.role,
        index=net_input.index,
    )
