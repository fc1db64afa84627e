"""History selection, backward warping, and network-input assembly.

Frames on the output timebase alternate roles: even indices are rendered
supersampling frames (SF), odd indices are extrapolated frames (EF).  Each
target frame pulls three history LR frames, warps them to the target time
through composed per-step motion fields, and records a binary validity mask
per warped frame (0 where the warp had no valid source).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractError, InsufficientHistoryError
from .frameio import ROLE_EF, ROLE_SF, ClipManifest

WARMUP = 5  # frames 0..4 lack full history and are excluded from train/eval


class FrameRole(Enum):
    SF = ROLE_SF
    EF = ROLE_EF


def role_of_index(t: int) -> FrameRole:
    return FrameRole.SF if t % 2 == 0 else FrameRole.EF


def select_history(t: int, role: FrameRole) -> tuple[tuple[int, int, int], dict[int, list[int]]]:
    """Source frame indices (nearest first) and per-source step-field chains.

    A chain entry u means "apply the stored field u -> u-1"; composing the
    chain for source s yields the field t -> s.  SF targets pull {t, t-2,
    t-4}; EF targets pull {t-1, t-3, t-5}.
    """
    if t < WARMUP:
        raise InsufficientHistoryError(f"frame {t} has fewer than {WARMUP} history frames")
    if role == FrameRole.SF:
        sources = (t, t - 2, t - 4)
    else:
        sources = (t - 1, t - 3, t - 5)
    chains = {s: list(range(t, s, -1)) for s in sources}
    return sources, chains


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.mgrid[0:h, 0:w]
    return gx.astype(np.float64), gy.astype(np.float64)


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample (C,H,W) planes at index-space points; returns (samples, in_bounds)."""
    c, h, w = img.shape
    inb = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0).astype(np.float32)
    fy = (yc - y0).astype(np.float32)
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    out = (
        img[:, y0, x0] * w00
        + img[:, y0, x1] * w01
        + img[:, y1, x0] * w10
        + img[:, y1, x1] * w11
    )
    return out.astype(np.float32), inb


def warp(
    source: np.ndarray, motion: np.ndarray, valid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-warp ``source`` by a motion field.

    output(p) = bilinear(source, p + mv(p)); the returned mask is 0 where the
    motion was flagged invalid or the sample lands out of bounds, and warped
    values are 0 there (holes render black).
    """
    if source.ndim != 3:
        raise ContractError(f"warp source must be (C,H,W), got {source.shape}")
    c, h, w = source.shape
    if motion.shape != (2, h, w):
        raise ContractError(f"motion shape {motion.shape} does not match source {source.shape}")
    gx, gy = _grid(h, w)
    sx = gx + motion[0]
    sy = gy + motion[1]
    sampled, inb = bilinear_sample(source, sx, sy)
    mask = inb if valid is None else (inb & (valid > 0.5))
    mask_f = mask.astype(np.float32)
    return sampled * mask_f[None], mask_f


def compose_motion(
    steps: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Chain single-step fields t->t-1, t-1->t-2, ... into one field t->t-k.

    Each successive field is resampled bilinearly at the position the chain
    has reached; a pixel stays valid only if every step was valid and every
    resample stayed in bounds and touched only valid source pixels.
    """
    if not steps:
        raise ContractError("compose_motion needs at least one step")
    mv0, valid0 = steps[0]
    acc = mv0.astype(np.float64).copy()
    ok = valid0 > 0.5
    h, w = ok.shape
    gx, gy = _grid(h, w)
    for mv, valid in steps[1:]:
        if mv.shape != (2, h, w):
            raise ContractError("compose_motion: inconsistent field shapes")
        sx = gx + acc[0]
        sy = gy + acc[1]
        planes = np.concatenate([mv, np.asarray(valid, np.float32)[None]], axis=0)
        sampled, inb = bilinear_sample(planes, sx, sy)
        ok &= inb & (sampled[2] > 1.0 - 1e-5)
        acc[0] += sampled[0]
        acc[1] += sampled[1]
    return acc.astype(np.float32), ok


@dataclass
class NetInput:
    """Assembled per-frame network input at LR resolution (21 planes)."""

    lr_warped: np.ndarray  # (9,H,W), three frames nearest-first
    gbuffer: np.ndarray  # (9,H,W) at the target time, depth squashed to [0,1)
    masks: np.ndarray  # (3,H,W) binary, one per warped frame
    role: FrameRole
    index: int
    sources: tuple[int, int, int]

    def planes(self) -> np.ndarray:
        return np.concatenate([self.lr_warped, self.gbuffer, self.masks], axis=0)

    @classmethod
    def from_planes(cls, planes: np.ndarray, role: FrameRole, index: int) -> "NetInput":
        if planes.shape[0] != 21:
            raise ContractError(f"net input needs 21 planes, got {planes.shape}")
        sources, _ = select_history(index, role)
        return cls(
            lr_warped=planes[0:9],
            gbuffer=planes[9:18],
            masks=planes[18:21],
            role=role,
            index=index,
            sources=sources,
        )


def _squash_depth(gbuffer: np.ndarray) -> np.ndarray:
    """Map the raw depth plane to [0,1) so it is conditioned for the network."""
    out = gbuffer.astype(np.float32, copy=True)
    out[6] = out[6] / (1.0 + out[6])
    return out


def load_motion(manifest: ClipManifest, t: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Stored analytic field t -> t-k with its validity plane."""
    rec = manifest.record(t)
    if k < 1 or k > 5 or rec.motion[k - 1] is None:
        raise ContractError(f"no stored motion field t={t} k={k}")
    planes = manifest.load(rec.motion[k - 1])
    return planes[0:2], planes[2]


def composed_motion(manifest: ClipManifest, t: int, source: int) -> tuple[np.ndarray, np.ndarray]:
    """Field t -> source composed from stored single-step fields."""
    if source > t:
        raise ContractError("composed_motion targets the past only")
    steps = [load_motion(manifest, u, 1) for u in range(t, source, -1)]
    if not steps:
        z = manifest.load(manifest.record(t).mask)  # any LR-res plane for dims
        h, w = z.shape[-2:]
        return np.zeros((2, h, w), np.float32), np.ones((h, w), bool)
    return compose_motion(steps)


def build_net_input(manifest: ClipManifest, t: int) -> NetInput:
    """Warp the history triplet to frame t and stack it with G_t and masks."""
    rec = manifest.record(t)
    role = FrameRole(rec.role)
    sources, _chains = select_history(t, role)

    warped_planes = []
    mask_planes = []
    for s in sources:
        src_rec = manifest.record(s)
        lr = manifest.load(src_rec.lr)
        if s == t:
            warped_planes.append(lr)
            mask_planes.append(np.ones(lr.shape[-2:], np.float32))
            continue
        mv, ok = composed_motion(manifest, t, s)
        warped, mask = warp(lr, mv, ok.astype(np.float32))
        warped_planes.append(warped)
        mask_planes.append(mask)

    gbuf = _squash_depth(manifest.load(rec.gbuffer))
    return NetInput(
        lr_warped=np.concatenate(warped_planes, axis=0),
        gbuffer=gbuf,
        masks=np.stack(mask_planes, axis=0),
        role=role,
        index=t,
        sources=sources,
    )
