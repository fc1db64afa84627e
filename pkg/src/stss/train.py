"""Training harness: cropping augmentation, optimizer schedule, checkpoints.

Every epoch shuffles SF and EF samples into one stream (a single parameter
set serves both roles), augments each sample with random reshading masks,
slices random crops, and takes one Adam step per sample on the crop batch.
Runs are bit-reproducible for a fixed seed: all randomness flows from
per-(seed, epoch, sample) generators and the math is single-instruction
deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rrm
from .errors import ConfigError, ContractError, STSSError
from .frameio import NETINPUT_LAYOUT, ClipManifest, read_frame, write_frame
from .losses import PerceptualProxy, total_loss
from .network import NetConfig, STSSNet
from .optim import Adam
from .params import ParamStore
from .tensor import Tensor
from .warp import WARMUP, FrameRole, NetInput, build_net_input

PROXY_SEED = 1234  # frozen perceptual stack; independent of the train seed


@dataclass
class TrainConfig:
    epochs: int = 12
    lr: float = 1e-4
    lr_step: int = 50
    lr_gamma: float = 0.9
    decay_unit: str = "epoch"  # "epoch" (default) or "step"
    crop: int = 64
    crops_per_image: int = 4
    w_p: float = 0.01
    rrm: rrm.RRMConfig = field(default_factory=rrm.RRMConfig)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0  # epochs between extra checkpoints; 0 = final only
    deterministic: bool = False  # force single-threaded BLAS
    max_samples_per_clip: int = 0  # 0 = use every frame with full history

    def validate(self) -> None:
        if self.epochs < 1 or self.lr <= 0 or self.lr_step < 1:
            raise ConfigError("epochs, lr and lr_step must be positive")
        if self.decay_unit not in ("epoch", "step"):
            raise ConfigError(f"unknown decay unit {self.decay_unit!r}")
        if self.crop < 8 or self.crop % 4:
            raise ConfigError("crop must be a multiple of 4 and at least 8")
        if self.crops_per_image < 1:
            raise ConfigError("crops_per_image must be >= 1")


def lr_at(cfg: TrainConfig, epoch: int, global_step: int) -> float:
    """Step decay: multiply by gamma every lr_step epochs (or optimizer steps)."""
    unit = epoch if cfg.decay_unit == "epoch" else global_step
    return cfg.lr * cfg.lr_gamma ** (unit // cfg.lr_step)


# ---------------------------------------------------------------------------
# preprocessed-sample cache
# ---------------------------------------------------------------------------

PREPROC_DIR = "preproc"


def preprocess_clip(manifest: ClipManifest, force: bool = False) -> int:
    """Cache assembled net inputs next to the clip; returns the sample count."""
    out = manifest.root / PREPROC_DIR
    out.mkdir(exist_ok=True)
    count = 0
    for t in range(WARMUP, len(manifest)):
        path = out / f"{t:06d}.stsf"
        if path.exists() and not force:
            count += 1
            continue
        ni = build_net_input(manifest, t)
        write_frame(path, ni.planes(), ni.role.value)
        count += 1
    lines = [f"# layout: netinput={NETINPUT_LAYOUT}", f"first {WARMUP}", f"count {count}"]
    (out / "preproc.manifest").write_text("\n".join(lines) + "\n")
    return count


def load_net_input(manifest: ClipManifest, t: int) -> NetInput:
    """Cached net input when the preprocess pass ran, else built on the fly."""
    path = manifest.root / PREPROC_DIR / f"{t:06d}.stsf"
    if path.exists():
        planes, role = read_frame(path)
        return NetInput.from_planes(planes, FrameRole(role), t)
    return build_net_input(manifest, t)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ParamStore
    net_config: NetConfig
    checkpoint: Path
    loss_curve: Path
    epoch_losses: list[float]


def save_checkpoint(params: ParamStore, ncfg: NetConfig, stem: Path) -> Path:
    """ParamStore file plus a sidecar config text, so checkpoints self-describe."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    path = stem.with_suffix(".stssparm")
    params.save(path)
    path.with_suffix(".netcfg").write_text(ncfg.to_text())
    return path


def load_checkpoint(path) -> tuple[ParamStore, NetConfig]:
    path = Path(path)
    if path.suffix != ".stssparm":
        path = path.with_suffix(".stssparm")
    cfg_path = path.with_suffix(".netcfg")
    if not cfg_path.exists():
        raise STSSError(f"checkpoint sidecar config missing: {cfg_path}")
    return ParamStore.load(path), NetConfig.from_text(cfg_path.read_text())


def _sample_rng(seed: int, epoch: int, sample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, sample]))


def _crop_batch(aug: rrm.AugmentedInput, hr: np.ndarray, cfg: TrainConfig, rng):
    h, w = aug.erm_mask.shape
    c = cfg.crop
    if c > h or c > w:
        raise ContractError(f"crop {c} exceeds image dims {h}x{w}")
    ys = rng.integers(0, h - c + 1, size=cfg.crops_per_image)
    xs = rng.integers(0, w - c + 1, size=cfg.crops_per_image)
    bb, hist, gbuf, mask, weight, gt = [], [], [], [], [], []
    for y0, x0 in zip(ys, xs):
        sl = (slice(None), slice(y0, y0 + c), slice(x0, x0 + c))
        bb.append(aug.backbone[sl])
        hist.append(aug.history[sl])
        gbuf.append(aug.gbuffer[sl])
        mask.append(aug.erm_mask[None][sl])
        weight.append(aug.loss_weight[None][sl])
        gt.append(hr[:, 2 * y0 : 2 * (y0 + c), 2 * x0 : 2 * (x0 + c)])
    stack = lambda parts: np.stack(parts).astype(np.float32)  # noqa: E731
    return (
        stack(bb),
        stack(hist),
        stack(gbuf),
        stack(mask),
        stack(weight),
        stack(gt),
    )


def _upsample_weights_2x(w: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(w, 2, axis=-2), 2, axis=-1)


def train(
    manifests: list[ClipManifest],
    tcfg: TrainConfig,
    ncfg: NetConfig,
    out_dir,
) -> TrainResult:
    """Full training run; writes checkpoint(s) and a loss curve CSV."""
    tcfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if tcfg.deterministic:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            return _train_inner(manifests, tcfg, ncfg, out)
    return _train_inner(manifests, tcfg, ncfg, out)


def _train_inner(manifests, tcfg: TrainConfig, ncfg: NetConfig, out: Path) -> TrainResult:
    net = STSSNet(ncfg)
    params = net.init_params(tcfg.seed)
    adam = Adam(params, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.adam_eps)
    proxy = PerceptualProxy(seed=PROXY_SEED) if tcfg.w_p > 0 else None

    samples: list[tuple[int, int]] = []
    for ci, manifest in enumerate(manifests):
        ts = list(range(WARMUP, len(manifest)))
        if tcfg.max_samples_per_clip:
            ts = ts[: tcfg.max_samples_per_clip]
        samples += [(ci, t) for t in ts]
    if not samples:
        raise STSSError("no trainable samples: clips shorter than the warm-up")

    epoch_losses: list[float] = []
    rows = []
    global_step = 0
    for epoch in range(tcfg.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([tcfg.seed, 0xE0, epoch])
        ).permutation(len(samples))
        losses = []
        for si in order:
            ci, t = samples[si]
            rng = _sample_rng(tcfg.seed, epoch, int(si))
            ni = load_net_input(manifests[ci], t)
            aug = rrm.augment(ni, tcfg.rrm, rng)
            hr = np.clip(manifests[ci].load(manifests[ci].record(t).hr), 0.0, 1.0)
            bb, hist, gbuf, mask, weight, gt = _crop_batch(aug, hr, tcfg, rng)

            pred = net.forward(params, bb, hist, gbuf, mask)
            loss = total_loss(
                Tensor(gt), pred, Tensor(_upsample_weights_2x(weight)), proxy, tcfg.w_p
            )
            value = loss.item()
            if not np.isfinite(value):
                dump = out / "nan_batch.npz"
                np.savez(dump, backbone=bb, history=hist, gbuffer=gbuf, mask=mask, gt=gt)
                raise STSSError(
                    f"non-finite loss at epoch {epoch} sample {si}; batch dumped to {dump}"
                )
            params.zero_grads()
            loss.backward()
            adam.lr = lr_at(tcfg, epoch, global_step)
            adam.step()
            global_step += 1
            losses.append(value)
        epoch_loss = float(np.mean(losses))
        epoch_losses.append(epoch_loss)
        rows.append((epoch, epoch_loss, adam.lr))
        if tcfg.checkpoint_every and (epoch + 1) % tcfg.checkpoint_every == 0:
            save_checkpoint(params, ncfg, out / f"checkpoint_e{epoch + 1:04d}")

    ckpt = save_checkpoint(params, ncfg, out / "checkpoint")
    curve = out / "loss_curve.csv"
    with open(curve, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "lr"])
        for epoch, loss_v, lr_v in rows:
            writer.writerow([epoch, f"{loss_v:.8f}", f"{lr_v:.10g}"])
    return TrainResult(
        params=params,
        net_config=ncfg,
        checkpoint=ckpt,
        loss_curve=curve,
        epoch_losses=epoch_losses,
    )
