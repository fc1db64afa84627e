"""Command-line interface.

    stss synth      --scene cfg|demo:name --out DIR [--frames N] [--seed S]
    stss preprocess --clips DIR [DIR ...]
    stss train      --config cfg --out DIR --clips DIR [DIR ...]
    stss infer      --ckpt FILE --clip DIR --out DIR [--png]
    stss eval       --ckpt FILE --clip DIR [DIR ...] --report CSV [--baseline]
    stss bench      --ckpt FILE --clip DIR [--frames N]

Every command exits nonzero on error.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .errors import ConfigError, STSSError
from .evaluate import bench, evaluate, infer_frame
from .frameio import ClipManifest, to_png, write_frame
from .network import NetConfig, STSSNet
from .rrm import RRMConfig
from .scene import make_demo_scene, parse_scene_config, render_clip
from .train import (
    TrainConfig,
    load_checkpoint,
    load_net_input,
    preprocess_clip,
    train,
)
from .warp import WARMUP


def _load_scene(spec: str, frames: int | None, seed: int | None):
    if spec.startswith("demo:"):
        scene = make_demo_scene(spec[len("demo:") :], seed=seed or 0)
        if frames:
            scene.frames = frames
        return scene
    scene = parse_scene_config(spec)
    if frames:
        scene.frames = frames
    if seed is not None:
        scene.seed = seed
    return scene


def parse_train_config(path) -> tuple[TrainConfig, NetConfig]:
    cp = configparser.ConfigParser()
    text = Path(path).read_text()
    cp.read_string(text)

    tr = cp["train"] if "train" in cp else {}
    rr = cp["rrm"] if "rrm" in cp else {}
    rrm_cfg = RRMConfig(
        enabled=cp.getboolean("rrm", "enabled", fallback=True),
        rect_count_min=int(rr.get("rect_count_min", 1)),
        rect_count_max=int(rr.get("rect_count_max", 4)),
        max_frac=float(rr.get("max_frac", 0.25)),
        weight_hi=float(rr.get("weight_hi", 2.0)),
        weight_lo=float(rr.get("weight_lo", 1.0)),
    )
    tcfg = TrainConfig(
        epochs=int(tr.get("epochs", 12)),
        lr=float(tr.get("lr", 1e-4)),
        lr_step=int(tr.get("lr_step", 50)),
        lr_gamma=float(tr.get("lr_gamma", 0.9)),
        decay_unit=tr.get("decay_unit", "epoch"),
        crop=int(tr.get("crop", 64)),
        crops_per_image=int(tr.get("crops_per_image", 4)),
        w_p=float(tr.get("w_p", 0.01)),
        rrm=rrm_cfg,
        seed=int(tr.get("seed", 0)),
        checkpoint_every=int(tr.get("checkpoint_every", 0)),
        deterministic=cp.getboolean("train", "deterministic", fallback=False),
        max_samples_per_clip=int(tr.get("max_samples_per_clip", 0)),
    )

    if "net" in cp and "encoder" in cp["net"]:
        ncfg = NetConfig.from_text(text)
    else:
        preset = cp.get("net", "preset", fallback="desk")
        if preset == "desk":
            ncfg = NetConfig.desk()
        elif preset == "paper":
            ncfg = NetConfig.paper()
        else:
            raise ConfigError(f"unknown net preset {preset!r}")
        if cp.has_option("net", "erm_enabled"):
            ncfg.erm_enabled = cp.getboolean("net", "erm_enabled")
    return tcfg, ncfg


def _cmd_synth(args) -> int:
    scene = _load_scene(args.scene, args.frames, args.seed)
    manifest = render_clip(scene, args.out, stream=args.stream)
    print(f"rendered {len(manifest)} frames to {args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    for clip in args.clips:
        manifest = ClipManifest.read(clip)
        n = preprocess_clip(manifest, force=args.force)
        print(f"{clip}: cached {n} net inputs")
    return 0


def _cmd_train(args) -> int:
    tcfg, ncfg = parse_train_config(args.config)
    manifests = [ClipManifest.read(c) for c in args.clips]
    result = train(manifests, tcfg, ncfg, args.out)
    print(f"checkpoint: {result.checkpoint}")
    print(f"loss curve: {result.loss_curve}")
    print(f"final epoch loss: {result.epoch_losses[-1]:.6f}")
    return 0


def _cmd_infer(args) -> int:
    params, ncfg = load_checkpoint(args.ckpt)
    net = STSSNet(ncfg)
    manifest = ClipManifest.read(args.clip)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for t in range(WARMUP, len(manifest)):
        ni = load_net_input(manifest, t)
        pred = infer_frame(net, params, ni)
        write_frame(out / f"{t:06d}.stsf", pred, ni.role.value)
        if args.png:
            to_png(out / f"{t:06d}.png", pred)
        count += 1
    print(f"wrote {count} frames to {out}")
    return 0


def _cmd_eval(args) -> int:
    params, ncfg = load_checkpoint(args.ckpt)
    clips = []
    for clip in args.clips:
        name = Path(clip).name
        clips.append((name, ClipManifest.read(clip)))
    report = evaluate(params, ncfg, clips, csv_path=args.report, use_baseline=args.baseline)
    for scene, role, agg in report.aggregate():
        print(
            f"{scene} {role}: psnr={agg['psnr']:.3f} ssim={agg['ssim']:.4f} "
            f"edge_psnr={agg['edge_psnr']:.3f} hole_psnr={agg['hole_psnr']:.3f}"
        )
    if report.network_ms:
        print(f"median network time: {report.network_ms:.1f} ms/frame")
    print(f"report: {args.report}")
    return 0


def _cmd_bench(args) -> int:
    params, ncfg = load_checkpoint(args.ckpt)
    manifest = ClipManifest.read(args.clip)
    result = bench(params, ncfg, manifest, frames=args.frames)
    print(f"resolution: {result['width']}x{result['height']} ({result['frames']} frames)")
    for stage in ("lr", "gbuffer", "warp", "network"):
        print(f"  {stage:8s} {result[f'{stage}_ms']:8.2f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stss", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic clip")
    s.add_argument("--scene", required=True, help="scene config path or demo:<name>")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--stream", choices=["lr", "hr", "both"], default="both")
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("preprocess", help="cache assembled net inputs for clips")
    s.add_argument("--clips", nargs="+", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(fn=_cmd_preprocess)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--clips", nargs="+", required=True)
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("infer", help="run a checkpoint over a clip")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--png", action="store_true")
    s.set_defaults(fn=_cmd_infer)

    s = sub.add_parser("eval", help="evaluate a checkpoint, write a CSV report")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--clip", dest="clips", nargs="+", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--baseline", action="store_true", help="score the non-learned baseline")
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("bench", help="per-stage wall-clock timings")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--frames", type=int, default=100)
    s.set_defaults(fn=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except STSSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
