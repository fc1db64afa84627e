"""Evaluation (full and region-restricted metrics) and stage benchmarking."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .errors import STSSError
from .frameio import ClipManifest
from .network import NetConfig, STSSNet
from .params import ParamStore
from .rrm import RRMConfig, augment
from .scene import parse_scene_config, render_frame_lr, shade
from .tensor import Tensor, bilinear_upsample2
from .train import load_net_input
from .warp import WARMUP, FrameRole, NetInput, build_net_input

CSV_HEADER = ["scene", "role", "psnr", "ssim", "edge_psnr", "edge_ssim", "hole_psnr", "hole_ssim"]
_METRIC_KEYS = CSV_HEADER[2:]

_EVAL_RRM = RRMConfig(enabled=False)
_EVAL_RNG = np.random.default_rng(0)  # never consulted when RRM is disabled


def upsample_baseline(ni: NetInput) -> np.ndarray:
    """The non-learned reference: bilinear 2x of the nearest warped frame,
    holes left black."""
    return bilinear_upsample2(Tensor(ni.lr_warped[None, 0:3])).data[0]


def infer_frame(net: STSSNet, params: ParamStore, ni: NetInput) -> np.ndarray:
    """Network output for one frame, inference-path input construction."""
    aug = augment(ni, _EVAL_RRM, _EVAL_RNG)
    out = net.forward(
        params,
        aug.backbone[None],
        aug.history[None],
        aug.gbuffer[None],
        aug.erm_mask[None, None],
    )
    return out.data[0]


@dataclass
class FrameEval:
    scene: str
    index: int
    role: FrameRole
    values: dict[str, float | None]


@dataclass
class EvalReport:
    frames: list[FrameEval] = field(default_factory=list)
    network_ms: float = 0.0

    def aggregate(self) -> list[tuple[str, str, dict[str, float]]]:
        """Per (scene, role) means; metrics with no defined frames become NaN."""
        keys = sorted({f.scene for f in self.frames})
        rows = []
        for scene in keys:
            for role in (FrameRole.SF, FrameRole.EF):
                sel = [f for f in self.frames if f.scene == scene and f.role == role]
                if not sel:
                    continue
                agg = {}
                for k in _METRIC_KEYS:
                    vals = [f.values[k] for f in sel if f.values[k] is not None]
                    agg[k] = float(np.mean(vals)) if vals else float("nan")
                rows.append((scene, role.name, agg))
        return rows

    def mean_over(self, key: str, role: FrameRole | None = None) -> float:
        vals = [
            f.values[key]
            for f in self.frames
            if (role is None or f.role == role) and f.values[key] is not None
        ]
        if not vals:
            return float("nan")
        return float(np.mean(vals))

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for scene, role, agg in self.aggregate():
                writer.writerow(
                    [scene, role] + [f"{agg[k]:.6f}" for k in _METRIC_KEYS]
                )
        return path


def _frame_metrics(pred: np.ndarray, gt: np.ndarray, hole_region: np.ndarray) -> dict:
    pred = M.clamp01(pred)
    gt = M.clamp01(gt)
    edges = M.edge_mask(gt)
    return {
        "psnr": M.psnr(gt, pred),
        "ssim": M.ssim(gt, pred),
        "edge_psnr": M.region_psnr(gt, pred, edges),
        "edge_ssim": M.region_ssim(gt, pred, edges),
        "hole_psnr": M.region_psnr(gt, pred, hole_region),
        "hole_ssim": M.region_ssim(gt, pred, hole_region),
    }


def _hole_region(ni: NetInput) -> np.ndarray:
    """Warping holes of the nearest history frame, at output resolution."""
    holes = ni.masks[0] < 0.5
    return np.repeat(np.repeat(holes, 2, axis=0), 2, axis=1)


def evaluate(
    params: ParamStore,
    ncfg: NetConfig,
    clips: list[tuple[str, ClipManifest]],
    csv_path=None,
    use_baseline: bool = False,
) -> EvalReport:
    """Run the model (or the non-learned baseline) over held-out clips.

    Produces one aggregate row per scene and role; hole metrics are NaN for
    roles with no warping holes (typically SF).
    """
    net = STSSNet(ncfg)
    report = EvalReport()
    times = []
    for scene_name, manifest in clips:
        for t in range(WARMUP, len(manifest)):
            ni = load_net_input(manifest, t)
            gt = manifest.load(manifest.record(t).hr)
            if use_baseline:
                pred = upsample_baseline(ni)
            else:
                t0 = time.perf_counter()
                pred = infer_frame(net, params, ni)
                times.append(time.perf_counter() - t0)
            values = _frame_metrics(pred, gt, _hole_region(ni))
            report.frames.append(
                FrameEval(scene=scene_name, index=t, role=ni.role, values=values)
            )
    if times:
        report.network_ms = float(np.median(times) * 1000.0)
    if csv_path is not None:
        report.write_csv(csv_path)
    return report


# ---------------------------------------------------------------------------
# stage benchmark
# ---------------------------------------------------------------------------


def bench(
    params: ParamStore,
    ncfg: NetConfig,
    manifest: ClipManifest,
    frames: int = 100,
) -> dict:
    """Median per-frame wall-clock of the pipeline stages for one clip.

    Stages: LR shading render, G-buffer generation, warping (net-input
    assembly), and network inference.  The clip directory must contain the
    scene config written by the synthesizer.
    """
    scene_cfg = manifest.root / "scene.cfg"
    if not scene_cfg.exists():
        raise STSSError(f"bench needs {scene_cfg} next to the clip")
    scene = parse_scene_config(scene_cfg)
    net = STSSNet(ncfg)

    usable = list(range(WARMUP, len(manifest)))
    if not usable:
        raise STSSError("clip too short to bench")
    stage_times: dict[str, list[float]] = {k: [] for k in ("lr", "gbuffer", "warp", "network")}
    for i in range(max(frames, 1)):
        t = usable[i % len(usable)]

        t0 = time.perf_counter()
        gb, _hit = render_frame_lr(scene, t)
        t1 = time.perf_counter()
        shade(gb, scene, scene.time_of(t))
        t2 = time.perf_counter()
        ni = build_net_input(manifest, t)  # always assemble live: this IS the stage
        t3 = time.perf_counter()
        infer_frame(net, params, ni)
        t4 = time.perf_counter()

        stage_times["gbuffer"].append(t1 - t0)
        stage_times["lr"].append(t2 - t1)
        stage_times["warp"].append(t3 - t2)
        stage_times["network"].append(t4 - t3)

    result = {f"{k}_ms": float(np.median(v) * 1000.0) for k, v in stage_times.items()}
    result["frames"] = max(frames, 1)
    result["width"] = scene.width
    result["height"] = scene.height
    return result
