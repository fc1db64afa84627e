"""The shared supersampling/extrapolation network.

A small U-Net over the doubled (masked + original) input stack, with the
reshading attention module at the deepest level, a separately encoded history
branch fused into the decoder at half resolution, and an upsample+conv head
that predicts a residual over the bilinearly upsampled nearest warped frame.
One parameter set serves both frame roles.

Two presets ship: "desk" trains in minutes on a CPU; "paper" is sized to the
published cost budget (~0.4M parameters, ~31 GFLOPs for 960x540 input).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .erm import ERMConfig, erm_apply, erm_flops
from .errors import ConfigError, ContractError
from .params import ParamStore
from .tensor import Tensor

IN_CHANNELS = 21  # warped LR triplet (9) + G-buffer (9) + masks (3)
BACKBONE_IN = 2 * IN_CHANNELS  # masked copy + original copy
HISTORY_IN = 12  # warped LR triplet + masks
GBUFFER_CHANNELS = 9
UPSCALE = 2


@dataclass
class NetConfig:
    encoder: tuple[int, int, int] = (24, 32, 48)
    up_proj: int = 32
    decoder: tuple[int, int] = (32, 16)
    history: tuple[int, int] = (16, 16)
    erm: ERMConfig = field(default_factory=ERMConfig)
    double_convs: bool = True
    erm_enabled: bool = True
    preset: str = "desk"

    @classmethod
    def desk(cls, **overrides) -> "NetConfig":
        return replace(cls(), **overrides)

    @classmethod
    def paper(cls, **overrides) -> "NetConfig":
        cfg = cls(
            encoder=(8, 16, 176),
            up_proj=16,
            decoder=(16, 8),
            history=(16, 32),
            erm=ERMConfig(window=5, embed_dim=88, q_kernel=3, kv_kernel=1, out_kernel=1),
            double_convs=False,
            preset="paper",
        )
        return replace(cfg, **overrides)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["net"] = {
            "preset": self.preset,
            "encoder": ",".join(map(str, self.encoder)),
            "up_proj": str(self.up_proj),
            "decoder": ",".join(map(str, self.decoder)),
            "history": ",".join(map(str, self.history)),
            "double_convs": str(self.double_convs),
            "erm_enabled": str(self.erm_enabled),
        }
        cp["erm"] = {
            "window": str(self.erm.window),
            "embed_dim": str(self.erm.embed_dim),
            "q_kernel": str(self.erm.q_kernel),
            "kv_kernel": str(self.erm.kv_kernel),
            "out_kernel": str(self.erm.out_kernel),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "NetConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "net" not in cp:
            raise ConfigError("network config text lacks a [net] section")
        net = cp["net"]
        ints = lambda s: tuple(int(x) for x in s.split(","))  # noqa: E731
        erm_sec = cp["erm"] if "erm" in cp else {}
        return cls(
            encoder=ints(net["encoder"]),  # type: ignore[arg-type]
            up_proj=int(net["up_proj"]),
            decoder=ints(net["decoder"]),  # type: ignore[arg-type]
            history=ints(net["history"]),  # type: ignore[arg-type]
            erm=ERMConfig(
                window=int(erm_sec.get("window", 5)),
                embed_dim=int(erm_sec.get("embed_dim", 32)),
                q_kernel=int(erm_sec.get("q_kernel", 3)),
                kv_kernel=int(erm_sec.get("kv_kernel", 1)),
                out_kernel=int(erm_sec.get("out_kernel", 1)),
            ),
            double_convs=net.getboolean("double_convs"),
            erm_enabled=net.getboolean("erm_enabled"),
            preset=net.get("preset", "custom"),
        )


@dataclass
class LayerSpec:
    name: str
    in_c: int
    out_c: int
    kernel: int
    level: int  # 0 = input res, 1 = /2, 2 = /4, 3 = 2x output res
    zero_init: bool = False

    @property
    def weight_count(self) -> int:
        return self.in_c * self.out_c * self.kernel * self.kernel

    @property
    def param_count(self) -> int:
        return self.weight_count + self.out_c


def layer_specs(cfg: NetConfig) -> list[LayerSpec]:
    e0, e1, e2 = cfg.encoder
    d1, d0 = cfg.decoder
    h0, h1 = cfg.history
    erm = cfg.erm
    specs = [LayerSpec("backbone.enc0.c1", BACKBONE_IN, e0, 3, 0)]
    if cfg.double_convs:
        specs.append(LayerSpec("backbone.enc0.c2", e0, e0, 3, 0))
    specs.append(LayerSpec("backbone.enc1.c1", e0, e1, 3, 1))
    if cfg.double_convs:
        specs.append(LayerSpec("backbone.enc1.c2", e1, e1, 3, 1))
    specs.append(LayerSpec("backbone.enc2.c1", e1, e2, 3, 2))
    specs.append(LayerSpec("backbone.enc2.c2", e2, e2, 3, 2))
    if cfg.erm_enabled:
        specs.append(LayerSpec("erm.q_proj", GBUFFER_CHANNELS, erm.embed_dim, erm.q_kernel, 2))
        specs.append(
            LayerSpec("erm.kv_proj", e2 + GBUFFER_CHANNELS, erm.embed_dim, erm.kv_kernel, 2)
        )
        specs.append(LayerSpec("erm.out_proj", erm.embed_dim, e2, erm.out_kernel, 2))
    specs.append(LayerSpec("backbone.up_proj", e2, cfg.up_proj, 1, 2))
    specs.append(LayerSpec("history.c1", HISTORY_IN, h0, 3, 0))
    specs.append(LayerSpec("history.c2", h0, h1, 3, 1))
    specs.append(LayerSpec("history.c3", h1, h1, 3, 1))
    specs.append(LayerSpec("backbone.dec1.c1", cfg.up_proj + e1 + h1, d1, 3, 1))
    if cfg.double_convs:
        specs.append(LayerSpec("backbone.dec1.c2", d1, d1, 3, 1))
    specs.append(LayerSpec("backbone.dec0.c1", d1 + e0, d0, 3, 0))
    if cfg.double_convs:
        specs.append(LayerSpec("backbone.dec0.c2", d0, d0, 3, 0))
    specs.append(LayerSpec("backbone.head", d0, 3, 3, 3, zero_init=True))
    return specs


def init_params(cfg: NetConfig, seed: int = 0) -> ParamStore:
    """He-normal weights, zero biases; the head conv starts at exactly zero."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for spec in layer_specs(cfg):
        if spec.zero_init:
            w = np.zeros((spec.out_c, spec.in_c, spec.kernel, spec.kernel), np.float32)
        else:
            std = np.sqrt(2.0 / (spec.in_c * spec.kernel * spec.kernel))
            w = rng.normal(0.0, std, (spec.out_c, spec.in_c, spec.kernel, spec.kernel))
        params.add(f"{spec.name}.weight", Tensor(w))
        params.add(f"{spec.name}.bias", Tensor(np.zeros(spec.out_c, np.float32)))
    return params


def count_params(cfg: NetConfig) -> dict[str, int]:
    """Exact parameter counts per component; parts sum to the total."""
    table = {"backbone": 0, "history": 0, "erm": 0}
    for spec in layer_specs(cfg):
        table[spec.name.split(".", 1)[0]] += spec.param_count
    table["total"] = sum(table.values())
    return table


def count_flops(cfg: NetConfig, height: int, width: int) -> dict[str, int]:
    """Analytic multiply+add accounting (2 per MAC, biases excluded)."""
    if height % 4 or width % 4:
        raise ContractError("input dims must be divisible by 4")
    px = {
        0: height * width,
        1: (height // 2) * (width // 2),
        2: (height // 4) * (width // 4),
        3: (height * UPSCALE) * (width * UPSCALE),
    }
    table = {"backbone": 0, "history": 0, "erm": 0}
    for spec in layer_specs(cfg):
        table[spec.name.split(".", 1)[0]] += 2 * spec.weight_count * px[spec.level]
    if cfg.erm_enabled:
        attn = erm_flops(cfg.erm, height // 4, width // 4)["attention"]
        table["erm"] += attn
    table["total"] = sum(table.values())
    return table


class STSSNet:
    """Forward pass plus parameter construction for one NetConfig."""

    def __init__(self, cfg: NetConfig):
        self.cfg = cfg
        self._blocks: dict[str, list[LayerSpec]] = {}
        for spec in layer_specs(cfg):
            block = spec.name.rsplit(".", 1)[0] if "." in spec.name else spec.name
            self._blocks.setdefault(block, []).append(spec)

    def init_params(self, seed: int = 0) -> ParamStore:
        return init_params(self.cfg, seed)

    def _conv(self, params: ParamStore, x: Tensor, name: str, kernel: int) -> Tensor:
        return T.conv2d(
            x, params[f"{name}.weight"], params[f"{name}.bias"], padding=kernel // 2
        )

    def _block(self, params: ParamStore, x: Tensor, block: str) -> Tensor:
        for spec in self._blocks[block]:
            x = T.relu(self._conv(params, x, spec.name, spec.kernel))
        return x

    def forward(
        self,
        params: ParamStore,
        backbone: np.ndarray,
        history: np.ndarray,
        gbuffer: np.ndarray,
        erm_mask: np.ndarray,
    ) -> Tensor:
        """Predict the high-res frame; output dims are exactly 2x the input."""
        if backbone.ndim != 4 or backbone.shape[1] != BACKBONE_IN:
            raise ContractError(
                f"backbone input must be (N,{BACKBONE_IN},H,W), got {backbone.shape}"
            )
        n, _c, h, w = backbone.shape
        if h % 4 or w % 4:
            raise ContractError(f"input dims {h}x{w} must be divisible by 4")
        if history.shape != (n, HISTORY_IN, h, w):
            raise ContractError(f"history input shape {history.shape} is inconsistent")
        if gbuffer.shape != (n, GBUFFER_CHANNELS, h, w):
            raise ContractError(f"gbuffer input shape {gbuffer.shape} is inconsistent")
        if erm_mask.shape != (n, 1, h, w):
            raise ContractError(f"erm mask shape {erm_mask.shape} is inconsistent")

        x = Tensor(backbone)
        # global skip over the original-copy nearest warped frame (holes stay black)
        skip = T.bilinear_upsample2(Tensor(backbone[:, IN_CHANNELS : IN_CHANNELS + 3]))

        e0 = self._block(params, x, "backbone.enc0")
        e1 = self._block(params, T.avg_pool2(e0), "backbone.enc1")
        e2 = self._block(params, T.avg_pool2(e1), "backbone.enc2")

        if self.cfg.erm_enabled:
            gb_ds = _avgpool2_np(_avgpool2_np(gbuffer))
            mask_ds = _minpool2_np(_minpool2_np(erm_mask))
            e2 = erm_apply(e2, Tensor(gb_ds), Tensor(mask_ds), params, self.cfg.erm)

        u1 = T.bilinear_upsample2(self._conv(params, e2, "backbone.up_proj", 1))

        hx = Tensor(history)
        h1 = T.relu(self._conv(params, hx, "history.c1", 3))
        h2 = T.relu(self._conv(params, T.avg_pool2(h1), "history.c2", 3))
        h3 = T.relu(self._conv(params, h2, "history.c3", 3))

        d1 = self._block(params, T.concat_channels([u1, e1, h3]), "backbone.dec1")
        d0 = self._block(
            params, T.concat_channels([T.bilinear_upsample2(d1), e0]), "backbone.dec0"
        )
        hr = T.bilinear_upsample2(d0)
        residual = self._conv(params, hr, "backbone.head", 3)
        return T.add(residual, skip)


def _avgpool2_np(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)).astype(np.float32)


def _minpool2_np(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).min(axis=(3, 5)).astype(np.float32)
