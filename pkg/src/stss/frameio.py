"""Binary frame files and clip manifests.

Frame file layout (little-endian):
  magic    8 bytes "STSSFRAM"
  version  u32
  role     u8   (SF=0, EF=1)
  channels u16
  height   u32
  width    u32
  payload  channels*height*width float32, planar

A clip manifest is a text file with comment/layout header lines followed by
one record per frame:
  index role lr hr gbuffer mv1 mv2 mv3 mv4 mv5 mask
where each path is relative to the manifest directory and "-" marks a
missing entry (e.g. no LR image on extrapolated frames).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import STSSError

MAGIC = b"STSSFRAM"
VERSION = 1

ROLE_SF = 0
ROLE_EF = 1
_ROLE_NAMES = {ROLE_SF: "SF", ROLE_EF: "EF"}
_ROLE_CODES = {"SF": ROLE_SF, "EF": ROLE_EF}

GBUFFER_LAYOUT = "base_color:3,normal:3,depth:1,metallic:1,roughness:1"
MOTION_LAYOUT = "dx:1,dy:1,valid:1"
NETINPUT_LAYOUT = "lr_warped:9,gbuffer:9,masks:3"


def write_frame(path, planes: np.ndarray, role: int) -> None:
    planes = np.asarray(planes, dtype=np.float32)
    if planes.ndim == 2:
        planes = planes[None]
    if planes.ndim != 3:
        raise STSSError(f"frame payload must be (C,H,W), got {planes.shape}")
    c, h, w = planes.shape
    header = MAGIC + struct.pack("<IBHII", VERSION, role, c, h, w)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(planes, dtype="<f4").tobytes())


def read_frame(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise STSSError(f"{path}: bad magic, not a frame file")
    version, role, c, h, w = struct.unpack_from("<IBHII", raw, 8)
    if version != VERSION:
        raise STSSError(f"{path}: unsupported frame version {version}")
    off = 8 + 15
    n = c * h * w
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
    if data.size != n:
        raise STSSError(f"{path}: truncated frame payload")
    return data.reshape(c, h, w).astype(np.float32), role


def to_png(path, image: np.ndarray) -> None:
    """Write a (3,H,W) linear [0,1] image as 8-bit PNG with gamma 2.2 encode."""
    from PIL import Image

    img = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    if img.ndim != 3 or img.shape[0] != 3:
        raise STSSError(f"png export expects (3,H,W), got {img.shape}")
    encoded = np.power(img, 1.0 / 2.2)
    arr = (encoded * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path)


@dataclass
class FrameRecord:
    index: int
    role: int
    lr: str | None
    hr: str | None
    gbuffer: str | None
    motion: list[str | None]  # paths for t -> t-1 ... t -> t-5
    mask: str | None

    @property
    def role_name(self) -> str:
        return _ROLE_NAMES[self.role]


@dataclass
class ClipManifest:
    root: Path
    records: list[FrameRecord] = field(default_factory=list)
    layout: list[str] = field(default_factory=list)

    MANIFEST_NAME = "clip.manifest"

    def record(self, index: int) -> FrameRecord:
        rec = self.records[index]
        if rec.index != index:
            raise STSSError(f"manifest records out of order at index {index}")
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def load(self, rel: str | None) -> np.ndarray:
        if rel is None:
            raise STSSError("missing file reference in manifest record")
        planes, _role = read_frame(self.root / rel)
        return planes

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / self.MANIFEST_NAME
        lines = ["# stss-clip v1"]
        lines += [f"# layout: {entry}" for entry in self.layout]
        for rec in self.records:
            cols = [str(rec.index), rec.role_name, rec.lr or "-", rec.hr or "-", rec.gbuffer or "-"]
            mv = list(rec.motion) + [None] * (5 - len(rec.motion))
            cols += [m or "-" for m in mv[:5]]
            cols.append(rec.mask or "-")
            lines.append(" ".join(cols))
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "ClipManifest":
        path = Path(path)
        if path.is_dir():
            path = path / cls.MANIFEST_NAME
        manifest = cls(root=path.parent)
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# layout:"):
                    manifest.layout.append(line[len("# layout:") :].strip())
                continue
            cols = line.split()
            if len(cols) != 11:
                raise STSSError(f"{path}: malformed manifest line: {line!r}")
            none = lambda s: None if s == "-" else s  # noqa: E731
            manifest.records.append(
                FrameRecord(
                    index=int(cols[0]),
                    role=_ROLE_CODES[cols[1]],
                    lr=none(cols[2]),
                    hr=none(cols[3]),
                    gbuffer=none(cols[4]),
                    motion=[none(c) for c in cols[5:10]],
                    mask=none(cols[10]),
                )
            )
        return manifest
