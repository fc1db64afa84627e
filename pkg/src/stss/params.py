"""Named parameter store with a small binary checkpoint format.

Checkpoint layout (all integers little-endian):
  magic   8 bytes  "STSSPARM"
  version u32
  count   u32
  then per entry:
    name_len u16, name utf-8, rank u8, extents u32 * rank, payload f32-le
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, STSSError
from .tensor import Tensor

MAGIC = b"STSSPARM"
VERSION = 1


class ParamStore:
    """Ordered map of name -> Tensor; iteration order is insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def total_count(self) -> int:
        return sum(t.size for t in self._params.values())

    def count_by_prefix(self) -> dict[str, int]:
        """Parameter counts grouped by the first dotted name component."""
        out: dict[str, int] = {}
        for name, t in self._params.items():
            key = name.split(".", 1)[0]
            out[key] = out.get(key, 0) + t.size
        return out

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_bytes(self) -> bytes:
        """Serialized form, also used for byte-identity checks."""
        chunks = [MAGIC, struct.pack("<II", VERSION, len(self._params))]
        for name, t in self._params.items():
            nb = name.encode("utf-8")
            chunks.append(struct.pack("<H", len(nb)))
            chunks.append(nb)
            chunks.append(struct.pack("<B", len(t.shape)))
            chunks.append(struct.pack(f"<{len(t.shape)}I", *t.shape))
            chunks.append(t.data.astype("<f4", copy=False).tobytes())
        return b"".join(chunks)

    def save(self, path) -> None:
        Path(path).write_bytes(self.state_bytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise STSSError(f"{path}: bad magic, not a parameter file")
        version, count = struct.unpack_from("<II", raw, 8)
        if version != VERSION:
            raise STSSError(f"{path}: unsupported version {version}")
        store = cls()
        off = 16
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape)
            off += 4 * n
            store.add(name, Tensor(data.copy()))
        if off != len(raw):
            raise STSSError(f"{path}: trailing bytes in parameter file")
        return store
