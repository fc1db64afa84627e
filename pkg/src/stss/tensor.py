"""Dense float32 tensors with reverse-mode differentiation.

The operator set is fixed and closed: exactly the kernels the supersampling
network needs (convolution, pointwise activations/arithmetic, channel concat,
2x average pooling, 2x bilinear upsampling, space-to-depth, window attention
lives in :mod:`stss.erm`).  Image tensors use (batch, channels, height, width)
layout throughout.

Every forward op validates finiteness of its output when ``FINITE_CHECKS``
is on; NaN/Inf is treated as a hard error, not a value.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import ContractError, NonFiniteError

# Global toggle: scan every op output for NaN/Inf. Costs one pass over the
# output buffer per op; turn off only for benchmarking.
FINITE_CHECKS = True

# Working dtype. float32 in production; the grad-check harness temporarily
# switches to float64 so finite differences are not drowned in f32 rounding.
_ACTIVE_DTYPE = np.float32


@contextlib.contextmanager
def precision(dtype):
    global _ACTIVE_DTYPE
    prev = _ACTIVE_DTYPE
    _ACTIVE_DTYPE = dtype
    try:
        yield
    finally:
        _ACTIVE_DTYPE = prev


def _asarray(data) -> np.ndarray:
    arr = np.asarray(data, dtype=_ACTIVE_DTYPE)
    return np.ascontiguousarray(arr)


class Tensor:
    """A float32 array plus an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse-mode pass from this node, accumulating into ``.grad``.

        ``seed`` defaults to ones (i.e. gradient of ``sum(self)``); pass an
        explicit array to backpropagate an arbitrary linear functional.
        """
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ContractError("backward seed shape mismatch")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self._accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _check_finite(arr: np.ndarray, op: str) -> None:
    if FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in output of {op}")


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data.astype(_ACTIVE_DTYPE, copy=False)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# pointwise ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ContractError(f"add shape mismatch {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ContractError(f"sub shape mismatch {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; numpy broadcasting allowed (e.g. mask * features)."""
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ContractError(f"mul shape mismatch {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    st = a.data.dtype.type(s)
    data = a.data * st

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * st)

    return _node(data, (a,), backward, "scale")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return _node(data, (a,), backward, "relu")


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    slope = a.data.dtype.type(slope)
    data = np.where(a.data > 0, a.data, a.data * slope)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.where(a.data > 0, g, g * slope))

    return _node(data, (a,), backward, "leaky_relu")


def absolute(a: Tensor) -> Tensor:
    """|a|, with subgradient 0 at exactly 0."""
    data = np.abs(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * np.sign(a.data))

    return _node(data, (a,), backward, "absolute")


def mean(a: Tensor) -> Tensor:
    data = np.asarray(a.data.mean(dtype=np.float64), dtype=a.data.dtype)
    n = a.data.size

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g) / n))

    return _node(data, (a,), backward, "mean")


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(dtype=np.float64), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g)))

    return _node(data, (a,), backward, "sum")


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def concat_channels(tensors: list[Tensor]) -> Tensor:
    if not tensors:
        raise ContractError("concat_channels of empty list")
    base = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(base) or t.shape[0] != base[0] or t.shape[2:] != base[2:]:
            raise ContractError(f"concat_channels incompatible shapes {base} vs {t.shape}")
    data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=1)
        for t, part in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(part)

    return _node(data, tuple(tensors), backward, "concat_channels")


def avg_pool2(a: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    n, c, h, w = _require_nchw(a, "avg_pool2")
    if h % 2 or w % 2:
        raise ContractError(f"avg_pool2 needs even dims, got {h}x{w}")
    data = a.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        if a.requires_grad:
            up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
            a._accumulate(up * g.dtype.type(0.25))

    return _node(data, (a,), backward, "avg_pool2")


def space_to_depth(a: Tensor, factor: int = 2) -> Tensor:
    """Pixel-unshuffle: (N,C,H,W) -> (N, C*f*f, H/f, W/f), exact inverse in backward."""
    n, c, h, w = _require_nchw(a, "space_to_depth")
    f = int(factor)
    if f < 1 or h % f or w % f:
        raise ContractError(f"space_to_depth factor {f} incompatible with {h}x{w}")
    hh, ww = h // f, w // f
    data = (
        a.data.reshape(n, c, hh, f, ww, f)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, c * f * f, hh, ww)
    )

    def backward(g):
        if a.requires_grad:
            back = (
                g.reshape(n, c, f, f, hh, ww)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, c, h, w)
            )
            a._accumulate(back)

    return _node(data, (a,), backward, "space_to_depth")


def _require_nchw(a: Tensor, op: str) -> tuple[int, int, int, int]:
    if len(a.shape) != 4:
        raise ContractError(f"{op} expects a 4-d (N,C,H,W) tensor, got {a.shape}")
    return a.shape  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# bilinear 2x upsampling (half-pixel centers, edges clamped)
# ---------------------------------------------------------------------------
#
# Output sample 2i sits a quarter pixel above input sample i, 2i+1 a quarter
# below, so each output row is a (0.25, 0.75) or (0.75, 0.25) blend of two
# input rows.  Weights sum to 1, so constants are preserved exactly.

def _up1d_last(x: np.ndarray) -> np.ndarray:
    prev = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    nxt = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    even = 0.75 * x + 0.25 * prev
    odd = 0.75 * x + 0.25 * nxt
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=x.dtype)
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def _up1d_last_adjoint(g: np.ndarray) -> np.ndarray:
    ge = g[..., 0::2]
    go = g[..., 1::2]
    dx = (0.75 * (ge + go)).astype(g.dtype)
    # prev[i] = x[max(i-1, 0)]
    dx[..., :-1] += 0.25 * ge[..., 1:]
    dx[..., 0] += 0.25 * ge[..., 0]
    # nxt[i] = x[min(i+1, n-1)]
    dx[..., 1:] += 0.25 * go[..., :-1]
    dx[..., -1] += 0.25 * go[..., -1]
    return dx


def _upsample2_fwd(x: np.ndarray) -> np.ndarray:
    y = _up1d_last(x)
    y = _up1d_last(y.swapaxes(-1, -2)).swapaxes(-1, -2)
    return np.ascontiguousarray(y)


def _upsample2_adj(g: np.ndarray) -> np.ndarray:
    y = _up1d_last_adjoint(g.swapaxes(-1, -2)).swapaxes(-1, -2)
    return np.ascontiguousarray(_up1d_last_adjoint(y))


def bilinear_upsample2(a: Tensor) -> Tensor:
    _require_nchw(a, "bilinear_upsample2")
    data = _upsample2_fwd(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_upsample2_adj(g))

    return _node(data, (a,), backward, "bilinear_upsample2")


# ---------------------------------------------------------------------------
# 2-d convolution (cross-correlation), im2col + BLAS matmul
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (N, C, oh, ow, kh, kw)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Standard cross-correlation conv over (N,C,H,W) with square stride/pad."""
    n, c, h, w = _require_nchw(x, "conv2d")
    if len(weight.shape) != 4:
        raise ContractError(f"conv2d weight must be 4-d, got {weight.shape}")
    oc, ic, kh, kw = weight.shape
    if ic != c:
        raise ContractError(f"conv2d channel mismatch: input {c}, weight expects {ic}")
    if bias is not None and bias.shape != (oc,):
        raise ContractError(f"conv2d bias shape {bias.shape} != ({oc},)")
    stride = int(stride)
    padding = int(padding)
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ContractError("conv2d output would be empty")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)  # (N, C*kh*kw, L)
    wmat = weight.data.reshape(oc, c * kh * kw)
    out = np.matmul(wmat, cols)  # (N, oc, L)
    if bias is not None:
        out += bias.data.reshape(1, oc, 1)
    out = out.reshape(n, oc, oh, ow)

    def backward(g):
        gmat = np.ascontiguousarray(g.reshape(n, oc, oh * ow))
        if weight.requires_grad:
            dw = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
            weight._accumulate(dw.reshape(oc, c, kh, kw))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gmat.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, gmat)  # (N, C*kh*kw, L)
            dcols = dcols.reshape(n, c, kh, kw, oh, ow)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += dcols[
                        :, :, i, j
                    ]
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(dxp)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, backward, "conv2d")
