"""Finite-difference verification of analytic gradients.

The op under test is reduced to a scalar through a fixed random projection.
Analytic gradients come from one backward pass on the production float32
path; numeric gradients come from central differences with the op re-run in
float64, so the comparison measures the correctness of the backward math
rather than float32 rounding noise.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NonFiniteError
from .params import ParamStore
from .tensor import Tensor, precision

MAX_ELEMENTS = 1000


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(1.0, float(np.abs(analytic).max(initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def grad_check(fn, inputs: list[Tensor], epsilon: float = 1e-3, seed: int = 0) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``fn`` maps the given tensors to a single output tensor.  Each input must
    have ``requires_grad`` set; inputs are not modified.
    """
    if not 1e-4 <= epsilon <= 1e-2:
        raise ContractError(f"epsilon {epsilon} outside [1e-4, 1e-2]")
    total = sum(t.size for t in inputs)
    if total > MAX_ELEMENTS:
        raise ContractError(f"grad_check inputs too large ({total} > {MAX_ELEMENTS})")
    for t in inputs:
        if not t.requires_grad:
            raise ContractError("grad_check inputs must require gradients")
        if not np.all(np.isfinite(t.data)):
            raise NonFiniteError("grad_check input contains non-finite values")

    rng = np.random.default_rng(seed)
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)

    for t in inputs:
        t.grad = None
    out.backward(seed=proj)
    analytic = [np.array(t.grad, dtype=np.float64, copy=True) for t in inputs]

    worst = 0.0
    with precision(np.float64):
        shadows = [Tensor(t.data.astype(np.float64)) for t in inputs]

        def loss_at() -> float:
            val = fn(*shadows).data
            if not np.all(np.isfinite(val)):
                raise NonFiniteError("non-finite forward value during grad_check")
            return float((val * proj).sum())

        for shadow, a in zip(shadows, analytic):
            flat = shadow.data.reshape(-1)
            numeric = np.empty_like(a).reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + epsilon
                f_hi = loss_at()
                flat[idx] = orig - epsilon
                f_lo = loss_at()
                flat[idx] = orig
                numeric[idx] = (f_hi - f_lo) / (2.0 * epsilon)
            worst = max(worst, _rel_error(a, numeric.reshape(a.shape)))
    return worst


def grad_check_params(
    loss_fn,
    params: ParamStore,
    sample: list[tuple[str, int]],
    epsilon: float = 1e-3,
) -> float:
    """Finite-difference check of a scalar loss against selected parameters.

    ``loss_fn(params)`` must return a scalar Tensor and must build any
    internal constant tensors inside the call (so the float64 shadow pass
    sees consistent dtypes).  ``sample`` lists (parameter name, flat index)
    pairs to probe.
    """
    loss = loss_fn(params)
    params.zero_grads()
    loss.backward()
    analytic = np.array(
        [float(params[name].grad.reshape(-1)[idx]) for name, idx in sample], dtype=np.float64
    )

    with precision(np.float64):
        shadow = ParamStore()
        for name, t in params.items():
            shadow.add(name, Tensor(t.data.astype(np.float64)))

        def loss_at() -> float:
            return float(loss_fn(shadow).data)

        numeric = np.empty_like(analytic)
        for i, (name, idx) in enumerate(sample):
            flat = shadow[name].data.reshape(-1)
            orig = flat[idx]
            flat[idx] = orig + epsilon
            f_hi = loss_at()
            flat[idx] = orig - epsilon
            f_lo = loss_at()
            flat[idx] = orig
            numeric[i] = (f_hi - f_lo) / (2.0 * epsilon)
    return _rel_error(analytic, numeric)
