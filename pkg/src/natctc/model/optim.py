"""Adam with freeze flags, and checkpoint averaging."""

from __future__ import annotations

import numpy as np

from .encoder import ModelError, ParamStore


def adam_update(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """One bias-corrected Adam step in place; frozen tensors are left untouched."""
    for name, g in grads.items():
        if name not in params.tensors:
            raise ModelError(f"gradient for unknown tensor {name}")
        if g.shape != params.tensors[name].shape:
            raise ModelError(f"{name}: gradient shape {g.shape} != {params.tensors[name].shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        if name in params.frozen:
            continue
        p = params.tensors[name]
        m = params.adam_m.get(name)
        v = params.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        params.adam_m[name] = m
        params.adam_v[name] = v
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params


def average_checkpoints(stores: list[ParamStore]) -> ParamStore:
    if not stores:
        raise ModelError("no checkpoints to average")
    first = stores[0]
    for s in stores[1:]:
        if s.config != first.config or list(s.tensors) != list(first.tensors):
            raise ModelError("checkpoints have different configurations")
        for k, v in s.tensors.items():
            if v.shape != first.tensors[k].shape:
                raise ModelError(f"{k}: shape mismatch between checkpoints")
    tensors = {}
    for k, v in first.tensors.items():
        acc = np.zeros(v.shape, dtype=np.float64)
        for s in stores:
            acc += s.tensors[k]
        tensors[k] = (acc / len(stores)).astype(v.dtype)
    return ParamStore(first.config, tensors, set(first.frozen), 0)
