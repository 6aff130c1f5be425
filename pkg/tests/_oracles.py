"""Shared brute-force and finite-difference oracles for the test suite."""

from __future__ import annotations

import numpy as np

from natctc.distill import EDConfig
from natctc.model import EncoderConfig, init_params, nat_objective
from natctc.model.encoder import EMBEDDING, POSITIONS
from natctc.upsample import UpsampleConfig

GRAD_FLOOR = 1e-8

# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[n] = (bool(ok), detail)
    return bool(ok)


def rel_error(a: float, n: float, floor: float = GRAD_FLOOR) -> float:
    """Relative disagreement; two values both below ``floor`` count as agreeing."""
    if abs(a) < floor and abs(n) < floor:
        return 0.0
    return abs(a - n) / max(abs(a), abs(n))


def composed_setup(seed: int = 0, d_model: int = 16, n_heads: int = 2):
    """A 2-layer student, a 64-bit teacher and a two-pair batch exercising CTC + ED."""
    cfg = EncoderConfig(vocab_size=12, d_model=d_model, n_layers=2, n_heads=n_heads, d_ff=32, l_pos=32)
    student = init_params(cfg, seed, dtype=np.float64)
    teacher = init_params(cfg, seed + 1, dtype=np.float64)
    rng = np.random.default_rng(seed + 2)
    # perturb biases and gains away from their symmetric init so every tensor class carries signal
    for name, t in student.tensors.items():
        if t.ndim == 1:
            t += rng.normal(scale=0.1, size=t.shape)
    batch = [([6, 7, 8], [9, 10]), ([7, 11, 6, 9], [8, 8, 11])]
    ucfg = UpsampleConfig(scheme="im", ratio=3, mode="dr", l_pos=32)
    return student, teacher, batch, ucfg


def composed_loss(student, teacher, batch, ucfg, matchings=None):
    res = nat_objective(student, teacher, batch, 1, ucfg, EDConfig(), train=False,
                        matchings=matchings, need_grads=matchings is None)
    return res


def sample_coords(student, batch, ucfg, rng, per_tensor: int = 5):
    """Coordinates per tensor, restricted to rows the batch actually reads for lookup tables."""
    from natctc.model.train import upsample_batch

    used_ids = sorted({t for s in upsample_batch([x for x, _ in batch], ucfg) for t in s})
    max_t = max(len(s) for s in upsample_batch([x for x, _ in batch], ucfg))
    coords = {}
    for name, t in student.tensors.items():
        picks = []
        for _ in range(per_tensor):
            if name == EMBEDDING:
                idx = (int(rng.choice(used_ids)), int(rng.integers(t.shape[1])))
            elif name == POSITIONS:
                idx = (int(rng.integers(max_t)), int(rng.integers(t.shape[1])))
            else:
                idx = tuple(int(rng.integers(n)) for n in t.shape)
            picks.append(idx)
        coords[name] = picks
    return coords


def gradcheck_composed(dtype, seed: int = 0, h: float = 1e-5, per_tensor: int = 5):
    """Worst relative error per tensor: analytic gradient at ``dtype`` vs 64-bit central differences."""
    student, teacher, batch, ucfg = composed_setup(seed)
    if dtype != np.float64:
        student = student.astype(dtype).astype(np.float64)  # same point, representable at dtype
    base = composed_loss(student.astype(dtype), teacher, batch, ucfg)
    grads = base.grads
    fixed = base.matchings
    rng = np.random.default_rng(seed + 3)
    worst = {}
    for name, idxs in sample_coords(student, batch, ucfg, rng, per_tensor).items():
        errs = []
        for idx in idxs:
            t = student.tensors[name]
            old = t[idx]
            t[idx] = old + h
            up = composed_loss(student, teacher, batch, ucfg, fixed)
            t[idx] = old - h
            dn = composed_loss(student, teacher, batch, ucfg, fixed)
            t[idx] = old
            fd = ((up.l_ctc + up.l_ed) - (dn.l_ctc + dn.l_ed)) / (2 * h)
            errs.append(rel_error(float(grads[name][idx]), fd))
        worst[name] = max(errs)
    return worst
