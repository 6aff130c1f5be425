"""Embedding distillation from a frozen teacher through a Hungarian matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import hungarian
from .ctc import LogProbLattice


@dataclass(frozen=True)
class EDConfig:
    teacher_layer: int = -1
    ed_start_step: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.ed_start_step < 0:
            raise ValueError("ed_start_step must be non-negative")

    def layer_index(self, depth: int) -> int:
        l = self.teacher_layer
        if l == 0 or abs(l) > depth:
            raise ValueError(f"teacher layer {l} out of range for a {depth}-layer teacher")
        return l - 1 if l > 0 else depth + l


@dataclass
class Matching:
    """Target position ``i`` is paired with lattice position ``cols[i]``."""

    cols: np.ndarray

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(i, int(j)) for i, j in enumerate(self.cols)]

    def __len__(self) -> int:
        return len(self.cols)


def build_q_matrix(lattice: LogProbLattice | np.ndarray, y: Sequence[int]) -> np.ndarray:
    """``Q[i, j]`` = log-probability of target token ``y[i]`` at lattice frame ``j``."""
    lp = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    if len(y) > lp.shape[0]:
        raise ValueError(f"target longer than lattice ({len(y)} > {lp.shape[0]})")
    return lp[:, np.asarray(y, dtype=np.int64)].T.copy()


def align_targets(q: np.ndarray) -> Matching:
    """Matching maximizing the summed log-probability of matched cells."""
    q = np.asarray(q, dtype=np.float64)
    # -inf log-probabilities would make the cost non-finite; clamp to a large finite cost
    cost = -np.maximum(q, np.finfo(np.float64).min / (4 * q.size))
    cols, _ = hungarian(cost)
    return Matching(cols)


def ed_loss(h_nat: np.ndarray, h_teacher: np.ndarray, matching: Matching) -> tuple[float, np.ndarray]:
    """Mean ``1 - cos`` between each teacher state and its matched student state.

    Returns the loss and its gradient w.r.t. ``h_nat`` (unmatched rows get
    zero). The teacher side is treated as a constant.
    """
    h_nat = np.asarray(h_nat)
    h_teacher = np.asarray(h_teacher)
    if h_nat.shape[1] != h_teacher.shape[1]:
        raise ValueError("student and teacher dimensions differ")
    if len(matching) != h_teacher.shape[0]:
        raise ValueError("matching does not cover every teacher position")
    a = h_nat[matching.cols].astype(np.float64)
    b = h_teacher.astype(np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na <= 1e-12) or np.any(nb <= 1e-12):
        raise ValueError("degenerate cosine: zero-norm vector in matched pair")
    cos = np.sum(a * b, axis=1) / (na * nb)
    n = len(cos)
    loss = float(np.mean(1.0 - cos))
    d_a = -(b / (na * nb)[:, None] - cos[:, None] * a / (na**2)[:, None]) / n
    grad = np.zeros(h_nat.shape, dtype=np.float64)
    np.add.at(grad, matching.cols, d_a)
    return loss, grad


def combined_loss(l_ctc: float, l_ed: float, lam: int) -> float:
    if lam not in (0, 1):
        raise ValueError("lambda must be 0 or 1")
    return l_ctc + lam * l_ed if lam else l_ctc


def lambda_schedule(step: int, ed_start_step: int) -> int:
    return 0 if step < ed_start_step else 1
