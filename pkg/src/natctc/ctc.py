"""Connectionist temporal classification in log space.

The loss is the negative log of the summed probability of every frame
alignment that collapses onto the target, computed with the usual
blank-interleaved forward/backward recursion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

NEG_INF = -np.inf


class LogProbLattice:
    """A ``T x V`` matrix of per-frame log-probabilities (rows log-sum-exp to 0)."""

    def __init__(self, values: np.ndarray, check: bool = True):
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"lattice must be a non-empty T x V matrix, got shape {values.shape}")
        if check:
            rows = _logsumexp_rows(values.astype(np.float64))
            if np.any(np.abs(rows) > 1e-6) or np.any(values > 1e-9):
                raise ValueError("lattice rows are not normalized log-probabilities")
        self.values = values

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def V(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, idx):
        return self.values[idx]

    @classmethod
    def from_probs(cls, probs) -> "LogProbLattice":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=np.float64)))


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return (m + np.log(np.sum(np.exp(x - m), axis=1, keepdims=True)))[:, 0]


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(logits, axis=axis, keepdims=True)
    z = logits - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def log_softmax_lattice(logits) -> LogProbLattice:
    logits = np.asarray(logits)
    if np.isnan(logits).any():
        raise ValueError("NaN in logits")
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits")
    return LogProbLattice(log_softmax(logits, axis=1), check=False)


@dataclass
class CTCResult:
    loss: float
    grad: np.ndarray
    feasible: bool = True


def min_frames(y: Sequence[int]) -> int:
    """Shortest alignment for ``y``: one frame per label plus a blank between repeats."""
    return len(y) + sum(1 for a, b in zip(y, y[1:]) if a == b)


def _check_target(y: Sequence[int], blank_id: int) -> None:
    if len(y) == 0:
        raise ValueError("empty target sequence")
    if blank_id in y:
        raise ValueError("target contains the blank id")


def ctc_forward(lp: np.ndarray, y: Sequence[int], blank_id: int) -> np.ndarray:
    """Forward variables over the extended label sequence, shape ``(T, 2|y|+1)``."""
    T = lp.shape[0]
    ext = np.full(2 * len(y) + 1, blank_id, dtype=np.int64)
    ext[1::2] = y
    S = ext.size
    # skip transition s-2 -> s allowed only onto a label differing from the previous label
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    alpha[0, 1] = lp[0, ext[1]]
    emit = lp[:, ext]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + emit[t]
    return alpha


def ctc_backward(lp: np.ndarray, y: Sequence[int], blank_id: int) -> np.ndarray:
    """Backward variables including the emission at frame t."""
    T = lp.shape[0]
    ext = np.full(2 * len(y) + 1, blank_id, dtype=np.int64)
    ext[1::2] = y
    S = ext.size
    # skip s+2 -> s allowed when ext[s+2] is a label differing from ext[s]
    skip = np.zeros(S, dtype=bool)
    skip[1:-2:2] = ext[3::2] != ext[1:-2:2]
    beta = np.full((T, S), NEG_INF)
    emit = lp[:, ext]
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[:-2], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b + emit[t]
    return beta


def ctc_loss(lattice: LogProbLattice | np.ndarray, y: Sequence[int], blank_id: int) -> CTCResult:
    """Negative log marginal likelihood of ``y`` and its gradient w.r.t. the logits.

    The gradient assumes the lattice is ``log_softmax(logits)`` row-wise.
    When ``y`` needs more frames than the lattice has, the result carries
    ``loss=inf``, a zero gradient and ``feasible=False``.
    """
    lp = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    lp = lp.astype(np.float64, copy=False)
    y = [int(t) for t in y]
    _check_target(y, blank_id)
    T, V = lp.shape
    if min_frames(y) > T:
        return CTCResult(float("inf"), np.zeros((T, V)), feasible=False)

    alpha = ctc_forward(lp, y, blank_id)
    beta = ctc_backward(lp, y, blank_id)
    log_z = np.logaddexp(alpha[-1, -1], alpha[-1, -2])

    ext = np.full(2 * len(y) + 1, blank_id, dtype=np.int64)
    ext[1::2] = y
    # occupancy of each extended state, in log space: alpha*beta / emission / Z
    with np.errstate(invalid="ignore"):
        occ = alpha + beta - lp[:, ext] - log_z
    occ = np.where(np.isfinite(occ), occ, NEG_INF)
    post = np.zeros((T, V))
    np.add.at(post.T, ext, np.exp(occ).T)
    grad = np.exp(lp) - post
    return CTCResult(float(-log_z), grad)


def collapse(a: Sequence[int], blank_id: int) -> list[int]:
    out = []
    prev = None
    for tok in a:
        tok = int(tok)
        if tok != prev and tok != blank_id:
            out.append(tok)
        prev = tok
    return out


def enumerate_alignments(y: Sequence[int], T: int, blank_id: int, V: int) -> set[tuple[int, ...]]:
    """Every length-``T`` label sequence over ``range(V)`` that collapses to ``y``.

    Brute force over all ``V**T`` sequences; intended as a test oracle.
    """
    if T > 8 or len(y) > 4 or V > 4:
        raise ValueError(f"enumeration budget exceeded (T={T}, |y|={len(y)}, V={V}; limits 8, 4, 4)")
    target = [int(t) for t in y]
    return {a for a in itertools.product(range(V), repeat=T) if collapse(a, blank_id) == target}


def greedy_decode(lattice: LogProbLattice | np.ndarray, blank_id: int) -> list[int]:
    lp = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    return collapse(np.argmax(lp, axis=1), blank_id)
