"""CTC prefix beam search with shallow n-gram fusion and a per-token length bonus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .ctc import LogProbLattice, ctc_loss
from .ngram import LMState, NgramModel

NEG_INF = float("-inf")


def _lae(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    return float(np.logaddexp(a, b))


@dataclass
class BeamConfig:
    alpha: float = 0.3
    beta: float = 0.9
    beam_size: int = 20
    lm: NgramModel | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.lm is None and self.alpha != 0:
            raise ValueError("alpha > 0 requires a language model")


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    p_blank: float = NEG_INF
    p_nonblank: float = NEG_INF
    lm_state: LMState | None = None
    # alpha * LM log-prob + beta * length, accumulated per emitted token
    fusion: float = 0.0

    @property
    def p_total(self) -> float:
        return _lae(self.p_blank, self.p_nonblank)

    @property
    def score(self) -> float:
        return self.p_total + self.fusion


def _rank_key(h: Hypothesis, score: float):
    return (-score, len(h.tokens), h.tokens)


def _search_frames(lattice, cfg: BeamConfig, blank_id: int) -> Iterator[dict[tuple, Hypothesis]]:
    """Yield the surviving beam after each frame."""
    lp = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    lp = lp.astype(np.float64, copy=False)
    T, V = lp.shape
    lm = cfg.lm if cfg.alpha != 0 else None
    labels = [c for c in range(V) if c != blank_id]
    root = Hypothesis((), p_blank=0.0, lm_state=lm.start_state() if lm else None)
    beams = {(): root}
    for t in range(T):
        row = lp[t]
        nxt: dict[tuple, Hypothesis] = {}

        def slot(prefix: tuple, parent: Hypothesis, token: int | None) -> Hypothesis:
            h = nxt.get(prefix)
            if h is None:
                if token is None:
                    h = Hypothesis(prefix, lm_state=parent.lm_state, fusion=parent.fusion)
                else:
                    state, fused = parent.lm_state, parent.fusion + cfg.beta
                    if lm is not None:
                        state, lp_lm = lm.score(parent.lm_state, token)
                        fused += cfg.alpha * lp_lm
                    h = Hypothesis(prefix, lm_state=state, fusion=fused)
                nxt[prefix] = h
            return h

        for prefix, h in beams.items():
            total = h.p_total
            stay = slot(prefix, h, None)
            stay.p_blank = _lae(stay.p_blank, total + row[blank_id])
            last = prefix[-1] if prefix else None
            if last is not None:
                stay.p_nonblank = _lae(stay.p_nonblank, h.p_nonblank + row[last])
            for c in labels:
                # a repeated label only starts a new token after a blank
                src = h.p_blank if c == last else total
                if src == NEG_INF or row[c] == NEG_INF:
                    continue
                ext = slot(prefix + (c,), h, c)
                ext.p_nonblank = _lae(ext.p_nonblank, src + row[c])

        ranked = sorted(nxt.values(), key=lambda h: _rank_key(h, h.score))
        beams = {h.tokens: h for h in ranked[: cfg.beam_size]}
        yield beams


def _final_score(h: Hypothesis, cfg: BeamConfig) -> float:
    score = h.score
    if cfg.lm is not None and cfg.alpha != 0:
        score += cfg.alpha * cfg.lm.eos_score(h.lm_state)
    return score


def ctc_beam_search(lattice, cfg: BeamConfig, blank_id: int) -> list[tuple[list[int], float]]:
    """Ranked ``(tokens, score)`` pairs, best first.

    ``score = log p_ctc(y) + alpha * log p_lm(y) + beta * |y|`` where the
    CTC term is the alignment mass the beam kept for ``y``.
    """
    beams: dict[tuple, Hypothesis] = {}
    for beams in _search_frames(lattice, cfg, blank_id):
        pass
    scored = [(h, _final_score(h, cfg)) for h in beams.values()]
    scored.sort(key=lambda hs: _rank_key(*hs))
    return [(list(h.tokens), s) for h, s in scored[: cfg.beam_size]]


def rescore(y, lattice, cfg: BeamConfig, blank_id: int) -> float:
    """Exact fused objective for one candidate ``y``."""
    lp = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    y = [int(t) for t in y]
    if not y:
        ctc = float(np.sum(lp[:, blank_id]))
    else:
        res = ctc_loss(lp, y, blank_id)
        if not res.feasible:
            return NEG_INF
        ctc = -res.loss
    score = ctc + cfg.beta * len(y)
    if cfg.lm is not None and cfg.alpha != 0:
        score += cfg.alpha * cfg.lm.sentence_logprob(y)
    return score
