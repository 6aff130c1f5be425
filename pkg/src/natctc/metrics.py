"""Corpus-level tokenized BLEU and exact-match accuracy."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: list[int]
    totals: list[int]

    def __str__(self) -> str:
        prec = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.bleu:.2f} {prec} (BP={self.brevity_penalty:.3f} "
            f"hyp_len={self.hyp_len} ref_len={self.ref_len})"
        )


def _tokens(s) -> list:
    return s.split() if isinstance(s, str) else list(s)


def _ngrams(toks: list, n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def corpus_bleu(hypotheses: Sequence, references: Sequence, max_n: int = 4) -> BleuReport:
    """Single-reference corpus BLEU without smoothing.

    Sentences may be whitespace-tokenized strings or token lists.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not references:
        raise ValueError("no references")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = _tokens(hyp), _tokens(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len <= ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) == 0.0 or bp == 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len, matches, totals)


def sequence_accuracy(hypotheses: Sequence, references: Sequence) -> float:
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not references:
        return 0.0
    hits = sum(_tokens(h) == _tokens(r) for h, r in zip(hypotheses, references))
    return hits / len(references)


def token_error_rate(hypotheses: Sequence, references: Sequence) -> float:
    """Levenshtein distance summed over the corpus, divided by reference length."""
    errors = total = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = _tokens(hyp), _tokens(ref)
        prev = list(range(len(r) + 1))
        for i, a in enumerate(h, start=1):
            cur = [i] + [0] * len(r)
            for j, b in enumerate(r, start=1):
                cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a != b))
            prev = cur
        errors += prev[-1]
        total += len(r)
    return errors / max(total, 1)
