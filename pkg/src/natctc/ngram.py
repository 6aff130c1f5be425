"""Back-off n-gram language model with ARPA import/export.

Training uses interpolated absolute discounting with a single discount.
The interpolated estimate is stored in ordinary back-off form, where a
context's back-off weight is exactly its interpolation mass, so the ARPA
file reproduces the trained distribution without loss.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import BOS, EOS, UNK, Vocab

LN10 = math.log(10.0)
LOG10_ZERO = -99.0


class ArpaError(ValueError):
    """Malformed ARPA file."""

    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class LMState:
    model_id: int
    context: tuple[str, ...]


class NgramModel:
    """Back-off tables: ``probs[k][ngram]`` and ``bows[k][ngram]`` in log10.

    ``probs[1]`` holds every predictable word (vocabulary, ``<unk>``,
    ``</s>``) plus ``<s>`` at -99.
    """

    def __init__(
        self,
        order: int,
        probs: dict[int, dict[tuple[str, ...], float]],
        bows: dict[int, dict[tuple[str, ...], float]],
        vocab: Vocab | None = None,
    ):
        if order < 1:
            raise ValueError("order must be at least 1")
        self.order = order
        self.probs = probs
        self.bows = bows
        self.vocab = vocab
        for k in range(1, order + 1):
            probs.setdefault(k, {})
            bows.setdefault(k, {})
        if (UNK,) not in probs[1]:
            raise ValueError("unigram table lacks <unk>")

    # words the model can predict
    @property
    def words(self) -> list[str]:
        return [w for (w,) in self.probs[1] if w != BOS]

    def _word(self, token) -> str:
        if isinstance(token, str):
            w = token
        elif self.vocab is not None:
            w = self.vocab.tokens[int(token)] if 0 <= int(token) < self.vocab.size else UNK
        else:
            raise TypeError("integer tokens need a model with a vocabulary")
        return w if (w,) in self.probs[1] and w != BOS else UNK

    def _log10p(self, word: str, context: tuple[str, ...]) -> float:
        context = context[len(context) - (self.order - 1):] if self.order > 1 else ()
        backoff = 0.0
        while True:
            p = self.probs[len(context) + 1].get(context + (word,))
            if p is not None:
                return backoff + p
            if not context:
                # every predictable word has a unigram entry; reaching here means <s>
                return backoff + LOG10_ZERO
            backoff += self.bows[len(context)].get(context, 0.0)
            context = context[1:]

    def logprob_word(self, word: str, context: Sequence[str]) -> float:
        """Natural-log ``p(word | context)``; ``context`` starts with ``<s>`` at sentence start."""
        return self._log10p(self._word(word), tuple(context)) * LN10

    def start_state(self) -> LMState:
        return LMState(id(self), (BOS,) if self.order > 1 else ())

    def _check_state(self, state: LMState) -> None:
        if not isinstance(state, LMState) or state.model_id != id(self):
            raise ValueError("state was not produced by this language model")

    def score(self, state: LMState, token) -> tuple[LMState, float]:
        """Advance by one token; returns the new state and the natural-log probability."""
        self._check_state(state)
        w = self._word(token)
        lp = self._log10p(w, state.context) * LN10
        keep = self.order - 1
        ctx = (state.context + (w,))[-keep:] if keep else ()
        return LMState(state.model_id, ctx), lp

    def eos_score(self, state: LMState) -> float:
        self._check_state(state)
        return self._log10p(EOS, state.context) * LN10

    def sentence_logprob(self, tokens: Iterable) -> float:
        state = self.start_state()
        total = 0.0
        for t in tokens:
            state, lp = self.score(state, t)
            total += lp
        return total + self.eos_score(state)

    def n_entries(self, k: int) -> int:
        return len(self.probs[k])


def lm_logprob(model: NgramModel, y: Iterable) -> float:
    return model.sentence_logprob(y)


def lm_score_incremental(model: NgramModel, state: LMState, token) -> tuple[LMState, float]:
    return model.score(state, token)


def train_ngram(
    sentences: Sequence[Sequence],
    order: int = 4,
    discount: float = 0.75,
    vocab: Vocab | None = None,
) -> NgramModel:
    """Estimate an interpolated absolute-discounting model.

    ``sentences`` are token-id sequences (decoded with ``vocab``) or lists
    of strings. The predictable word set is the vocabulary's content
    tokens (or the observed words when no vocabulary is given) plus
    ``<unk>`` and ``</s>``; the recursion bottoms out in a uniform
    distribution over that set.
    """
    if not sentences:
        raise ValueError("empty corpus")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    if order < 1:
        raise ValueError("order must be at least 1")

    def as_words(sent) -> list[str]:
        if vocab is not None:
            return [vocab.tokens[int(t)] if not isinstance(t, str) else t for t in sent]
        return [str(t) for t in sent]

    corpus = [as_words(s) for s in sentences]
    if vocab is not None:
        words = set(vocab.tokens[i] for i in vocab.content_ids())
    else:
        words = {w for s in corpus for w in s}
    words -= {BOS, EOS, UNK}
    words |= {UNK, EOS}
    corpus = [[w if w in words else UNK for w in s] for s in corpus]

    # counts[k][context][word] for n-grams of length k
    counts: dict[int, dict[tuple, dict[str, int]]] = {
        k: defaultdict(lambda: defaultdict(int)) for k in range(1, order + 1)
    }
    for s in corpus:
        padded = [BOS] + s + [EOS]
        for p in range(1, len(padded)):
            for k in range(1, order + 1):
                if p - k + 1 < 0:
                    break
                counts[k][tuple(padded[p - k + 1:p])][padded[p]] += 1

    uniform = 1.0 / len(words)
    probs: dict[int, dict[tuple, float]] = {k: {} for k in range(1, order + 1)}
    bows: dict[int, dict[tuple, float]] = {k: {} for k in range(1, order + 1)}
    # natural-probability cache of the interpolated estimate for every stored n-gram
    interp: dict[tuple, float] = {}

    def lower(word: str, ctx: tuple) -> float:
        """Interpolated probability from the best stored order at or below len(ctx)+1."""
        while ctx:
            got = interp.get(ctx + (word,))
            if got is not None:
                return got
            gamma = gammas.get(ctx)
            if gamma is not None:
                return gamma * lower(word, ctx[1:])
            ctx = ctx[1:]
        return interp[(word,)]

    gammas: dict[tuple, float] = {}
    for k in range(1, order + 1):
        for ctx, conts in counts[k].items():
            total = sum(conts.values())
            gamma = discount * len(conts) / total
            if k > 1:
                gammas[ctx] = gamma
            for w, c in conts.items():
                below = uniform if k == 1 else lower(w, ctx[1:])
                interp[ctx + (w,)] = max(c - discount, 0.0) / total + gamma * below
        if k == 1:
            unigram_gamma = gamma
            for w in words:
                interp.setdefault((w,), unigram_gamma * uniform)

    for ng, p in interp.items():
        probs[len(ng)][ng] = math.log10(p)
    probs[1][(BOS,)] = LOG10_ZERO
    for ctx, gamma in gammas.items():
        bows[len(ctx)][ctx] = math.log10(gamma)
    return NgramModel(order, probs, bows, vocab)


def write_arpa(model: NgramModel, path: str | Path) -> None:
    lines = ["", "\\data\\"]
    for k in range(1, model.order + 1):
        lines.append(f"ngram {k}={model.n_entries(k)}")
    for k in range(1, model.order + 1):
        lines.append("")
        lines.append(f"\\{k}-grams:")
        for ng in sorted(model.probs[k]):
            row = f"{model.probs[k][ng]!r}\t{' '.join(ng)}"
            bow = model.bows[k].get(ng) if k < model.order else None
            if bow is not None:
                row += f"\t{bow!r}"
            lines.append(row)
    lines += ["", "\\end\\", ""]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


_HEADER = re.compile(r"^\\(\d+)-grams:$")
_COUNT = re.compile(r"^ngram (\d+)=(\d+)$")


def read_arpa(path: str | Path, vocab: Vocab | None = None) -> NgramModel:
    try:
        raw = Path(path).read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise ArpaError(f"cannot read {path}: {e}") from e

    declared: dict[int, int] = {}
    probs: dict[int, dict] = {}
    bows: dict[int, dict] = {}
    section = None  # None before \data\, "data", an order k, or "end"
    for n, line in enumerate(raw, start=1):
        line = line.strip()
        if not line:
            continue
        if section == "end":
            raise ArpaError("content after \\end\\", n)
        if line == "\\data\\":
            if section is not None:
                raise ArpaError("duplicate \\data\\ section", n)
            section = "data"
            continue
        if section is None:
            continue  # free text before \data\ is allowed
        if line == "\\end\\":
            section = "end"
            continue
        m = _HEADER.match(line)
        if m:
            k = int(m.group(1))
            if k not in declared:
                raise ArpaError(f"section \\{k}-grams: has no count in \\data\\", n)
            if k in probs:
                raise ArpaError(f"duplicate section \\{k}-grams:", n)
            section = k
            probs[k], bows[k] = {}, {}
            continue
        if line.startswith("\\"):
            raise ArpaError(f"malformed section header {line!r}", n)
        if section == "data":
            m = _COUNT.match(line)
            if not m:
                raise ArpaError(f"malformed count line {line!r}", n)
            declared[int(m.group(1))] = int(m.group(2))
            continue
        k = section
        fields = line.split()
        if len(fields) not in (k + 1, k + 2):
            raise ArpaError(f"expected {k + 1} or {k + 2} fields in a {k}-gram line, got {len(fields)}", n)
        try:
            lp = float(fields[0])
            bow = float(fields[k + 1]) if len(fields) == k + 2 else None
        except ValueError:
            raise ArpaError(f"non-numeric field in {line!r}", n) from None
        ng = tuple(fields[1:k + 1])
        probs[k][ng] = lp
        if bow is not None:
            bows[k][ng] = bow

    if section is None:
        raise ArpaError("missing \\data\\ section")
    if section != "end":
        raise ArpaError("missing \\end\\ marker")
    if not declared:
        raise ArpaError("\\data\\ declares no n-gram counts")
    order = max(declared)
    for k in range(1, order + 1):
        if k not in declared:
            raise ArpaError(f"no count declared for order {k}")
        got = len(probs.get(k, {}))
        if got != declared[k]:
            raise ArpaError(f"declared ngram {k}={declared[k]} but found {got} entries")
    return NgramModel(order, probs, bows, vocab)
