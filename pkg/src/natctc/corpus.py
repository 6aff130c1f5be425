"""Vocabulary, parallel corpora, synthetic tasks and vocabulary pruning."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BLANK, MASK, PAD, UNK, BOS, EOS = "<blank>", "<mask>", "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (BLANK, MASK, PAD, UNK, BOS, EOS)
N_SPECIALS = len(SPECIALS)

TASKS = ("copy", "reverse", "toy_grammar")


class CorpusError(ValueError):
    """Malformed vocabulary or corpus input."""


class Vocab:
    """Dense token <-> id map. The six reserved symbols always occupy ids 0..5."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:N_SPECIALS]) != SPECIALS:
            raise CorpusError(f"vocabulary must start with {SPECIALS}")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise CorpusError("duplicate token in vocabulary")

    blank_id = 0
    mask_id = 1
    pad_id = 2
    unk_id = 3
    bos_id = 4
    eos_id = 5

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocab(size={self.size})"

    def content_ids(self) -> range:
        return range(N_SPECIALS, self.size)

    def encode(self, line: str) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in line.split()]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < self.size:
                raise CorpusError(f"token id {i} out of range for vocabulary of size {self.size}")
            out.append(self.tokens[i])
        return " ".join(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise CorpusError(f"cannot read vocabulary {path}: {e}") from e
        return cls(text.split("\n")[:-1] if text.endswith("\n") else text.split("\n"))


def build_vocab(lines: Sequence[str], min_freq: int = 1) -> Vocab:
    """Whitespace vocabulary, most frequent first, ties broken lexicographically."""
    if min_freq < 1:
        raise CorpusError("min_freq must be positive")
    if not lines:
        raise CorpusError("empty vocabulary: no input lines")
    counts = Counter(t for line in lines for t in line.split() if t not in SPECIALS)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    if not kept:
        raise CorpusError("empty vocabulary")
    return Vocab(list(SPECIALS) + kept)


@dataclass
class ParallelCorpus:
    pairs: list[tuple[list[int], list[int]]]
    task: str = "external"
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.pairs)

    def validate(self, vocab: Vocab) -> None:
        for k, (src, tgt) in enumerate(self.pairs):
            if not src or not tgt:
                raise CorpusError(f"pair {k}: empty source or target")
            if max(max(src), max(tgt)) >= vocab.size or min(min(src), min(tgt)) < 0:
                raise CorpusError(f"pair {k}: token id out of vocabulary range")

    @property
    def sources(self) -> list[list[int]]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[list[int]]:
        return [t for _, t in self.pairs]

    def split(self, n_heldout: int) -> tuple["ParallelCorpus", "ParallelCorpus"]:
        head = ParallelCorpus(self.pairs[:-n_heldout], self.task, self.seed)
        tail = ParallelCorpus(self.pairs[-n_heldout:], self.task, self.seed)
        return head, tail


def _read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(f"cannot read {path}: {e}") from e
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_parallel(src_path: str | Path, tgt_path: str | Path, vocab: Vocab) -> ParallelCorpus:
    src_lines, tgt_lines = _read_lines(src_path), _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"line count mismatch: {src_path} has {len(src_lines)}, {tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    for n, (s, t) in enumerate(zip(src_lines, tgt_lines), start=1):
        if not s.strip() or not t.strip():
            raise CorpusError(f"line {n}: blank source or target")
        pairs.append((vocab.encode(s), vocab.encode(t)))
    return ParallelCorpus(pairs)


def write_parallel(corpus: ParallelCorpus, vocab: Vocab, src_path: str | Path, tgt_path: str | Path) -> None:
    Path(src_path).write_text("".join(vocab.decode(s) + "\n" for s in corpus.sources), encoding="utf-8")
    Path(tgt_path).write_text("".join(vocab.decode(t) + "\n" for t in corpus.targets), encoding="utf-8")


def grammar_partner(vocab_size: int, seed: int) -> dict[int, int]:
    """The seeded content-token permutation used by the toy_grammar task."""
    ids = list(range(N_SPECIALS, N_SPECIALS + vocab_size))
    perm = ids[:]
    random.Random(f"sigma-{seed}").shuffle(perm)
    return dict(zip(ids, perm))


def apply_grammar(src: Sequence[int], partner: dict[int, int]) -> list[int]:
    out = [partner[t] for t in src]
    for k in range(0, len(out) - 1, 2):
        out[k], out[k + 1] = out[k + 1], out[k]
    return out


def make_target(task: str, src: Sequence[int], partner: dict[int, int] | None = None) -> list[int]:
    if task == "copy":
        return list(src)
    if task == "reverse":
        return list(reversed(src))
    if task == "toy_grammar":
        return apply_grammar(src, partner)
    raise CorpusError(f"unknown task {task!r}; expected one of {TASKS}")


def gen_synthetic(
    task: str,
    n_pairs: int,
    len_range: tuple[int, int],
    vocab_size: int,
    seed: int,
) -> tuple[Vocab, ParallelCorpus]:
    """Synthetic parallel data over ``vocab_size`` content tokens ``w0 .. w{n-1}``.

    Sources come from a seeded first-order Markov chain so that the
    target side carries some context for masked-LM pretraining and the
    n-gram LM to pick up.
    """
    lo, hi = len_range
    if task not in TASKS:
        raise CorpusError(f"unknown task {task!r}; expected one of {TASKS}")
    if not 1 <= lo <= hi <= 64:
        raise CorpusError(f"len_range {len_range} must satisfy 1 <= min <= max <= 64")
    if vocab_size < 8:
        raise CorpusError("vocab_size must be at least 8")
    if n_pairs < 1:
        raise CorpusError("n_pairs must be positive")

    vocab = Vocab(list(SPECIALS) + [f"w{k}" for k in range(vocab_size)])
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(np.full(vocab_size, 0.5), size=vocab_size)
    start = rng.dirichlet(np.full(vocab_size, 1.0))
    partner = grammar_partner(vocab_size, seed) if task == "toy_grammar" else None

    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(lo, hi + 1))
        toks = [int(rng.choice(vocab_size, p=start))]
        for _ in range(n - 1):
            toks.append(int(rng.choice(vocab_size, p=trans[toks[-1]])))
        src = [N_SPECIALS + t for t in toks]
        pairs.append((src, make_target(task, src, partner)))
    return vocab, ParallelCorpus(pairs, task=task, seed=seed)


def prune_vocab(vocab: Vocab, corpus: ParallelCorpus) -> tuple[Vocab, np.ndarray]:
    """Keep only tokens seen in ``corpus``.

    Returns the new vocabulary and an ``old id -> new id`` table; tokens
    that disappear map to the unknown id.
    """
    seen = {t for s, y in corpus.pairs for t in (*s, *y)}
    kept = [i for i in vocab.content_ids() if i in seen]
    new = Vocab(list(SPECIALS) + [vocab.tokens[i] for i in kept])
    remap = np.full(vocab.size, vocab.unk_id, dtype=np.int64)
    remap[:N_SPECIALS] = np.arange(N_SPECIALS)
    for new_id, old_id in enumerate(kept, start=N_SPECIALS):
        remap[old_id] = new_id
    return new, remap


def remap_corpus(corpus: ParallelCorpus, remap: np.ndarray) -> ParallelCorpus:
    pairs = [([int(remap[t]) for t in s], [int(remap[t]) for t in y]) for s, y in corpus.pairs]
    return ParallelCorpus(pairs, corpus.task, corpus.seed)
