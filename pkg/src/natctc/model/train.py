"""Masked-LM pretraining, CTC + embedding-distillation fine-tuning, evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from ..corpus import N_SPECIALS, Vocab
from ..ctc import ctc_loss, greedy_decode, log_softmax
from ..distill import EDConfig, Matching, align_targets, build_q_matrix, ed_loss, lambda_schedule
from ..upsample import UpsampleConfig, upsample_tokens
from .encoder import ModelError, ParamStore, backward, forward
from .optim import adam_update, average_checkpoints

log = logging.getLogger(__name__)

BLANK_ID = Vocab.blank_id
MASK_ID = Vocab.mask_id
PAD_ID = Vocab.pad_id


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_tokens: int = 256
    steps: int = 1000
    seed: int = 0
    upsample: UpsampleConfig = field(default_factory=UpsampleConfig)
    ed: EDConfig = field(default_factory=EDConfig)
    freeze_embedding: bool = True
    freeze_projection: bool = False
    eval_every: int = 200
    keep_best: int = 5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.batch_tokens < 1:
            raise ValueError("batch_tokens must be positive")


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max())), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


def make_batches(
    pairs: Sequence[tuple[list[int], list[int]]],
    batch_tokens: int,
    rng: np.random.Generator,
) -> list[list[int]]:
    """Shuffle, then pack indices greedily by source length up to ``batch_tokens`` per batch."""
    order = rng.permutation(len(pairs))
    # sort inside windows of 100 so neighbouring batches are similar in length but not fixed
    chunks = [order[i:i + 100] for i in range(0, len(order), 100)]
    batches: list[list[int]] = []
    for chunk in chunks:
        chunk = sorted(chunk, key=lambda k: (len(pairs[k][0]), k))
        cur: list[int] = []
        width = 0
        for k in chunk:
            n = len(pairs[k][0])
            if cur and max(width, n) * (len(cur) + 1) > batch_tokens:
                batches.append(cur)
                cur, width = [], 0
            cur.append(int(k))
            width = max(width, n)
        if cur:
            batches.append(cur)
    rng.shuffle(batches)
    return batches


def batch_stream(pairs, batch_tokens: int, seed: int) -> Iterator[list[tuple[list[int], list[int]]]]:
    rng = np.random.default_rng(seed)
    while True:
        for b in make_batches(pairs, batch_tokens, rng):
            yield [pairs[k] for k in b]


# --------------------------------------------------------------------------- MLM


def mask_tokens(
    seqs: Sequence[Sequence[int]],
    rng: np.random.Generator,
    vocab_size: int,
    rate: float = 0.15,
) -> tuple[list[list[int]], list[list[int]]]:
    """BERT-style corruption: pick ``rate`` of positions; 80% MASK, 10% random, 10% kept.

    Returns the corrupted sequences and, per sequence, the selected positions.
    """
    inputs, chosen = [], []
    for s in seqs:
        s = list(s)
        sel = np.nonzero(rng.random(len(s)) < rate)[0]
        kind = rng.random(len(sel))
        repl = rng.integers(N_SPECIALS, vocab_size, size=len(sel))
        for p, u, r in zip(sel, kind, repl):
            if u < 0.8:
                s[p] = MASK_ID
            elif u < 0.9:
                s[p] = int(r)
        inputs.append(s)
        chosen.append([int(p) for p in sel])
    return inputs, chosen


@dataclass
class MLMResult:
    loss: float
    n_masked: int
    skipped: bool = False


def mlm_loss_and_grads(params: ParamStore, batch, seed: int, train: bool = True):
    rng = np.random.default_rng(seed)
    inputs, chosen = mask_tokens(batch, rng, params.config.vocab_size)
    n = sum(len(c) for c in chosen)
    if n == 0:
        return MLMResult(float("nan"), 0, skipped=True), None
    toks, lengths = pad_batch(inputs)
    cache = forward(params, toks, lengths, train=train, dropout_seed=seed)
    if not np.isfinite(cache.logits).all():
        raise FloatingPointError("non-finite logits in the masked-LM forward pass")
    lp = log_softmax(cache.logits.astype(np.float64), axis=-1)
    d_logits = np.zeros(cache.logits.shape)
    loss = 0.0
    for b, (orig, pos) in enumerate(zip(batch, chosen)):
        for p in pos:
            loss -= lp[b, p, orig[p]]
            d_logits[b, p] = np.exp(lp[b, p])
            d_logits[b, p, orig[p]] -= 1.0
    d_logits /= n
    return MLMResult(loss / n, n), (cache, d_logits)


def mlm_pretrain_step(params: ParamStore, batch, lr: float, seed: int) -> tuple[MLMResult, ParamStore]:
    """One Adam step of masked-token cross-entropy. Batches with no masked position are skipped."""
    res, extra = mlm_loss_and_grads(params, batch, seed)
    if res.skipped:
        return res, params
    cache, d_logits = extra
    grads = backward(params, cache, d_logits)
    adam_update(params, grads, lr)
    return res, params


def pretrain_mlm(
    params: ParamStore,
    sentences: Sequence[Sequence[int]],
    steps: int,
    lr: float,
    batch_tokens: int,
    seed: int,
    on_step: Callable[[int, MLMResult], None] | None = None,
) -> list[float]:
    pairs = [(list(s), list(s)) for s in sentences if len(s) <= params.config.l_pos]
    stream = batch_stream(pairs, batch_tokens, seed)
    losses = []
    for step in range(steps):
        batch = [s for s, _ in next(stream)]
        res, params = mlm_pretrain_step(params, batch, lr, seed=seed * 1_000_003 + step)
        if not res.skipped:
            losses.append(res.loss)
        if on_step is not None:
            on_step(step, res)
    return losses


# --------------------------------------------------------------------------- NAT


@dataclass
class NATResult:
    l_ctc: float
    l_ed: float | None
    lam: int
    skipped: int
    n_used: int
    max_len: int
    grads: dict[str, np.ndarray] | None = None
    matchings: list[Matching | None] | None = None


def upsample_batch(sources: Sequence[Sequence[int]], ucfg: UpsampleConfig) -> list[list[int]]:
    return [upsample_tokens(x, ucfg, MASK_ID).tokens for x in sources]


def teacher_states(teacher: ParamStore, targets: Sequence[Sequence[int]], layer: int) -> list[np.ndarray]:
    toks, lengths = pad_batch(targets)
    cache = forward(teacher, toks, lengths, train=False)
    h = cache.hidden[layer]
    return [h[b, :n] for b, n in enumerate(lengths)]


def nat_objective(
    student: ParamStore,
    teacher: ParamStore | None,
    batch: Sequence[tuple[Sequence[int], Sequence[int]]],
    lam: int,
    ucfg: UpsampleConfig,
    ed: EDConfig,
    train: bool = True,
    dropout_seed: int | None = None,
    matchings: list[Matching | None] | None = None,
    need_grads: bool = True,
) -> NATResult:
    """Batch-mean CTC (+ lambda * ED) loss and its gradients for the student.

    ``matchings`` fixes the target-to-frame alignment instead of solving it
    from the current lattice (finite-difference checks hold it constant).
    """
    if not batch:
        raise ModelError("empty batch")
    if lam and teacher is None:
        raise ModelError("embedding distillation needs a teacher")
    sources = [x for x, _ in batch]
    targets = [list(y) for _, y in batch]
    xs = upsample_batch(sources, ucfg)
    toks, lengths = pad_batch(xs)
    cache = forward(student, toks, lengths, train=train, dropout_seed=dropout_seed)
    if not np.isfinite(cache.logits).all():
        raise FloatingPointError("non-finite logits in the student forward pass")
    B, T, V = cache.logits.shape
    d_logits = np.zeros((B, T, V))
    d_hidden = np.zeros((B, T, student.config.d_model)) if lam else None
    t_states = teacher_states(teacher, targets, ed.layer_index(teacher.config.n_layers)) if lam else None

    used = []
    ctc_total = ed_total = 0.0
    skipped = 0
    out_match: list[Matching | None] = []
    for b in range(B):
        n = int(lengths[b])
        lp = log_softmax(cache.logits[b, :n].astype(np.float64), axis=-1)
        res = ctc_loss(lp, targets[b], BLANK_ID)
        if not res.feasible:
            skipped += 1
            out_match.append(None)
            continue
        used.append(b)
        ctc_total += res.loss
        d_logits[b, :n] = res.grad
        if lam:
            m = matchings[b] if matchings is not None else align_targets(build_q_matrix(lp, targets[b]))
            out_match.append(m)
            h_nat = cache.hidden[-1][b, :n].astype(np.float64)
            l_ed, g_ed = ed_loss(h_nat, t_states[b], m)
            ed_total += l_ed
            d_hidden[b, :n] = g_ed
        else:
            out_match.append(None)

    n_used = len(used)
    if n_used == 0:
        return NATResult(float("nan"), None, lam, skipped, 0, int(lengths.max()), None, out_match)
    grads = None
    if need_grads:
        d_logits /= n_used
        if d_hidden is not None:
            d_hidden *= lam / n_used
        grads = backward(student, cache, d_logits, d_hidden)
    return NATResult(
        ctc_total / n_used,
        ed_total / n_used if lam else None,
        lam,
        skipped,
        n_used,
        int(lengths.max()),
        grads,
        out_match,
    )


def nat_train_step(
    student: ParamStore,
    teacher: ParamStore | None,
    batch,
    step: int,
    cfg: TrainConfig,
) -> NATResult:
    """One fine-tuning update. The teacher is only consulted once lambda switches on."""
    lam = lambda_schedule(step, cfg.ed.ed_start_step) if cfg.ed.enabled else 0
    res = nat_objective(
        student, teacher, batch, lam, cfg.upsample, cfg.ed,
        train=True, dropout_seed=cfg.seed * 1_000_003 + step,
    )
    if res.grads is not None:
        adam_update(student, res.grads, cfg.lr)
    return res


# --------------------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    ctc_loss: float
    ed_loss: float | None
    seq_acc: float
    hypotheses: list[list[int]]
    infeasible: int


def lattices(params: ParamStore, sources: Sequence[Sequence[int]], ucfg: UpsampleConfig, batch_size: int = 64):
    """Per-sentence ``(T_i, V)`` log-probability lattices in eval mode."""
    out = []
    for i in range(0, len(sources), batch_size):
        xs = upsample_batch(sources[i:i + batch_size], ucfg)
        toks, lengths = pad_batch(xs)
        cache = forward(params, toks, lengths, train=False)
        for b, n in enumerate(lengths):
            out.append(log_softmax(cache.logits[b, :n].astype(np.float64), axis=-1))
    return out


def evaluate(
    params: ParamStore,
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
    ucfg: UpsampleConfig,
    teacher: ParamStore | None = None,
    ed: EDConfig | None = None,
    batch_size: int = 64,
) -> EvalReport:
    """Mean CTC loss over feasible pairs, greedy exact-match accuracy, and
    (given a teacher) the mean embedding-distillation loss."""
    losses, eds, hyps = [], [], []
    infeasible = 0
    hits = 0
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i:i + batch_size]
        xs = upsample_batch([x for x, _ in chunk], ucfg)
        toks, lengths = pad_batch(xs)
        cache = forward(params, toks, lengths, train=False)
        t_states = None
        if teacher is not None:
            ed = ed or EDConfig()
            t_states = teacher_states(teacher, [y for _, y in chunk], ed.layer_index(teacher.config.n_layers))
        for b, (n, (_, y)) in enumerate(zip(lengths, chunk)):
            lp = log_softmax(cache.logits[b, :n].astype(np.float64), axis=-1)
            hyp = greedy_decode(lp, BLANK_ID)
            hyps.append(hyp)
            hits += hyp == list(y)
            res = ctc_loss(lp, y, BLANK_ID)
            if not res.feasible:
                infeasible += 1
                continue
            losses.append(res.loss)
            if t_states is not None:
                m = align_targets(build_q_matrix(lp, y))
                eds.append(ed_loss(cache.hidden[-1][b, :n].astype(np.float64), t_states[b], m)[0])
    return EvalReport(
        float(np.mean(losses)) if losses else math.inf,
        float(np.mean(eds)) if eds else None,
        hits / max(len(pairs), 1),
        hyps,
        infeasible,
    )


# --------------------------------------------------------------------------- driver


def format_log_record(step: int, res: NATResult) -> str:
    l_ed = f"{res.l_ed:.6f}" if res.l_ed is not None else "-"
    return f"{step} {res.l_ctc:.6f} {l_ed} {res.lam} {res.skipped}"


@dataclass
class TrainOutcome:
    final: ParamStore
    best: list[tuple[float, float, int]]
    history: list[tuple[int, EvalReport]]
    max_len: int


def train_nat(
    student: ParamStore,
    teacher: ParamStore | None,
    train_pairs,
    valid_pairs,
    cfg: TrainConfig,
    log_file: TextIO | None = None,
    start_step: int = 0,
    on_eval: Callable[..., None] | None = None,
    initial_best: list[tuple[tuple[float, float], int, ParamStore]] | None = None,
) -> TrainOutcome:
    """Fine-tune ``student`` for ``cfg.steps`` updates.

    Validates every ``cfg.eval_every`` steps, keeps the ``cfg.keep_best``
    snapshots ranked by (sequence accuracy, -CTC loss), and returns their
    average as the final model. ``on_eval(step, report, student, best)``
    receives the updated snapshot list so a caller can persist it and pass
    it back as ``initial_best`` when resuming.
    """
    student.set_freeze(embedding=cfg.freeze_embedding, projection=cfg.freeze_projection)
    stream = batch_stream(train_pairs, cfg.batch_tokens, cfg.seed)
    # replay the stream so a resumed run sees the same batches it would have
    for _ in range(start_step):
        next(stream)
    best: list[tuple[tuple[float, float], int, ParamStore]] = list(initial_best or [])
    history = []
    max_len = 0
    ed_teacher = teacher if cfg.ed.enabled else None
    for step in range(start_step, cfg.steps):
        res = nat_train_step(student, teacher, next(stream), step, cfg)
        max_len = max(max_len, res.max_len)
        if log_file is not None:
            log_file.write(format_log_record(step, res) + "\n")
        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.steps:
            lam = lambda_schedule(step, cfg.ed.ed_start_step) if cfg.ed.enabled else 0
            rep = evaluate(student, valid_pairs, cfg.upsample, ed_teacher if lam else None, cfg.ed)
            history.append((step + 1, rep))
            if log_file is not None:
                ed_txt = f" ed={rep.ed_loss:.6f}" if rep.ed_loss is not None else ""
                log_file.write(
                    f"# valid step={step + 1} ctc={rep.ctc_loss:.6f} acc={rep.seq_acc:.4f}{ed_txt} "
                    f"max_len={max_len}\n"
                )
                log_file.flush()
            key = (rep.seq_acc, -rep.ctc_loss)
            best.append((key, step + 1, student.copy()))
            best.sort(key=lambda e: (e[0], e[1]), reverse=True)
            del best[cfg.keep_best:]
            if on_eval is not None:
                on_eval(step + 1, rep, student, best)
    final = average_checkpoints([p for _, _, p in best])
    final.frozen = set(student.frozen)
    return TrainOutcome(final, [(k[0], -k[1], s) for k, s, _ in best], history, max_len)
