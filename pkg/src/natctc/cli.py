"""Command-line entry point: ``natctc <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import copy
import json
import shutil
import statistics
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .beam import BeamConfig, ctc_beam_search
from .corpus import TASKS, CorpusError, ParallelCorpus, Vocab, gen_synthetic, load_parallel, prune_vocab, write_parallel
from .ctc import greedy_decode, log_softmax
from .distill import EDConfig
from .metrics import corpus_bleu, sequence_accuracy
from .model import (
    EncoderConfig,
    ModelError,
    TrainConfig,
    init_params,
    load_checkpoint,
    pretrain_mlm,
    remap_params,
    save_checkpoint,
    train_nat,
)
from .model.encoder import forward
from .model.train import upsample_batch
from .ngram import ArpaError, read_arpa, train_ngram, write_arpa
from .upsample import UpsampleConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

PATH = object()  # marker for optional path-valued settings

DEFAULTS: dict = {
    "seed": 0,
    "data": {"train_src": PATH, "train_tgt": PATH, "valid_src": PATH, "valid_tgt": PATH, "vocab": PATH},
    "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "d_ff": 256, "l_pos": 64, "dropout": 0.1},
    "upsample": {"scheme": "im", "ratio": "4", "mode": "dr"},
    "ed": {"enabled": True, "teacher_layer": -1, "ed_start_step": 0},
    "train": {
        "lr": 1e-4, "batch_tokens": 256, "steps": 1000, "eval_every": 200, "keep_best": 5,
        "freeze_embedding": True, "freeze_projection": False,
    },
    "pretrain": {"lr": 1e-4, "batch_tokens": 256, "steps": 1000},
    "decode": {"alpha": 0.3, "beta": 0.9, "beam_size": 20},
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- configuration


def _check_value(key: str, default, value):
    if default is PATH:
        if value is not None and not isinstance(value, str):
            raise UsageError(f"config: {key}: expected a path string")
        return value
    if key == "upsample.ratio":
        try:
            r = Fraction(str(value))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"config: {key}: not a ratio: {value!r}") from None
        return str(r)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"config: {key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"config: {key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"config: {key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise UsageError(f"config: {key}: expected a string, got {value!r}")
        return value
    raise AssertionError(key)


def _merge(base: dict, update: dict, schema: dict, prefix: str = "") -> None:
    if not isinstance(update, dict):
        raise UsageError(f"config: {prefix.rstrip('.') or '<root>'}: expected an object")
    for k, v in update.items():
        key = prefix + k
        if k not in schema:
            raise UsageError(f"config: unknown key {key}")
        if isinstance(schema[k], dict):
            _merge(base[k], v, schema[k], key + ".")
        else:
            base[k] = _check_value(key, schema[k], v)


def _fresh() -> dict:
    def strip(d):
        return {k: strip(v) if isinstance(v, dict) else (None if v is PATH else v) for k, v in d.items()}

    return strip(DEFAULTS)


def set_key(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node, schema = cfg, DEFAULTS
    for p in parts[:-1]:
        if p not in schema or not isinstance(schema[p], dict):
            raise UsageError(f"config: unknown key {dotted}")
        node, schema = node[p], schema[p]
    leaf = parts[-1]
    if leaf not in schema or isinstance(schema[leaf], dict):
        raise UsageError(f"config: unknown key {dotted}")
    node[leaf] = _check_value(dotted, schema[leaf], value)


def load_config(path: str | None, overrides: list[str] = ()) -> dict:
    """Defaults, then the JSON file, then ``key.path=value`` overrides."""
    cfg = _fresh()
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise UsageError(f"config: cannot read {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config: {path}:{e.lineno}:{e.colno}: {e.msg}") from None
        _merge(cfg, raw, DEFAULTS)
        # relative data paths are taken relative to the config file
        base = Path(path).resolve().parent
        for k, v in cfg["data"].items():
            if v is not None and not Path(v).is_absolute():
                cfg["data"][k] = str(base / v)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        set_key(cfg, key.strip(), value)
    return cfg


def _require_paths(cfg: dict, keys: list[str]) -> None:
    for k in keys:
        p = cfg["data"][k]
        if p is None:
            raise UsageError(f"config: data.{k} is required")
        if not Path(p).is_file():
            raise CorpusError(f"config: data.{k}: no such file {p}")


def encoder_config(cfg: dict, vocab_size: int) -> EncoderConfig:
    try:
        return EncoderConfig(vocab_size=vocab_size, **cfg["model"])
    except ValueError as e:
        raise UsageError(f"config: model: {e}") from None


def upsample_config(cfg: dict) -> UpsampleConfig:
    u = cfg["upsample"]
    try:
        return UpsampleConfig(scheme=u["scheme"], ratio=Fraction(u["ratio"]), mode=u["mode"], l_pos=cfg["model"]["l_pos"])
    except ValueError as e:
        raise UsageError(f"config: upsample: {e}") from None


def write_config(cfg: dict, path: Path) -> None:
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _structure(c: EncoderConfig) -> tuple:
    return (c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.l_pos)


def _load_compatible(path: str, want: EncoderConfig, role: str):
    params = load_checkpoint(path)
    if _structure(params.config) != _structure(want):
        raise UsageError(f"{role} {path} has configuration {params.config}, expected {want}")
    params.config = want  # adopt this run's dropout
    return params


# --------------------------------------------------------------------------- commands


def cmd_gen_data(a) -> int:
    if a.len_min > a.len_max:
        raise UsageError(f"--len-min {a.len_min} exceeds --len-max {a.len_max}")
    if a.n < 1 or a.valid_n < 0:
        raise UsageError("--n must be positive and --valid-n non-negative")
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        vocab, corpus = gen_synthetic(a.task, a.n + a.valid_n, (a.len_min, a.len_max), a.vocab, a.seed)
    except CorpusError as e:
        raise UsageError(str(e)) from None
    train, valid = (corpus.split(a.valid_n) if a.valid_n else (corpus, None))
    write_parallel(train, vocab, out / "src.txt", out / "tgt.txt")
    if valid is not None:
        write_parallel(valid, vocab, out / "valid.src.txt", out / "valid.tgt.txt")
    vocab.save(out / "vocab.txt")
    print(f"{len(train)} pairs" + (f", {len(valid)} held out" if valid else "") + f" written to {out}")
    return EXIT_OK


def _prepare_out(a, cfg: dict, vocab: Vocab) -> Path:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.txt")
    write_config(cfg, out / "config.json")
    return out


def cmd_pretrain(a) -> int:
    cfg = load_config(a.config, a.set)
    if a.seed is not None:
        cfg["seed"] = a.seed
    if a.steps is not None:
        set_key(cfg, "pretrain.steps", a.steps)
    _require_paths(cfg, ["train_tgt", "vocab"])
    vocab = Vocab.load(cfg["data"]["vocab"])
    sents = [vocab.encode(line) for line in Path(cfg["data"]["train_tgt"]).read_text(encoding="utf-8").splitlines()]
    sents = [s for s in sents if s]
    if not sents:
        raise CorpusError("no target sentences for pretraining")
    ecfg = encoder_config(cfg, vocab.size)
    params = init_params(ecfg, cfg["seed"])
    out = _prepare_out(a, cfg, vocab)
    p = cfg["pretrain"]
    with open(out / "pretrain.log", "w", encoding="utf-8") as log:
        def on_step(step, res):
            log.write(f"{step} {'-' if res.skipped else f'{res.loss:.6f}'} {res.n_masked}\n")

        losses = pretrain_mlm(params, sents, p["steps"], p["lr"], p["batch_tokens"], cfg["seed"], on_step)
    params.adam_m, params.adam_v = {}, {}
    save_checkpoint(params, out / "model.natc")
    tail = losses[-50:]
    print(f"pretrained {p['steps']} steps; mean MLM loss over last {len(tail)} steps {np.mean(tail):.4f}")
    return EXIT_OK


def _apply_train_flags(cfg: dict, a) -> None:
    if a.seed is not None:
        cfg["seed"] = a.seed
    for flag, key in (
        ("scheme", "upsample.scheme"), ("ratio", "upsample.ratio"), ("ratio_mode", "upsample.mode"),
        ("steps", "train.steps"), ("lr", "train.lr"), ("ed", "ed.enabled"),
        ("freeze_embedding", "train.freeze_embedding"), ("freeze_projection", "train.freeze_projection"),
        ("ed_start_step", "ed.ed_start_step"), ("eval_every", "train.eval_every"),
    ):
        v = getattr(a, flag)
        if v is not None:
            set_key(cfg, key, v)


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    try:
        ed = EDConfig(**cfg["ed"])
        ed.layer_index(cfg["model"]["n_layers"])
    except ValueError as e:
        raise UsageError(f"config: ed: {e}") from None
    try:
        return _make_train_config(cfg, t, ed)
    except ValueError as e:
        raise UsageError(f"config: train: {e}") from None


def _make_train_config(cfg: dict, t: dict, ed: EDConfig) -> TrainConfig:
    return TrainConfig(
        lr=t["lr"], batch_tokens=t["batch_tokens"], steps=t["steps"], seed=cfg["seed"],
        upsample=upsample_config(cfg), ed=ed,
        freeze_embedding=t["freeze_embedding"], freeze_projection=t["freeze_projection"],
        eval_every=t["eval_every"], keep_best=t["keep_best"],
    )


def _comparable(cfg: dict) -> dict:
    c = copy.deepcopy(cfg)
    c["train"].pop("steps")
    return c


def _truncate_log(path: Path, start_step: int) -> None:
    """Drop records at or after ``start_step``; they are redone by the resumed run."""
    if not path.exists():
        return
    keep = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            fields = dict(f.split("=", 1) for f in line[1:].split() if "=" in f)
            if "step" in fields and int(fields["step"]) > start_step:
                continue
        elif line.strip() and int(line.split()[0]) >= start_step:
            continue
        keep.append(line)
    path.write_text("".join(l + "\n" for l in keep), encoding="utf-8")


def cmd_train(a) -> int:
    cfg = load_config(a.config, a.set)
    _apply_train_flags(cfg, a)
    _require_paths(cfg, ["train_src", "train_tgt", "valid_src", "valid_tgt", "vocab"])
    vocab = Vocab.load(cfg["data"]["vocab"])
    d = cfg["data"]
    train = load_parallel(d["train_src"], d["train_tgt"], vocab)
    valid = load_parallel(d["valid_src"], d["valid_tgt"], vocab)
    train.validate(vocab)
    valid.validate(vocab)
    ecfg = encoder_config(cfg, vocab.size)
    tcfg = _train_config(cfg)

    if a.no_pretrain:
        student = init_params(ecfg, cfg["seed"])
    elif a.init_from:
        student = _load_compatible(a.init_from, ecfg, "--init-from")
        student.adam_m, student.adam_v, student.step = {}, {}, 0
    elif not a.resume:
        raise UsageError("train needs --init-from CHECKPOINT or --no-pretrain")
    teacher_path = a.teacher or a.init_from
    teacher = None
    if tcfg.ed.enabled:
        if teacher_path is None:
            raise UsageError("embedding distillation needs --teacher (or --init-from); pass --no-ed to disable it")
        teacher = _load_compatible(teacher_path, ecfg, "--teacher")

    out = Path(a.out)
    start_step = 0
    initial_best = []
    if a.resume:
        state_path = out / "state.json"
        if not state_path.exists():
            raise UsageError(f"--resume: no saved state in {out}")
        saved = json.loads((out / "config.json").read_text(encoding="utf-8"))
        if _comparable(saved) != _comparable(cfg):
            diff = _first_difference(_comparable(saved), _comparable(cfg))
            raise UsageError(f"--resume: configuration differs from the saved run at {diff}")
        state = json.loads(state_path.read_text(encoding="utf-8"))
        student = load_checkpoint(out / "last.natc", expect=ecfg)
        start_step = state["step"]
        for b in state["best"]:
            snap = load_checkpoint(out / b["file"], expect=ecfg)
            initial_best.append(((b["acc"], -b["ctc"]), b["step"], snap))
        if start_step >= tcfg.steps:
            raise UsageError(f"--resume: run already reached step {start_step}; raise --steps to continue")
    out = _prepare_out(a, cfg, vocab)
    log_path = out / "train.log"
    if a.resume:
        _truncate_log(log_path, start_step)
    else:
        log_path.write_text("", encoding="utf-8")

    def on_eval(step, rep, live, best):
        save_checkpoint(live, out / "last.natc")
        keep = []
        for key, s, snap in best:
            name = f"best.{s}.natc"
            if not (out / name).exists():
                save_checkpoint(snap, out / name)
            keep.append({"acc": key[0], "ctc": -key[1], "step": s, "file": name})
        for f in out.glob("best.*.natc"):
            if f.name not in {k["file"] for k in keep}:
                f.unlink()
        state = {"step": step, "best": keep}
        (out / "state.json").write_text(json.dumps(state, indent=2) + "\n", encoding="utf-8")
        print(f"step {step}: valid ctc {rep.ctc_loss:.4f} acc {rep.seq_acc:.4f}", flush=True)

    with open(log_path, "a", encoding="utf-8") as log:
        log.write(f"# {'resume' if a.resume else 'start'} step={start_step}\n")
        outcome = train_nat(student, teacher, train.pairs, valid.pairs, tcfg, log, start_step, on_eval, initial_best)
        log.write(f"# final averaged={len(outcome.best)} max_len={outcome.max_len}\n")
    save_checkpoint(outcome.final, out / "model.natc")
    print(f"final model averages {len(outcome.best)} checkpoints; longest input {outcome.max_len}")
    return EXIT_OK


def _first_difference(x, y, prefix=""):
    if isinstance(x, dict) and isinstance(y, dict):
        for k in sorted(set(x) | set(y)):
            if x.get(k) != y.get(k):
                return _first_difference(x.get(k), y.get(k), prefix + k + ".")
    return prefix.rstrip(".") or "<root>"


# --------------------------------------------------------------------------- decoding


def _model_bundle(a):
    """Checkpoint, vocabulary and upsampling settings for decode/bench/prune."""
    model_path = Path(a.model)
    params = load_checkpoint(model_path)
    vocab_path = Path(a.vocab) if getattr(a, "vocab", None) else model_path.parent / "vocab.txt"
    vocab = Vocab.load(vocab_path)
    if vocab.size != params.config.vocab_size:
        raise CorpusError(f"vocabulary {vocab_path} has {vocab.size} entries, model expects {params.config.vocab_size}")
    cfg_path = Path(a.config) if getattr(a, "config", None) else model_path.parent / "config.json"
    cfg = load_config(str(cfg_path)) if cfg_path.exists() else _fresh()
    for flag, key in (("scheme", "upsample.scheme"), ("ratio", "upsample.ratio"), ("ratio_mode", "upsample.mode")):
        v = getattr(a, flag, None)
        if v is not None:
            set_key(cfg, key, v)
    ucfg = UpsampleConfig(**{**upsample_config(cfg).__dict__, "l_pos": params.config.l_pos})
    return params, vocab, ucfg


def _beam_config(a, vocab: Vocab) -> BeamConfig:
    if a.alpha > 0 and not a.lm:
        raise UsageError("beam search with --alpha > 0 needs --lm (or pass --alpha 0)")
    lm = read_arpa(a.lm, vocab) if a.lm else None
    try:
        return BeamConfig(alpha=a.alpha, beta=a.beta, beam_size=a.beam_size, lm=lm)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _read_sources(path: str, vocab: Vocab) -> list[list[int]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(f"cannot read {path}: {e}") from None
    out = []
    for n, line in enumerate(lines, start=1):
        ids = vocab.encode(line)
        if not ids:
            raise CorpusError(f"{path}:{n}: empty source line")
        out.append(ids)
    return out


def _lattice(params, src, ucfg) -> np.ndarray:
    x = upsample_batch([src], ucfg)[0]
    logits = forward(params, [x]).logits[0]
    return log_softmax(logits.astype(np.float64), axis=-1)


def _decode_one(params, src, ucfg, mode: str, bcfg: BeamConfig | None) -> list[int]:
    lp = _lattice(params, src, ucfg)
    if mode == "greedy":
        return greedy_decode(lp, Vocab.blank_id)
    return ctc_beam_search(lp, bcfg, Vocab.blank_id)[0][0]


def cmd_decode(a) -> int:
    params, vocab, ucfg = _model_bundle(a)
    bcfg = _beam_config(a, vocab) if a.mode == "beam" else None
    sources = _read_sources(a.input, vocab)
    lines = [vocab.decode(_decode_one(params, s, ucfg, a.mode, bcfg)) for s in sources]
    text = "".join(l + "\n" for l in lines)
    if a.output:
        Path(a.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(a) -> int:
    try:
        hyps = Path(a.hyp).read_text(encoding="utf-8").splitlines()
        refs = Path(a.ref).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(str(e)) from None
    if len(hyps) != len(refs):
        raise CorpusError(f"{a.hyp} has {len(hyps)} lines but {a.ref} has {len(refs)}")
    rep = corpus_bleu(hyps, refs)
    acc = sequence_accuracy(hyps, refs)
    if a.json:
        print(json.dumps({**rep.__dict__, "seq_acc": acc}))
    else:
        print(rep)
        print(f"sequence accuracy = {acc:.4f}")
    return EXIT_OK


def cmd_lm_train(a) -> int:
    vocab = Vocab.load(a.vocab) if a.vocab else None
    sents = []
    for path in a.tgt:
        try:
            sents += [l.split() for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
        except (OSError, UnicodeDecodeError) as e:
            raise CorpusError(f"cannot read {path}: {e}") from None
    try:
        lm = train_ngram(sents, order=a.order, discount=a.discount, vocab=vocab)
    except ValueError as e:
        raise UsageError(str(e)) from None
    write_arpa(lm, a.out_arpa)
    counts = " ".join(f"{k}-grams={lm.n_entries(k)}" for k in range(1, lm.order + 1))
    print(f"wrote {a.out_arpa}: {len(sents)} sentences, {counts}")
    return EXIT_OK


def cmd_prune_vocab(a) -> int:
    params, vocab, _ = _model_bundle(a)
    pairs = []
    for path in a.corpus:
        pairs += [(ids, ids) for ids in _read_sources(path, vocab)]
    new_vocab, remap = prune_vocab(vocab, ParallelCorpus(pairs))
    pruned = remap_params(params, remap, new_vocab.size)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(pruned, out / "model.natc")
    new_vocab.save(out / "vocab.txt")
    cfg_src = Path(a.model).parent / "config.json"
    if cfg_src.exists() and cfg_src.resolve() != (out / "config.json").resolve():
        shutil.copyfile(cfg_src, out / "config.json")
    before, after = params.n_params(), pruned.n_params()
    print(f"old_vocab={vocab.size} new_vocab={new_vocab.size} "
          f"old_params={before} new_params={after} delta={after - before}")
    return EXIT_OK


def cmd_bench(a) -> int:
    if a.repeat < 1:
        raise UsageError("--repeat must be at least 1")
    params, vocab, ucfg = _model_bundle(a)
    modes = ["greedy", "beam"] if a.mode == "both" else [a.mode]
    bcfg = _beam_config(a, vocab) if "beam" in modes else None
    sources = _read_sources(a.input, vocab)
    medians = {}
    for mode in modes:
        per_sentence = []
        for src in sources:
            t0 = time.perf_counter()
            for _ in range(a.repeat):
                _decode_one(params, src, ucfg, mode, bcfg)
            per_sentence.append((time.perf_counter() - t0) / a.repeat * 1e3)
        medians[mode] = statistics.median(per_sentence)
        print(json.dumps({
            "record": "latency", "mode": mode, "sentences": len(sources), "repeat": a.repeat,
            "mean_ms": statistics.fmean(per_sentence), "median_ms": medians[mode],
        }), flush=True)
    ratio = medians["greedy"] / medians["beam"] if len(medians) == 2 else None
    print(json.dumps({"record": "summary", "modes": modes, "greedy_over_beam": ratio}))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _bool_pair(p, name: str, help_on: str):
    dest = name.replace("-", "_")
    p.add_argument(f"--{name}", dest=dest, action="store_true", default=None, help=help_on)
    p.add_argument(f"--no-{name}", dest=dest, action="store_false", help=argparse.SUPPRESS)


def _model_args(p):
    p.add_argument("--model", required=True, help="checkpoint (.natc)")
    p.add_argument("--vocab", help="vocabulary file (default: vocab.txt next to the model)")
    p.add_argument("--config", help="run config (default: config.json next to the model)")
    p.add_argument("--scheme", choices=["it", "im"])
    p.add_argument("--ratio")
    p.add_argument("--ratio-mode", choices=["fr", "dr"])


def _beam_args(p):
    p.add_argument("--alpha", type=float, default=0.3, help="LM weight (default 0.3)")
    p.add_argument("--beta", type=float, default=0.9, help="per-token length bonus (default 0.9)")
    p.add_argument("--beam-size", type=int, default=20)
    p.add_argument("--lm", help="ARPA language model")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="natctc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic parallel corpus")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--n", type=int, required=True, help="training pairs")
    p.add_argument("--valid-n", type=int, default=0, help="extra held-out pairs (valid.src.txt/valid.tgt.txt)")
    p.add_argument("--len-min", type=int, default=3)
    p.add_argument("--len-max", type=int, default=10)
    p.add_argument("--vocab", type=int, default=20, help="content vocabulary size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    for name, func, helptext in (
        ("pretrain", cmd_pretrain, "masked-LM pretraining on the target side"),
        ("train", cmd_train, "CTC fine-tuning with optional embedding distillation"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config value, e.g. train.lr=3e-4")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.set_defaults(func=func)
        if name == "train":
            p.add_argument("--init-from", help="pretrained checkpoint for the student")
            p.add_argument("--teacher", help="frozen teacher checkpoint (default: --init-from)")
            p.add_argument("--no-pretrain", action="store_true", help="start the student from random init")
            p.add_argument("--resume", action="store_true", help="continue the run saved in --out")
            p.add_argument("--scheme", choices=["it", "im"])
            p.add_argument("--ratio")
            p.add_argument("--ratio-mode", choices=["fr", "dr"])
            p.add_argument("--lr", type=float)
            p.add_argument("--eval-every", type=int)
            p.add_argument("--ed-start-step", type=int)
            _bool_pair(p, "ed", "enable embedding distillation (--no-ed disables)")
            _bool_pair(p, "freeze-embedding", "freeze the token embedding (--no-freeze-embedding trains it)")
            _bool_pair(p, "freeze-projection", "freeze the output projection (--no-freeze-projection trains it)")

    p = sub.add_parser("decode", help="translate source lines")
    _model_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--mode", choices=["greedy", "beam"], default="greedy")
    _beam_args(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="BLEU and sequence accuracy")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lm-train", help="train an n-gram LM and write ARPA")
    p.add_argument("--tgt", required=True, nargs="+")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--vocab", help="restrict the LM to this vocabulary")
    p.add_argument("--out-arpa", required=True)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("prune-vocab", help="drop vocabulary entries unseen in a corpus")
    _model_args(p)
    p.add_argument("--corpus", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune_vocab)

    p = sub.add_parser("bench", help="single-sentence decode latency")
    _model_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["greedy", "beam", "both"], default="both")
    p.add_argument("--repeat", type=int, default=1)
    _beam_args(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        return a.func(a)
    except UsageError as e:
        print(f"natctc {a.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ArpaError, ModelError, OSError) as e:
        print(f"natctc {a.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ArithmeticError) as e:
        print(f"natctc {a.command}: numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"natctc {a.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
