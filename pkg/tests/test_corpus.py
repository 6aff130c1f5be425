import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natctc.corpus import (
    SPECIALS,
    CorpusError,
    ParallelCorpus,
    Vocab,
    apply_grammar,
    build_vocab,
    gen_synthetic,
    load_parallel,
    prune_vocab,
    remap_corpus,
    write_parallel,
)


def test_build_vocab_min_freq():
    assert build_vocab(["a b", "a c"], min_freq=2).tokens == list(SPECIALS) + ["a"]
    assert build_vocab(["a b", "a c"], min_freq=1).tokens == list(SPECIALS) + ["a", "b", "c"]


def test_build_vocab_orders_by_count_then_lexicographic():
    v = build_vocab(["z y y x x x", "y w w w w"])
    assert v.tokens[6:] == ["w", "x", "y", "z"]


def test_build_vocab_errors():
    with pytest.raises(CorpusError):
        build_vocab([], min_freq=1)
    with pytest.raises(CorpusError, match="empty vocabulary"):
        build_vocab(["a b"], min_freq=2)


def test_special_ids_distinct_and_reserved():
    v = build_vocab(["a"])
    ids = [v.blank_id, v.mask_id, v.pad_id, v.unk_id, v.bos_id, v.eos_id]
    assert len(set(ids)) == 6 and max(ids) < v.size
    assert [v.tokens[i] for i in ids] == ["<blank>", "<mask>", "<pad>", "<unk>", "<s>", "</s>"]


def test_encode_decode():
    v = build_vocab(["a"])
    assert v.index["a"] == 6
    assert v.encode("a a") == [6, 6]
    assert v.encode("zz") == [v.unk_id]
    assert v.decode([v.mask_id, 6]) == "<mask> a"
    with pytest.raises(CorpusError):
        v.decode([v.size])


@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=12))
def test_encode_decode_round_trip(words):
    v = build_vocab(["a b c d"])
    s = " ".join(words)
    assert v.decode(v.encode(s)) == s


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab(["b a", "a"])
    v.save(tmp_path / "vocab.txt")
    assert Vocab.load(tmp_path / "vocab.txt") == v
    assert (tmp_path / "vocab.txt").read_text().splitlines()[6] == "a"


def test_gen_synthetic_tasks():
    _, c = gen_synthetic("copy", 20, (3, 8), 10, seed=1)
    assert all(s == t for s, t in c.pairs)
    _, c = gen_synthetic("reverse", 20, (3, 8), 10, seed=1)
    assert all(s[::-1] == t for s, t in c.pairs)


def test_toy_grammar_identity_partner():
    identity = {t: t for t in range(6, 20)}
    assert apply_grammar([7, 8, 9, 10], identity) == [8, 7, 10, 9]
    assert apply_grammar([7, 8, 9], identity) == [8, 7, 9]


def test_toy_grammar_uses_a_permutation():
    v, c = gen_synthetic("toy_grammar", 200, (2, 6), 12, seed=5)
    c.validate(v)
    for s, t in c.pairs:
        assert sorted(t) != [] and len(t) == len(s)


@pytest.mark.parametrize("task", ["copy", "reverse", "toy_grammar"])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_gen_synthetic_reproducible(task, seed):
    a = gen_synthetic(task, 15, (1, 9), 8, seed)
    b = gen_synthetic(task, 15, (1, 9), 8, seed)
    assert a[0] == b[0] and a[1].pairs == b[1].pairs


@pytest.mark.parametrize("kwargs", [dict(len_range=(0, 3)), dict(len_range=(5, 3)), dict(len_range=(1, 65)), dict(vocab_size=7)])
def test_gen_synthetic_preconditions(kwargs):
    args = dict(task="copy", n_pairs=3, len_range=(1, 3), vocab_size=8, seed=0)
    args.update(kwargs)
    with pytest.raises(CorpusError):
        gen_synthetic(**args)


def test_load_parallel(tmp_path):
    v = build_vocab(["a b"])
    (tmp_path / "s").write_text("a b\na unseen\n", encoding="utf-8")
    (tmp_path / "t").write_text("b\na\n", encoding="utf-8")
    c = load_parallel(tmp_path / "s", tmp_path / "t", v)
    assert len(c) == 2
    assert c.pairs[1][0] == [v.index["a"], v.unk_id]


def test_load_parallel_errors(tmp_path):
    v = build_vocab(["a b"])
    (tmp_path / "s").write_text("a\nb\n")
    (tmp_path / "t").write_text("a\nb\na\n")
    with pytest.raises(CorpusError, match="mismatch"):
        load_parallel(tmp_path / "s", tmp_path / "t", v)
    with pytest.raises(CorpusError, match="cannot read"):
        load_parallel(tmp_path / "missing", tmp_path / "t", v)
    (tmp_path / "t").write_text("a\n  \n")
    with pytest.raises(CorpusError, match="blank"):
        load_parallel(tmp_path / "s", tmp_path / "t", v)


def test_write_then_load(tmp_path):
    v, c = gen_synthetic("reverse", 30, (1, 6), 9, seed=3)
    write_parallel(c, v, tmp_path / "s", tmp_path / "t")
    assert load_parallel(tmp_path / "s", tmp_path / "t", v).pairs == c.pairs


def test_prune_vocab_sizes():
    v = Vocab(list(SPECIALS) + [f"w{k}" for k in range(100)])
    used = list(range(6, 16))
    c = ParallelCorpus([(used[:5], used[5:])])
    new, remap = prune_vocab(v, c)
    assert new.size == 6 + 10
    assert remap[50] == v.unk_id
    assert [new.tokens[remap[i]] for i in used] == [v.tokens[i] for i in used]


def test_prune_vocab_full_coverage_is_permutation():
    v, c = gen_synthetic("copy", 300, (5, 10), 8, seed=0)
    new, remap = prune_vocab(v, c)
    assert new.size == v.size
    assert sorted(remap.tolist()) == list(range(v.size))


def test_prune_then_decode_round_trip():
    v, c = gen_synthetic("toy_grammar", 40, (1, 4), 30, seed=2)
    new, remap = prune_vocab(v, c)
    assert new.size < v.size
    pruned = remap_corpus(c, remap)
    for (s0, t0), (s1, t1) in zip(c.pairs, pruned.pairs):
        assert new.decode(s1) == v.decode(s0)
        assert new.decode(t1) == v.decode(t0)
