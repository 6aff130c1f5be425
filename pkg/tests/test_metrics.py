import random

import pytest

from natctc.metrics import corpus_bleu, sequence_accuracy, token_error_rate

# clipped counts p1..p4 = 6/7, 4/6, 2/5, 1/4, equal lengths -> BP 1; computed with an independent Counter script
FROZEN_BLEU = 48.8923022434901


def test_identical_is_100():
    refs = ["a b c d e", "x y z w v u", "q r s t"]
    assert corpus_bleu(refs, refs).bleu == 100.0
    assert corpus_bleu([["7"] * 9], [["7"] * 9]).bleu == 100.0


def test_zero_precision_short_circuits():
    r = corpus_bleu(["a a a"], ["a b"])
    assert r.precisions[0] == pytest.approx(1 / 3)
    assert r.bleu == 0.0


def test_frozen_example():
    r = corpus_bleu(["the cat sat on the mat ."], ["the cat sat on a mat ."])
    assert r.matches == [6, 4, 2, 1] and r.totals == [7, 6, 5, 4]
    assert r.brevity_penalty == 1.0
    assert r.bleu == pytest.approx(FROZEN_BLEU, abs=1e-6)


def test_brevity_penalty():
    r = corpus_bleu(["a b c d"], ["a b c d e f g h"])
    assert r.brevity_penalty == pytest.approx(2.718281828459045 ** (1 - 2))


def test_permutation_invariant():
    hyps = ["a b c d", "b c d e f", "a a b b c c", "x y z w"]
    refs = ["a b c e", "b c d e", "a b b c c", "x y w z"]
    idx = list(range(4))
    random.Random(0).shuffle(idx)
    assert corpus_bleu(hyps, refs).bleu == corpus_bleu([hyps[i] for i in idx], [refs[i] for i in idx]).bleu


def test_clipping_never_increases_numerators():
    ref = "the cat is on the mat"  # "the" occurs twice
    at_count = corpus_bleu(["cat the the"], [ref]).matches
    for k in range(3, 9):
        r = corpus_bleu(["cat" + " the" * k], [ref])
        assert all(a <= b for a, b in zip(r.matches, at_count))
        assert r.matches[0] == 3


def test_length_mismatch():
    with pytest.raises(ValueError):
        corpus_bleu(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        sequence_accuracy(["a"], [])


def test_sequence_accuracy():
    assert sequence_accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert sequence_accuracy(["a", "b"], ["c", "d"]) == 0.0
    assert sequence_accuracy(["a", "b"], ["a", "d"]) == 0.5
    assert sequence_accuracy([[1, 2]], [[1, 2]]) == 1.0


def test_token_error_rate():
    assert token_error_rate(["a b c"], ["a b c"]) == 0.0
    assert token_error_rate(["a c"], ["a b c"]) == pytest.approx(1 / 3)
