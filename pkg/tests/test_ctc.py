import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from natctc.ctc import (
    LogProbLattice,
    collapse,
    ctc_loss,
    enumerate_alignments,
    greedy_decode,
    log_softmax_lattice,
    min_frames,
)

BLANK = 0


def random_lattice(rng, T, V, scale=2.0):
    return log_softmax_lattice(rng.normal(size=(T, V)) * scale)


def alignment_mass(lat, y, V):
    T = lat.T
    return sum(math.exp(sum(lat[t, a[t]] for t in range(T))) for a in enumerate_alignments(y, T, BLANK, V))


def test_log_softmax_examples():
    lat = log_softmax_lattice(np.array([[0.0, 0.0], [1000.0, 0.0]]))
    np.testing.assert_allclose(lat[0], [math.log(0.5)] * 2)
    assert abs(lat[1, 0]) < 1e-12 and abs(lat[1, 1] + 1000.0) < 1e-9


def test_log_softmax_rows_normalized(rng):
    lat = log_softmax_lattice(rng.normal(size=(50, 7)) * 10)
    np.testing.assert_allclose(np.exp(lat.values).sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_log_softmax_rejects_nan():
    with pytest.raises(ValueError):
        log_softmax_lattice(np.array([[0.0, np.nan]]))


def test_lattice_validation():
    with pytest.raises(ValueError):
        LogProbLattice(np.zeros((2, 3)))


def test_single_alignment():
    lat = LogProbLattice.from_probs([[0.3, 0.7]])
    assert ctc_loss(lat, [1], BLANK).loss == pytest.approx(-math.log(0.7), abs=1e-15)


def test_two_frame_enumeration(rng):
    lat = random_lattice(rng, 2, 2)
    p = np.exp(lat.values)
    expected = p[0, 1] * p[1, 1] + p[0, 1] * p[1, 0] + p[0, 0] * p[1, 1]
    assert math.exp(-ctc_loss(lat, [1], BLANK).loss) == pytest.approx(expected, rel=1e-12)


def test_repeat_needs_blank():
    lat = LogProbLattice.from_probs([[0.5, 0.5], [0.5, 0.5]])
    res = ctc_loss(lat, [1, 1], BLANK)
    assert not res.feasible and res.loss == math.inf
    assert not res.grad.any()
    assert min_frames([1, 1]) == 3


def test_target_errors():
    lat = LogProbLattice.from_probs([[0.5, 0.5]])
    with pytest.raises(ValueError):
        ctc_loss(lat, [], BLANK)
    with pytest.raises(ValueError):
        ctc_loss(lat, [BLANK], BLANK)


def test_oracle_equivalence(rng):
    for _ in range(100):
        T, V, n = int(rng.integers(1, 7)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        y = list(rng.integers(1, V, size=n))
        lat = random_lattice(rng, T, V)
        res = ctc_loss(lat, y, BLANK)
        mass = alignment_mass(lat, y, V)
        if not res.feasible:
            assert mass == 0.0
        else:
            assert abs(math.exp(-res.loss) - mass) / mass <= 1e-9


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        T, V = int(rng.integers(3, 7)), int(rng.integers(2, 5))
        y = list(rng.integers(1, V, size=int(rng.integers(1, 3))))
        logits = rng.normal(size=(T, V))
        res = ctc_loss(log_softmax_lattice(logits), y, BLANK)
        if not res.feasible:
            continue
        fd = np.zeros_like(logits)
        for idx in np.ndindex(*logits.shape):
            e = np.zeros_like(logits)
            e[idx] = 1e-5
            fd[idx] = (ctc_loss(log_softmax_lattice(logits + e), y, BLANK).loss
                       - ctc_loss(log_softmax_lattice(logits - e), y, BLANK).loss) / 2e-5
        np.testing.assert_allclose(res.grad, fd, rtol=1e-4, atol=1e-8)


def test_long_lattice_is_stable(rng):
    lat = random_lattice(rng, 400, 30, scale=20)
    res = ctc_loss(lat, list(rng.integers(1, 30, size=60)), BLANK)
    assert np.isfinite(res.loss) and np.isfinite(res.grad).all()


def test_total_probability_conservation(rng):
    T, V = 4, 3
    lat = random_lattice(rng, T, V)
    total = math.exp(lat[:, BLANK].sum())  # empty collapse
    for n in range(1, T + 1):
        for y in itertools.product(range(1, V), repeat=n):
            res = ctc_loss(lat, list(y), BLANK)
            if res.feasible:
                total += math.exp(-res.loss)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_collapse_examples():
    a, b = 1, 2
    assert collapse([a, a, BLANK, a, b, b], BLANK) == [a, a, b]
    assert collapse([BLANK, BLANK], BLANK) == []
    assert collapse([a, b, a], BLANK) == [a, b, a]


def test_enumerate_examples():
    assert enumerate_alignments([1], 2, BLANK, 2) == {(1, 1), (1, 0), (0, 1)}
    assert enumerate_alignments([1, 2], 2, BLANK, 3) == {(1, 2)}
    got = enumerate_alignments([1], 3, BLANK, 3)
    brute = {a for a in itertools.product(range(3), repeat=3) if collapse(a, BLANK) == [1]}
    assert got == brute and len(got) == 6


def test_enumerate_budget():
    with pytest.raises(ValueError):
        enumerate_alignments([1], 9, BLANK, 2)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=6))
def test_collapse_preimage_round_trip(a):
    y = collapse(a, BLANK)
    if len(y) <= 4:
        members = enumerate_alignments(y, len(a), BLANK, 4)
        assert tuple(a) in members
        assert all(collapse(m, BLANK) == y for m in members)


def test_greedy_decode_examples():
    def spell(path, V=3):
        p = np.full((len(path), V), 1e-9)
        p[np.arange(len(path)), path] = 1.0
        return LogProbLattice(np.log(p / p.sum(axis=1, keepdims=True)))

    assert greedy_decode(spell([1, BLANK, 1]), BLANK) == [1, 1]
    assert greedy_decode(spell([1, 1, 2]), BLANK) == [1, 2]


def test_greedy_ties_go_to_smallest_id():
    lat = LogProbLattice.from_probs([[0.25, 0.375, 0.375]])
    assert greedy_decode(lat, BLANK) == [1]


def test_greedy_output_is_a_collapse(rng):
    lat = random_lattice(rng, 8, 4)
    path = np.argmax(lat.values, axis=1)
    assert greedy_decode(lat, BLANK) == collapse(path, BLANK)
