import itertools
import math

import numpy as np
import pytest

from natctc.beam import BeamConfig, _search_frames, ctc_beam_search, rescore
from natctc.ctc import LogProbLattice, ctc_loss, enumerate_alignments, greedy_decode, log_softmax_lattice
from natctc.corpus import SPECIALS, Vocab
from natctc.ngram import train_ngram

BLANK = 0


def exact_marginal(lat, y):
    if not y:
        return float(lat[:, BLANK].sum())
    V = lat.V
    mass = sum(math.exp(sum(lat[t, a[t]] for t in range(lat.T))) for a in enumerate_alignments(y, lat.T, BLANK, V))
    return math.log(mass) if mass > 0 else -math.inf


def all_candidates(T, V):
    yield ()
    for n in range(1, T + 1):
        yield from itertools.product(range(1, V), repeat=n)


def spell(path, V):
    p = np.full((len(path), V), 1e-12)
    p[np.arange(len(path)), path] = 1.0
    return LogProbLattice(np.log(p / p.sum(axis=1, keepdims=True)))


def test_deterministic_lattice():
    lat = spell([1, BLANK, 2], 3)
    for cfg in (BeamConfig(0, 0, 1), BeamConfig(0, 0.9, 20), BeamConfig(0, -2.0, 5)):
        assert ctc_beam_search(lat, cfg, BLANK)[0][0] == [1, 2]


def test_exhaustive_optimality_via_enumeration(rng):
    # T=4, V=3: beam >= V**T keeps every prefix alive
    for _ in range(20):
        lat = log_softmax_lattice(rng.normal(size=(4, 3)) * 2)
        top, score = ctc_beam_search(lat, BeamConfig(0, 0, 81), BLANK)[0]
        scores = {c: exact_marginal(lat, list(c)) for c in all_candidates(4, 3)}
        best = max(scores.values())
        assert score == pytest.approx(best, abs=1e-9)
        assert scores[tuple(top)] == pytest.approx(best, abs=1e-9)


def test_lm_breaks_symmetry():
    # frames 0 and 2 split evenly between a and b, frame 1 is blank, so "a b" and "b a" tie on CTC mass
    vocab = Vocab(list(SPECIALS) + ["a", "b"])
    a, b = vocab.index["a"], vocab.index["b"]
    p = np.full((3, vocab.size), 1e-12)
    p[0, [a, b]] = p[2, [a, b]] = 0.5
    p[1, BLANK] = 1.0
    lat = LogProbLattice(np.log(p / p.sum(axis=1, keepdims=True)))
    lm = train_ngram([["a", "b"]] * 50, order=2, vocab=vocab)
    cfg = BeamConfig(alpha=5.0, beta=0.0, beam_size=10, lm=lm)
    res = ctc_beam_search(lat, cfg, BLANK)
    ranked = [tuple(t) for t, _ in res]
    assert ranked.index((a, b)) < ranked.index((b, a))
    scores = {tuple(t): s for t, s in res}
    for y in ((a, b), (b, a)):
        assert scores[y] == pytest.approx(rescore(list(y), lat, cfg, BLANK), abs=1e-6)
    plain = BeamConfig(0, 0, 1)
    assert rescore([a, b], lat, plain, BLANK) == pytest.approx(rescore([b, a], lat, plain, BLANK), abs=1e-9)


def test_rescore_terms(rng):
    lat = log_softmax_lattice(rng.normal(size=(5, 4)))
    y = [1, 3]
    assert rescore(y, lat, BeamConfig(0, 0, 1), BLANK) == pytest.approx(-ctc_loss(lat, y, BLANK).loss)
    short = rescore([1], lat, BeamConfig(0, 0.5, 1), BLANK) - rescore([1], lat, BeamConfig(0, 0, 1), BLANK)
    long = rescore([1, 2], lat, BeamConfig(0, 0.5, 1), BLANK) - rescore([1, 2], lat, BeamConfig(0, 0, 1), BLANK)
    assert long > short > 0
    assert rescore([1, 1, 1], log_softmax_lattice(rng.normal(size=(2, 3))), BeamConfig(0, 0, 1), BLANK) == -math.inf


def test_reported_scores_match_rescore(rng):
    lm = train_ngram([rng.integers(1, 3, size=4).tolist() for _ in range(30)], order=3)
    for _ in range(30):
        T = int(rng.integers(1, 6))
        lat = log_softmax_lattice(rng.normal(size=(T, 3)) * 2)
        cfg = BeamConfig(alpha=0.3, beta=0.9, beam_size=200, lm=_StrLM(lm))
        for toks, s in ctc_beam_search(lat, cfg, BLANK):
            assert s == pytest.approx(rescore(toks, lat, cfg, BLANK), abs=1e-6)


class _StrLM:
    """Adapter scoring integer ids as their decimal strings."""

    def __init__(self, lm):
        self.lm = lm

    def start_state(self):
        return self.lm.start_state()

    def score(self, state, tok):
        return self.lm.score(state, str(tok))

    def eos_score(self, state):
        return self.lm.eos_score(state)

    def sentence_logprob(self, y):
        return self.lm.sentence_logprob([str(t) for t in y])


def test_small_beam_score_bounded_by_rescore(rng):
    for _ in range(30):
        lat = log_softmax_lattice(rng.normal(size=(6, 4)) * 2)
        cfg = BeamConfig(0, 0.4, 2)
        for toks, s in ctc_beam_search(lat, cfg, BLANK):
            assert s <= rescore(toks, lat, cfg, BLANK) + 1e-6


def test_sorted_unique_and_bounded(rng):
    lat = log_softmax_lattice(rng.normal(size=(8, 5)))
    res = ctc_beam_search(lat, BeamConfig(0, 0.2, 7), BLANK)
    assert len(res) <= 7
    scores = [s for _, s in res]
    assert scores == sorted(scores, reverse=True)
    assert len({tuple(t) for t, _ in res}) == len(res)
    assert all(BLANK not in t for t, _ in res)


def test_empty_prefix_blank_mass(rng):
    lat = log_softmax_lattice(rng.normal(size=(6, 4)))
    for t, beams in enumerate(_search_frames(lat, BeamConfig(0, 0, 2000), BLANK)):
        assert beams[()].p_blank == pytest.approx(float(lat[: t + 1, BLANK].sum()), abs=1e-12)
        assert beams[()].p_nonblank == -math.inf


def test_beam_one_at_least_greedy(rng):
    for _ in range(30):
        lat = log_softmax_lattice(rng.normal(size=(5, 3)) * 2)
        cfg = BeamConfig(0, 0, 1)
        top, _ = ctc_beam_search(lat, cfg, BLANK)[0]
        greedy = greedy_decode(lat, BLANK)
        # beam keeps at least the mass greedy's best path carries
        path = np.argmax(lat.values, axis=1)
        assert rescore(top, lat, cfg, BLANK) >= float(lat.values[np.arange(5), path].sum()) - 1e-9
        assert rescore(greedy, lat, cfg, BLANK) >= float(lat.values[np.arange(5), path].sum()) - 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        BeamConfig(alpha=0.3, beta=0.9, beam_size=20, lm=None)
    with pytest.raises(ValueError):
        BeamConfig(0, 0, 0)
    assert (BeamConfig.__dataclass_fields__["alpha"].default, BeamConfig.__dataclass_fields__["beta"].default,
            BeamConfig.__dataclass_fields__["beam_size"].default) == (0.3, 0.9, 20)
