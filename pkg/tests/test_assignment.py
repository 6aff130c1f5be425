import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from natctc.assignment import brute_force_assignment, hungarian


def test_examples():
    col, cost = hungarian([[0, 1], [1, 0]])
    assert col.tolist() == [0, 1] and cost == 0
    col, cost = hungarian([[5, 2, 7]])
    assert col.tolist() == [1] and cost == 2
    assert brute_force_assignment([[0, 1], [1, 0]])[1] == 0
    assert hungarian([[1, 1], [1, 1]])[1] == 2


def test_square_3x3_matches_permutations(rng):
    for _ in range(50):
        c = rng.integers(0, 10, size=(3, 3))
        best = min(sum(c[i, p[i]] for i in range(3)) for p in itertools.permutations(range(3)))
        assert hungarian(c)[1] == best


def test_matches_brute_force_integer(rng):
    for _ in range(200):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(n, 8))
        c = rng.integers(-50, 50, size=(n, m)).astype(float)
        col, cost = hungarian(c)
        assert len(set(col.tolist())) == n
        assert cost == brute_force_assignment(c)[1]


def test_matches_brute_force_real_5x7(rng):
    for _ in range(200):
        c = rng.normal(size=(5, 7))
        assert abs(hungarian(c)[1] - brute_force_assignment(c)[1]) <= 1e-9


def test_agrees_with_scipy_on_larger(rng):
    for _ in range(10):
        n = int(rng.integers(5, 40))
        c = rng.normal(size=(n, n + int(rng.integers(0, 30))))
        r, k = linear_sum_assignment(c)
        assert hungarian(c)[1] == pytest.approx(c[r, k].sum(), abs=1e-9)


def test_row_shift_invariance(rng):
    for _ in range(30):
        n, m = int(rng.integers(1, 6)), 6
        c = rng.integers(0, 20, size=(n, m)).astype(float)
        row, k = int(rng.integers(n)), float(rng.integers(-7, 8))
        shifted = c.copy()
        shifted[row] += k
        col, cost = hungarian(c)
        assert hungarian(shifted)[1] == cost + k
        assert shifted[np.arange(n), col].sum() == brute_force_assignment(shifted)[1]


def test_errors():
    with pytest.raises(ValueError):
        hungarian(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        hungarian([[0.0, np.inf]])
    with pytest.raises(ValueError):
        brute_force_assignment(np.zeros((2, 8)))
