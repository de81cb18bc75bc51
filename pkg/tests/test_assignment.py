import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from protocal.assignment import (
    ClusterLabelAssignment,
    brute_force_assignment,
    cla_score,
    hungarian_min,
    optimal_assignment,
)
from protocal.errors import InvalidAssignment, InvalidEstimate, OracleTooLarge
from protocal.gmm import MixtureEstimate

DIAGONAL = [[-0.1, -2.3], [-2.3, -0.1]]
ANTI = [[-2.3, -0.1], [-0.1, -2.3]]


def square(n):
    return arrays(
        np.float64, (n, n), elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False)
    )


def test_cla_score_direct_sums():
    assert cla_score(DIAGONAL, (0, 1)) == pytest.approx(-0.2)
    assert cla_score(DIAGONAL, (1, 0)) == pytest.approx(-4.6)
    assert cla_score([[3.5]], (0,)) == 3.5


def test_cla_score_accepts_an_estimate():
    est = MixtureEstimate(
        weights=np.array([0.5, 0.5]), means=np.array(DIAGONAL), covariances=np.array([np.eye(2)] * 2)
    )
    assert cla_score(est, (0, 1)) == cla_score(DIAGONAL, (0, 1))


@pytest.mark.parametrize("mapping", [(0, 0), (0, 2), (1,), (0, 1, 2)])
def test_cla_score_rejects_non_permutations(mapping):
    with pytest.raises(InvalidAssignment):
        cla_score(DIAGONAL, mapping)


def test_dominant_diagonal_and_anti_diagonal():
    assert optimal_assignment(DIAGONAL) == ClusterLabelAssignment((0, 1), cla_score(DIAGONAL, (0, 1)))
    a = optimal_assignment(ANTI)
    assert a.mapping == (1, 0)
    assert a.score == pytest.approx(-0.2)


def test_brute_force_small_cases():
    a = brute_force_assignment([[0.0, -1.0], [-1.0, 0.0]])
    assert a.mapping == (0, 1) and a.score == 0.0
    m = -np.ones((3, 3)) + 2 * np.eye(3)
    assert brute_force_assignment(m).mapping == (0, 1, 2)


def test_ties_resolve_to_lexicographically_smallest():
    assert optimal_assignment(np.zeros((4, 4))).mapping == (0, 1, 2, 3)
    m = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert optimal_assignment(m).mapping == (0, 1, 2)
    m = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    assert optimal_assignment(m).mapping == brute_force_assignment(m).mapping == (1, 2, 0)


def test_matches_brute_force_on_random_instances(rng):
    for n in range(1, 8):
        for trial in range(60):
            m = rng.standard_normal((n, n))
            if trial % 4 == 0:
                m = np.round(m)  # plenty of exact ties
            assert optimal_assignment(m) == brute_force_assignment(m)


def test_matches_scipy_on_larger_instances(rng):
    for n in (8, 10, 14, 20):
        for _ in range(10):
            m = rng.standard_normal((n, n))
            rows, cols = linear_sum_assignment(m, maximize=True)
            assert optimal_assignment(m).score == pytest.approx(m[rows, cols].sum(), abs=1e-9)


def test_hungarian_min_on_known_matrix():
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    col = hungarian_min(cost)
    assert sorted(col) == [0, 1, 2]
    best = min(sum(cost[i, p[i]] for i in range(3)) for p in itertools.permutations(range(3)))
    assert sum(cost[i, col[i]] for i in range(3)) == best == 5.0
    assert hungarian_min(np.zeros((0, 0))) == []


def test_brute_force_guard():
    with pytest.raises(OracleTooLarge):
        brute_force_assignment(np.zeros((10, 10)))


@pytest.mark.parametrize("bad", [[[0.0, np.nan], [0.0, 0.0]], [[np.inf, 0.0], [0.0, 0.0]], [[1.0, 2.0]]])
def test_invalid_estimates(bad):
    with pytest.raises(InvalidEstimate):
        optimal_assignment(bad)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6).flatmap(square))
def test_solver_equals_exhaustive_search(m):
    assert optimal_assignment(m) == brute_force_assignment(m)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6).flatmap(square), st.data())
def test_row_shift_moves_score_only(m, data):
    row = data.draw(st.integers(0, m.shape[0] - 1))
    c = data.draw(st.floats(-20, 20))
    shifted = m.copy()
    shifted[row] += c
    a, b = optimal_assignment(m), optimal_assignment(shifted)
    # A shift cannot change which matchings are optimal, only exact-tie rounding.
    assert b.score == pytest.approx(a.score + c, abs=1e-9)
    if not np.isclose(sorted(
        cla_score(m, p) for p in itertools.permutations(range(m.shape[0]))
    )[-2:], a.score, atol=1e-9).all():
        assert b.mapping == a.mapping


def test_optimum_beats_random_permutations(rng):
    m = rng.standard_normal((7, 7))
    best = optimal_assignment(m).score
    for _ in range(100):
        assert best >= cla_score(m, rng.permutation(7))
