"""Cluster-to-label matching.

Component ``n`` of an estimate is matched with label ``k[n]``; the score of a
matching is the sum of ``means[n, k[n]]``.  The optimum is found with a
Kuhn-Munkres (Hungarian) solver.  Among matchings whose score is within a
rounding tolerance of the optimum the lexicographically smallest wins, both
here and in the exhaustive oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidAssignment, InvalidEstimate, OracleTooLarge
from .gmm import MixtureEstimate

BRUTE_FORCE_MAX_N = 9


@dataclass(frozen=True)
class ClusterLabelAssignment:
    mapping: tuple[int, ...]
    score: float

    def label_of(self, cluster: int) -> int:
        return self.mapping[cluster]

    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.mapping)
        for cluster, label in enumerate(self.mapping):
            inv[label] = cluster
        return tuple(inv)


def _means(estimate) -> np.ndarray:
    means = estimate.means if isinstance(estimate, MixtureEstimate) else estimate
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] != means.shape[1]:
        raise InvalidEstimate(f"expected an N x N mean matrix, got shape {means.shape}")
    if not np.all(np.isfinite(means)):
        raise InvalidEstimate("component means must be finite")
    return means


def _check_mapping(mapping, n: int) -> tuple[int, ...]:
    mapping = tuple(int(m) for m in mapping)
    if sorted(mapping) != list(range(n)):
        raise InvalidAssignment(f"{mapping} is not a permutation of 0..{n - 1}")
    return mapping


def cla_score(estimate, mapping) -> float:
    """Sum over clusters of the mean coordinate at the assigned label.

    ``estimate`` is a :class:`MixtureEstimate` or a square mean matrix.
    """
    means = _means(estimate)
    mapping = _check_mapping(mapping, means.shape[0])
    total = 0.0
    for n, label in enumerate(mapping):
        total += means[n, label]
    return float(total)


def _tie_tolerance(means: np.ndarray) -> float:
    scale = max(1.0, float(np.abs(means).max(initial=0.0)))
    return 1e-12 * scale * means.shape[0]


def hungarian_min(cost: np.ndarray) -> list[int]:
    """Minimum-cost perfect matching on a square matrix.

    Returns ``col`` with ``col[row]`` the column matched to ``row``.  Classic
    O(n^3) shortest-augmenting-path formulation with row/column potentials.
    """
    n = cost.shape[0]
    if n == 0:
        return []
    c = cost.tolist()
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # owner[j]: 1-based row matched to column j, 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = c[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - ui0 - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col = [0] * n
    for j in range(1, n + 1):
        col[owner[j] - 1] = j - 1
    return col


def _best_completion(means: np.ndarray, prefix: list[int]) -> tuple[float, list[int]]:
    """Best total score and full mapping given the labels of the first rows."""
    n = means.shape[0]
    fixed = sum(means[r, l] for r, l in enumerate(prefix))
    rows = list(range(len(prefix), n))
    cols = [l for l in range(n) if l not in prefix]
    if not rows:
        return fixed, list(prefix)
    sub = means[np.ix_(rows, cols)]
    match = hungarian_min(-sub)
    rest = [cols[m] for m in match]
    return fixed + sum(sub[i, m] for i, m in enumerate(match)), list(prefix) + rest


def optimal_assignment(estimate) -> ClusterLabelAssignment:
    """Score-maximising cluster-to-label matching (Kuhn-Munkres)."""
    means = _means(estimate)
    n = means.shape[0]
    best_value, best = _best_completion(means, [])
    floor = best_value - _tie_tolerance(means)
    # Walk the rows left to right, fixing the smallest label that still admits
    # an optimal completion.
    for row in range(n):
        prefix = best[:row]
        for label in sorted(set(range(n)) - set(prefix)):
            if label >= best[row]:
                break
            value, full = _best_completion(means, prefix + [label])
            if value >= floor:
                best = full
                break
    mapping = tuple(best)
    return ClusterLabelAssignment(mapping, cla_score(means, mapping))


def brute_force_assignment(estimate) -> ClusterLabelAssignment:
    """Exhaustive search over all N! matchings; the reference for the solver."""
    means = _means(estimate)
    n = means.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise OracleTooLarge(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {n}")
    # itertools yields permutations in lexicographic order.
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    scores = means[np.arange(n), perms].sum(axis=1)
    first = int(np.flatnonzero(scores >= scores.max() - _tie_tolerance(means))[0])
    mapping = tuple(int(l) for l in perms[first])
    return ClusterLabelAssignment(mapping, cla_score(means, mapping))
