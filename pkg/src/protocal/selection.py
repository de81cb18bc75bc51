"""Multi-restart estimation and choice of the final estimate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import ClusterLabelAssignment, optimal_assignment
from .errors import EstimationFailed, InvalidConfig, SingularCovariance
from .gmm import EmConfig, MixtureEstimate, fit_em

ASSIGNMENT_SCORE = "assignment-score"
MAX_LIKELIHOOD = "max-likelihood"
STRATEGIES = (ASSIGNMENT_SCORE, MAX_LIKELIHOOD)


@dataclass
class RestartBatch:
    """One entry per restart, ordered by seed; failed restarts hold ``None``."""

    fits: list[MixtureEstimate | None]
    seeds: list[int]
    strategy: str = ASSIGNMENT_SCORE
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def restarts(self) -> int:
        return len(self.fits)

    def successful(self) -> list[MixtureEstimate]:
        return [f for f in self.fits if f is not None]


def check_strategy(strategy: str) -> str:
    if strategy not in STRATEGIES:
        raise InvalidConfig(f"unknown selection strategy {strategy!r}; expected one of {STRATEGIES}")
    return strategy


def _fit_one(args):
    data, n_components, seed, config = args
    try:
        return fit_em(data, n_components, seed, config), None
    except SingularCovariance as exc:
        return None, str(exc)


def run_restarts(
    data,
    n_components: int,
    base_seed: int = 0,
    restarts: int = 100,
    config: EmConfig = EmConfig(),
    strategy: str = ASSIGNMENT_SCORE,
    workers: int = 1,
) -> RestartBatch:
    """Fit the mixture ``restarts`` times with seeds ``base_seed + r``.

    With ``workers > 1`` the fits run in a process pool; the result is the
    same as a sequential run because each fit depends only on its own seed.
    """
    check_strategy(strategy)
    if restarts < 1:
        raise InvalidConfig(f"restarts must be >= 1, got {restarts}")
    if base_seed < 0 or base_seed + restarts > 2**64:
        raise InvalidConfig("restart seeds must stay within [0, 2**64)")
    X = np.asarray(data, dtype=np.float64)
    seeds = [base_seed + r for r in range(restarts)]
    jobs = [(X, n_components, s, config) for s in seeds]
    if workers > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=min(workers, restarts)) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(job) for job in jobs]
    fits = [fit for fit, _ in results]
    failures = {s: err for s, (_, err) in zip(seeds, results) if err is not None}
    if len(failures) == restarts:
        raise EstimationFailed(f"all {restarts} restarts failed: {next(iter(failures.values()))}")
    return RestartBatch(fits=fits, seeds=seeds, strategy=strategy, failures=failures)


def select_estimate(
    batch: RestartBatch, strategy: str | None = None
) -> tuple[MixtureEstimate, ClusterLabelAssignment]:
    """Pick one fit from the batch and return it with its optimal matching.

    ``assignment-score`` keeps the fit whose optimal matching scores highest;
    ``max-likelihood`` keeps the fit with the best final log-likelihood.  Ties
    go to the earlier (lower-seed) fit.
    """
    strategy = check_strategy(strategy or batch.strategy)
    best = None
    best_key = -np.inf
    best_assignment = None
    for fit in batch.fits:
        if fit is None:
            continue
        if strategy == ASSIGNMENT_SCORE:
            assignment = optimal_assignment(fit)
            key = assignment.score
        else:
            assignment = None
            key = fit.log_likelihood
        if best is None or key > best_key:
            best, best_key, best_assignment = fit, key, assignment
    if best is None:
        raise EstimationFailed("no successful fit to select from")
    if best_assignment is None:
        best_assignment = optimal_assignment(best)
    return best, best_assignment


def restart_summary(batch: RestartBatch) -> list[dict]:
    """Per-restart diagnostics rows."""
    rows = []
    for seed, fit in zip(batch.seeds, batch.fits):
        if fit is None:
            rows.append({"seed": seed, "failed": True, "error": batch.failures.get(seed)})
            continue
        assignment = optimal_assignment(fit)
        rows.append(
            {
                "seed": seed,
                "failed": False,
                "converged": fit.converged,
                "iterations": fit.iterations,
                "log_likelihood": fit.log_likelihood,
                "cla_score": assignment.score,
                "degenerate": fit.degenerate,
            }
        )
    return rows

