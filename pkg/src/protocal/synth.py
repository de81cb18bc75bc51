"""Synthetic prediction dumps and the oracles used to check the calibrator.

Scores are drawn in logit space from one Gaussian per class and, by default,
projected through log-softmax so every vector is a valid log-probability
vector.  The projection leaves argmax and softmax unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy.stats import multivariate_normal

from .errors import BinaryOnly, InvalidScenario, MissingLabels, InvalidShape
from .gmm import STREAM_BAYES, STREAM_SYNTH, make_rng
from .representation import as_logits, to_log_prob

POSITIVE = 1


@dataclass(frozen=True)
class ScenarioSpec:
    cluster_means: np.ndarray
    cluster_covs: np.ndarray
    class_priors: np.ndarray
    n_estimate: int = 500
    n_test: int = 2000
    seed: int = 0
    # Class mix of the estimate split only; defaults to ``class_priors``.
    estimate_priors: np.ndarray | None = None
    renormalize: bool = True

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.cluster_means, dtype=np.float64))
        n = means.shape[0]
        covs = np.asarray(self.cluster_covs, dtype=np.float64)
        priors = np.asarray(self.class_priors, dtype=np.float64)
        est_priors = priors if self.estimate_priors is None else np.asarray(
            self.estimate_priors, dtype=np.float64
        )
        if n < 2 or means.shape != (n, n):
            raise InvalidScenario(f"cluster_means must be N x N with N >= 2, got {means.shape}")
        if covs.shape != (n, n, n):
            raise InvalidScenario(f"cluster_covs must be N x N x N, got {covs.shape}")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(covs))):
            raise InvalidScenario("means and covariances must be finite")
        for name, p in (("class_priors", priors), ("estimate_priors", est_priors)):
            if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise InvalidScenario(f"{name} must be {n} non-negative reals summing to 1")
        for k in range(n):
            if not np.allclose(covs[k], covs[k].T, atol=1e-12):
                raise InvalidScenario(f"covariance {k} is not symmetric")
            try:
                np.linalg.cholesky(covs[k])
            except np.linalg.LinAlgError:
                raise InvalidScenario(f"covariance {k} is not positive definite") from None
        if self.n_estimate < 0 or self.n_test < 0 or self.seed < 0:
            raise InvalidScenario("n_estimate, n_test and seed must be non-negative")
        object.__setattr__(self, "cluster_means", means)
        object.__setattr__(self, "cluster_covs", covs)
        object.__setattr__(self, "class_priors", priors)
        object.__setattr__(self, "estimate_priors", est_priors)

    @property
    def n_classes(self) -> int:
        return self.cluster_means.shape[0]

    def replace(self, **changes) -> "ScenarioSpec":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        if "class_priors" in changes and "estimate_priors" not in changes:
            changes["estimate_priors"] = None
        values.update(changes)
        return ScenarioSpec(**values)

    def to_dict(self) -> dict:
        return {
            "cluster_means": self.cluster_means.tolist(),
            "cluster_covs": self.cluster_covs.tolist(),
            "class_priors": self.class_priors.tolist(),
            "estimate_priors": self.estimate_priors.tolist(),
            "n_estimate": self.n_estimate,
            "n_test": self.n_test,
            "seed": self.seed,
            "renormalize": self.renormalize,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        doc = dict(doc)
        preset = doc.pop("preset", None)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known - set(PRESET_PARAMS)
        if unknown:
            raise InvalidScenario(f"unknown scenario keys: {sorted(unknown)}")
        if preset is not None:
            if preset not in PRESETS:
                raise InvalidScenario(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
            params = {k: doc.pop(k) for k in PRESET_PARAMS if k in doc}
            base = PRESETS[preset](**params)
            return base.replace(**doc) if doc else base
        extra = set(doc) & set(PRESET_PARAMS)
        if extra:
            raise InvalidScenario(f"{sorted(extra)} only apply together with a preset")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidScenario(str(exc)) from None


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def binary_scenario(
    p_negative: float,
    p_positive: float,
    spread: float,
    **kwargs,
) -> ScenarioSpec:
    """Two classes centred at the given positive-class probabilities.

    The centres sit at ``(-d/2, d/2)`` with ``d`` the logit of the target
    probability, so class means differ only along the direction that the
    softmax sees; ``spread`` is the per-coordinate standard deviation.
    """
    means = []
    for p in (p_negative, p_positive):
        d = _logit(p)
        means.append([-d / 2, d / 2])
    covs = np.array([np.eye(2) * spread**2] * 2)
    kwargs.setdefault("class_priors", [0.5, 0.5])
    return ScenarioSpec(cluster_means=means, cluster_covs=covs, **kwargs)


def biased_binary(spread: float = 0.25, **kwargs) -> ScenarioSpec:
    """Both clusters on the positive side of the 0.5 boundary (p = 0.70 and 0.90)."""
    return binary_scenario(0.70, 0.90, spread, **kwargs)


def symmetric_binary(spread: float = 0.4, **kwargs) -> ScenarioSpec:
    return binary_scenario(0.25, 0.75, spread, **kwargs)


PRESETS = {"biased-binary": biased_binary, "symmetric-binary": symmetric_binary}
PRESET_PARAMS = ("spread",)


class ScenarioSample(NamedTuple):
    estimate_logits: np.ndarray
    test_logits: np.ndarray
    test_gold: np.ndarray
    estimate_gold: np.ndarray


def _draw(spec: ScenarioSpec, rng: np.random.Generator, count: int, priors) -> tuple:
    n = spec.n_classes
    gold = rng.choice(n, size=count, p=priors)
    noise = rng.standard_normal((count, n))
    chol = np.linalg.cholesky(spec.cluster_covs)
    x = spec.cluster_means[gold] + np.einsum("kij,kj->ki", chol[gold], noise)
    if spec.renormalize and count:
        x = to_log_prob(x)
    return x, gold


def sample_scenario(spec: ScenarioSpec) -> ScenarioSample:
    """Draw the estimate and test splits; bit-reproducible for a given seed.

    The estimate labels are returned for reporting only; calibration never
    sees them.
    """
    rng = make_rng(spec.seed, STREAM_SYNTH)
    est, est_gold = _draw(spec, rng, spec.n_estimate, spec.estimate_priors)
    test, test_gold = _draw(spec, rng, spec.n_test, spec.class_priors)
    return ScenarioSample(est, test, test_gold, est_gold)


def bayes_optimal_accuracy(spec: ScenarioSpec, draws: int = 200_000) -> tuple[float, float]:
    """Monte-Carlo accuracy of the true-parameter posterior classifier.

    Evaluated on raw logits under the test priors, which bounds any rule that
    only sees a function of the logits.  Returns ``(accuracy, standard_error)``.
    """
    rng = make_rng(spec.seed, STREAM_BAYES)
    raw = spec.replace(renormalize=False)
    x, gold = _draw(raw, rng, draws, spec.class_priors)
    with np.errstate(divide="ignore"):
        log_prior = np.log(spec.class_priors)
    scores = np.column_stack(
        [
            multivariate_normal(spec.cluster_means[k], spec.cluster_covs[k]).logpdf(x) + log_prior[k]
            for k in range(spec.n_classes)
        ]
    )
    correct = scores.argmax(axis=1) == gold
    acc = float(correct.mean())
    return acc, math.sqrt(acc * (1.0 - acc) / draws)


@dataclass
class SweepResult:
    thresholds: list[float]
    accuracies: list[float] = field(default_factory=list)

    def accuracy_at(self, t: float) -> float:
        return self.accuracies[self.thresholds.index(t)]

    def best(self) -> tuple[float, float]:
        i = int(np.argmax(self.accuracies))
        return self.thresholds[i], self.accuracies[i]


def boundary_sweep(test_logits, test_gold, grid) -> SweepResult:
    """Accuracy of "positive iff P(positive) > t" for each threshold t.

    The comparison is done on the logit margin against ``log(t / (1 - t))``,
    which is exactly zero at t = 0.5, so that grid point reproduces the argmax
    rule (ties go to the negative, lower-index label).
    """
    logits = np.atleast_2d(as_logits(test_logits))
    if logits.shape[1] != 2:
        raise BinaryOnly(f"the boundary sweep needs exactly 2 classes, got {logits.shape[1]}")
    if test_gold is None:
        raise MissingLabels("the boundary sweep needs gold labels")
    gold = np.asarray(test_gold)
    if len(gold) != len(logits) or len(gold) == 0:
        raise InvalidShape("need one gold label per logit vector and at least one vector")
    thresholds = [float(t) for t in grid]
    if not thresholds:
        raise InvalidShape("the threshold grid is empty")
    if any(not 0.0 < t < 1.0 for t in thresholds):
        raise InvalidShape("thresholds must lie strictly between 0 and 1")
    margin = logits[:, POSITIVE] - logits[:, 1 - POSITIVE]
    accs = []
    for t in thresholds:
        pred = (margin > _logit(t)).astype(np.int64)
        accs.append(float((pred == gold).mean()))
    return SweepResult(thresholds, accs)


def uniform_grid(steps: int) -> list[float]:
    """``steps`` evenly spaced thresholds strictly inside (0, 1)."""
    return [(i + 1) / (steps + 1) for i in range(steps)]
