"""End-to-end calibration: estimate set in, deployable decision rule out.

Labels are 0-based throughout the Python API.  The JSON classifier document
stores the cluster-to-label mapping 1-based, like every other file format of
the command-line tool.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .assignment import ClusterLabelAssignment
from .errors import InsufficientData, InvalidConfig, InvalidLabel, InvalidShape
from .gmm import EmConfig, MixtureEstimate, component_log_densities
from .representation import DEFAULT_MODE, as_logits, check_mode, to_representation
from .selection import ASSIGNMENT_SCORE, RestartBatch, check_strategy, run_restarts, select_estimate

FORMAT_NAME = "protocal-classifier"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CalibrationConfig:
    mode: str = DEFAULT_MODE
    restarts: int = 100
    em: EmConfig = field(default_factory=EmConfig)
    strategy: str = ASSIGNMENT_SCORE
    seed: int = 0
    # Process-pool size for the restarts; never changes the result.
    workers: int = 1

    def __post_init__(self):
        check_mode(self.mode)
        check_strategy(self.strategy)
        if self.restarts < 1:
            raise InvalidConfig(f"restarts must be >= 1, got {self.restarts}")
        if self.workers < 1:
            raise InvalidConfig(f"workers must be >= 1, got {self.workers}")

    def snapshot(self) -> dict:
        """Everything that influences the fitted classifier."""
        return {
            "mode": self.mode,
            "restarts": self.restarts,
            "max_iter": self.em.max_iter,
            "tol": self.em.tol,
            "reg": self.em.reg,
            "strategy": self.strategy,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class CalibratedClassifier:
    estimate: MixtureEstimate
    assignment: ClusterLabelAssignment
    mode: str = DEFAULT_MODE
    config: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.estimate.n_components

    def cluster_log_densities(self, logits) -> np.ndarray:
        """``(n, N)`` component log-densities of the represented inputs.

        Mixing weights play no part here.
        """
        o = as_logits(logits)
        x = np.atleast_2d(to_representation(o, self.mode))
        if x.shape[1] != self.n_classes:
            raise InvalidShape(f"expected {self.n_classes} logits per example, got {x.shape[1]}")
        return component_log_densities(x, self.estimate.means, self.estimate.cholesky())

    def predict(self, logits):
        """Label of the most likely cluster (lowest cluster index on ties)."""
        single = np.ndim(logits) == 1
        clusters = self.cluster_log_densities(logits).argmax(axis=1)
        labels = np.asarray(self.assignment.mapping)[clusters]
        return int(labels[0]) if single else labels

    def decision_boundaries(self, grid: int = 20001) -> list[float]:
        """Positive-class probabilities where a binary classifier flips label."""
        if self.n_classes != 2:
            raise InvalidShape("decision boundaries are only defined for two classes")
        p = np.linspace(0.0, 1.0, grid + 2)[1:-1]
        logits = np.column_stack([np.zeros_like(p), np.log(p) - np.log1p(-p)])
        pred = self.predict(logits)
        flips = np.flatnonzero(np.diff(pred) != 0)
        return [float(0.5 * (p[i] + p[i + 1])) for i in flips]

    def to_dict(self) -> dict:
        est = self.estimate
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n_classes": self.n_classes,
            "mode": self.mode,
            "config": dict(self.config),
            "seed": est.seed,
            "weights": est.weights.tolist(),
            "means": est.means.tolist(),
            "covariances": est.covariances.tolist(),
            "assignment": [label + 1 for label in self.assignment.mapping],
            "cla_score": self.assignment.score,
            "log_likelihood": est.log_likelihood,
            "converged": est.converged,
            "iterations": est.iterations,
            "degenerate": est.degenerate,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibratedClassifier":
        if doc.get("format") != FORMAT_NAME:
            raise InvalidConfig(f"not a classifier document (format={doc.get('format')!r})")
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidConfig(f"unsupported classifier version {doc.get('version')!r}")
        estimate = MixtureEstimate(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            covariances=np.asarray(doc["covariances"], dtype=np.float64),
            seed=doc.get("seed"),
            log_likelihood=doc.get("log_likelihood", float("nan")),
            converged=doc.get("converged", False),
            iterations=doc.get("iterations", 0),
            degenerate=doc.get("degenerate", False),
        )
        mapping = tuple(int(label) - 1 for label in doc["assignment"])
        assignment = ClusterLabelAssignment(mapping, float(doc["cla_score"]))
        return cls(estimate, assignment, check_mode(doc["mode"]), doc.get("config", {}))

    @classmethod
    def loads(cls, text: str) -> "CalibratedClassifier":
        return cls.from_dict(json.loads(text))


def calibrate_with_batch(
    raw_logits, n_classes: int | None = None, config: CalibrationConfig = CalibrationConfig()
) -> tuple[CalibratedClassifier, RestartBatch]:
    """Like :func:`calibrate` but also returns every restart for diagnostics."""
    logits = as_logits(raw_logits)
    if logits.ndim != 2:
        raise InvalidShape("the estimate set must be a 2-D array of logit vectors")
    n = logits.shape[1] if n_classes is None else int(n_classes)
    if logits.shape[1] != n:
        raise InvalidShape(f"expected {n} logits per vector, got {logits.shape[1]}")
    if logits.shape[0] < max(n, 2):
        raise InsufficientData(f"need at least {max(n, 2)} vectors, got {logits.shape[0]}")
    x = to_representation(logits, config.mode)
    batch = run_restarts(
        x, n, config.seed, config.restarts, config.em, config.strategy, config.workers
    )
    estimate, assignment = select_estimate(batch)
    return CalibratedClassifier(estimate, assignment, config.mode, config.snapshot()), batch


def calibrate(
    raw_logits, n_classes: int | None = None, config: CalibrationConfig = CalibrationConfig()
) -> CalibratedClassifier:
    """Fit the mixture on an unlabeled estimate set of logit vectors."""
    return calibrate_with_batch(raw_logits, n_classes, config)[0]


def predict(classifier: CalibratedClassifier, logits):
    return classifier.predict(logits)


def predict_conventional(logits):
    """Argmax over the logits, lowest label index on ties."""
    single = np.ndim(logits) == 1
    pred = np.atleast_2d(as_logits(logits)).argmax(axis=1)
    return int(pred[0]) if single else pred


@dataclass
class Metrics:
    n: int
    accuracy: float
    conventional_accuracy: float
    per_class_accuracy: list
    conventional_per_class_accuracy: list
    confusion: list
    conventional_confusion: list

    def to_dict(self) -> dict:
        return asdict(self)


def _confusion(gold: np.ndarray, pred: np.ndarray, n: int) -> np.ndarray:
    mat = np.zeros((n, n), dtype=np.int64)
    np.add.at(mat, (gold, pred), 1)
    return mat


def _per_class(mat: np.ndarray) -> list:
    totals = mat.sum(axis=1)
    return [float(mat[i, i] / totals[i]) if totals[i] else None for i in range(len(mat))]


def accuracy_report(gold, pred, conventional, n_classes: int) -> Metrics:
    gold = np.asarray(gold, dtype=np.int64)
    cal = _confusion(gold, np.asarray(pred), n_classes)
    conv = _confusion(gold, np.asarray(conventional), n_classes)
    total = len(gold)
    return Metrics(
        n=total,
        accuracy=float(np.trace(cal) / total),
        conventional_accuracy=float(np.trace(conv) / total),
        per_class_accuracy=_per_class(cal),
        conventional_per_class_accuracy=_per_class(conv),
        confusion=cal.tolist(),
        conventional_confusion=conv.tolist(),
    )


def evaluate(classifier: CalibratedClassifier, logits, gold) -> Metrics:
    """Calibrated and conventional accuracy on a labeled set."""
    logits = np.atleast_2d(as_logits(logits))
    gold = np.asarray(gold)
    if len(gold) != len(logits):
        raise InvalidShape(f"{len(logits)} logit vectors but {len(gold)} labels")
    if len(gold) == 0:
        raise InsufficientData("cannot evaluate on an empty set")
    n = classifier.n_classes
    if not np.issubdtype(gold.dtype, np.integer) or gold.min() < 0 or gold.max() >= n:
        raise InvalidLabel(f"gold labels must be integers in 0..{n - 1}")
    return accuracy_report(gold, classifier.predict(logits), predict_conventional(logits), n)
