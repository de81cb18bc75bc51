"""Calibrated decision boundaries for few-shot classifiers.

A Gaussian mixture is fitted to unlabeled log-probability outputs, mixture
components are matched to labels by maximum-weight bipartite matching, and
test examples are labeled by component likelihood instead of argmax.
"""

from .assignment import ClusterLabelAssignment, brute_force_assignment, cla_score, optimal_assignment
from .calibrator import (
    CalibratedClassifier,
    CalibrationConfig,
    Metrics,
    calibrate,
    evaluate,
    predict,
    predict_conventional,
)
from .gmm import EmConfig, GaussianComponent, MixtureEstimate, fit_em, gaussian_log_density
from .representation import to_log_prob, to_representation
from .selection import RestartBatch, run_restarts, select_estimate
from .synth import ScenarioSpec, bayes_optimal_accuracy, boundary_sweep, sample_scenario

__version__ = "0.1.0"
