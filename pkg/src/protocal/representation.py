"""Mapping raw label logits onto the vectors the mixture is fit on.

Three representations are supported: ``log-prob`` (log-softmax, the
default), ``prob`` (softmax) and ``logits`` (identity).  All functions accept
a single vector of shape ``(N,)`` or a batch of shape ``(n, N)`` and operate
along the last axis.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfig, InvalidInput, InvalidShape

LOG_PROB = "log-prob"
PROB = "prob"
LOGITS = "logits"
MODES = (LOG_PROB, PROB, LOGITS)
DEFAULT_MODE = LOG_PROB


def as_logits(logits) -> np.ndarray:
    """Validate logits and return them as a float64 array."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise InvalidShape(f"expected a vector or a batch of vectors, got shape {arr.shape}")
    if arr.shape[-1] < 2:
        raise InvalidShape(f"need at least 2 classes, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("logits must be finite")
    return arr


def to_log_prob(logits) -> np.ndarray:
    """Log-softmax over the last axis.

    The maximum logit is subtracted before exponentiating, so adding the same
    constant to every logit leaves the result unchanged and logits as large as
    1e8 in magnitude do not overflow.
    """
    o = as_logits(logits)
    shifted = o - o.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def to_representation(logits, mode: str = DEFAULT_MODE) -> np.ndarray:
    if mode == LOG_PROB:
        return to_log_prob(logits)
    if mode == PROB:
        return np.exp(to_log_prob(logits))
    if mode == LOGITS:
        return as_logits(logits).copy()
    raise InvalidConfig(f"unknown representation mode {mode!r}; expected one of {MODES}")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise InvalidConfig(f"unknown representation mode {mode!r}; expected one of {MODES}")
    return mode
