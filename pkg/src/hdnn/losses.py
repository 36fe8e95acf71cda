"""Frame-level objectives: cross-entropy, soft-target KL, and their blend.

Every loss returns its batch-mean value together with the gradient with
respect to the pre-temperature logits, including the 1/temperature chain
factor, so the caller can hand the gradient straight to ``backward``.
No extra temperature-squared rescaling is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ParameterError, ShapeError

# Probabilities are floored here before log() so a zero posterior cannot
# produce inf; hits are counted for diagnostics.
LOG_FLOOR = 1e-300
_log_floor_hits = 0


def log_floor_hits() -> int:
    """Number of posterior entries clamped to the log floor so far."""
    return _log_floor_hits


def reset_log_floor_hits() -> None:
    global _log_floor_hits
    _log_floor_hits = 0


def _floored_log(p: np.ndarray) -> np.ndarray:
    global _log_floor_hits
    hits = int(np.count_nonzero(p < LOG_FLOOR))
    if hits:
        _log_floor_hits += hits
        p = np.maximum(p, LOG_FLOOR)
    return np.log(p)


@dataclass(frozen=True)
class TargetBatch:
    """Hard class labels or soft teacher posteriors for one minibatch."""
    kind: str                       # "hard" | "soft"
    labels: np.ndarray | None = None
    posteriors: np.ndarray | None = None

    @classmethod
    def hard(cls, labels) -> "TargetBatch":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ShapeError(f"hard targets must be a 1-D label vector, got {labels.shape}")
        if labels.size and labels.min() < 0:
            raise ParameterError("hard targets contain a negative class index")
        return cls(kind="hard", labels=labels)

    @classmethod
    def soft(cls, posteriors) -> "TargetBatch":
        post = np.ascontiguousarray(posteriors, dtype=np.float64)
        if post.ndim != 2:
            raise ShapeError(f"soft targets must be a 2-D matrix, got shape {post.shape}")
        if np.any(post < 0.0):
            raise ParameterError("soft targets contain a negative probability")
        row_sums = post.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            worst = float(np.abs(row_sums - 1.0).max())
            raise ParameterError(f"soft target rows must sum to 1 (off by {worst:.3g})")
        return cls(kind="soft", posteriors=post)


@dataclass(frozen=True)
class LossResult:
    value: float
    d_logits: np.ndarray


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Row softmax of logits / temperature, max-subtracted for stability."""
    if not temperature > 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {logits.shape}")
    return backend.softmax_rows(logits, float(temperature))


def _check_posteriors(y: np.ndarray) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ShapeError(f"posteriors must be 2-D, got shape {y.shape}")
    return y


def ce_loss(y, targets: TargetBatch, temperature: float = 1.0) -> LossResult:
    """Mean negative log-posterior of the correct class."""
    y = _check_posteriors(y)
    if targets.kind != "hard":
        raise ParameterError("ce_loss needs hard targets")
    labels = targets.labels
    batch, num_classes = y.shape
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.size and labels.max() >= num_classes:
        raise ParameterError("hard target index outside the class range")
    value = float(-_floored_log(y[np.arange(batch), labels]).mean())
    d = y.copy()
    d[np.arange(batch), labels] -= 1.0
    d /= batch * temperature
    return LossResult(value=value, d_logits=d)


def kl_loss(y, targets: TargetBatch, temperature: float = 1.0) -> LossResult:
    """Mean cross-entropy against soft teacher posteriors.

    Minimizing this is equivalent to minimizing the KL divergence from the
    teacher; teacher and student must use the same softmax temperature.
    """
    y = _check_posteriors(y)
    if targets.kind != "soft":
        raise ParameterError("kl_loss needs soft targets")
    soft = targets.posteriors
    if soft.shape != y.shape:
        raise ShapeError(f"soft targets {soft.shape} do not match posteriors {y.shape}")
    batch = y.shape[0]
    value = float(-(soft * _floored_log(y)).sum(axis=1).mean())
    d = (y - soft) / (batch * temperature)
    return LossResult(value=value, d_logits=d)


def hybrid_loss(y, soft_targets: TargetBatch, hard_targets: TargetBatch,
                hard_weight: float, temperature: float = 1.0) -> LossResult:
    """Soft-target loss plus ``hard_weight`` times the hard-label loss."""
    if hard_weight < 0.0:
        raise ParameterError(f"hard_weight must be non-negative, got {hard_weight}")
    kl = kl_loss(y, soft_targets, temperature)
    ce = ce_loss(y, hard_targets, temperature)
    return LossResult(value=kl.value + hard_weight * ce.value,
                      d_logits=kl.d_logits + hard_weight * ce.d_logits)
