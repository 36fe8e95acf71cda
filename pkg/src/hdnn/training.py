"""SGD training loops, group-masked updates, adaptation, and evaluation.

The optimizer is classical momentum SGD (velocity accumulation) with the
momentum schedule fixed at 0 for the first epoch and 0.9 afterwards.
Loss gradients are means over the minibatch, so the learning rate has
per-sample semantics and transfers across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConfigError, ConsistencyError, ParameterError
from .lattice import Lattice, ReferencePath, regularized_sequence_loss, smbr_forward_backward
from .losses import LossResult, TargetBatch, ce_loss, hybrid_loss, kl_loss
from .network import ModelConfig, Parameters, ParamMask, GATES_ONLY, backward, forward

OBJECTIVES = ("ce", "kd", "hybrid", "smbr_ce", "smbr_kl")
FRAME_OBJECTIVES = ("ce", "kd", "hybrid")
SEQUENCE_OBJECTIVES = ("smbr_ce", "smbr_kl")
TEACHER_OBJECTIVES = ("kd", "hybrid", "smbr_kl")

CSV_HEADER = "epoch,objective,loss,fer,expected_accuracy"


@dataclass
class FrameDataset:
    """Frames with optional hard labels (None for unlabeled adaptation data)."""
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.features.shape[0]:
                raise ConsistencyError("label count does not match frame count")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class Utterance:
    """One sequence-training unit: frames plus its lattice and reference."""
    features: np.ndarray
    lattice: Lattice
    reference: ReferencePath

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.shape[0] != self.lattice.num_frames:
            raise ConsistencyError("utterance frames do not match lattice frames")


@dataclass(frozen=True)
class TrainConfig:
    objective: str
    learning_rate: float
    epochs: int
    batch_size: int = 32
    hard_weight: float = 0.0        # hybrid objective only
    smoothing: float = 0.0          # smbr_* objectives only
    temperature: float = 1.0
    acoustic_scale: float = 1.0
    mask: ParamMask = field(default_factory=ParamMask)
    seed: int = 0
    momentum_first_epoch: float = 0.0
    momentum_later: float = 0.9

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}; one of {OBJECTIVES}")
        for name in ("learning_rate", "temperature"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("hard_weight", "smoothing", "acoustic_scale"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")


@dataclass(frozen=True)
class AdaptConfig:
    learning_rate: float = 2e-4
    epochs: int = 5
    label_source: str = "hard_pseudo"   # hard_pseudo | soft_teacher | oracle_hard
    mask: ParamMask = GATES_ONLY
    batch_size: int = 1
    momentum_first_epoch: float = 0.0
    momentum_later: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.label_source not in ("hard_pseudo", "soft_teacher", "oracle_hard"):
            raise ConfigError(f"unknown label source {self.label_source!r}")
        if not self.learning_rate > 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive integers")


@dataclass
class MomentumState:
    """Velocity arrays mirroring the Parameters layout."""
    velocity: Parameters

    @classmethod
    def zeros(cls, params: Parameters) -> "MomentumState":
        return cls(velocity=params.zeros_like())


@dataclass
class EpochMetrics:
    epoch: int
    objective: str
    loss: float
    fer: float | None = None            # None when the data is unlabeled
    expected_accuracy: float | None = None

    def csv_row(self) -> str:
        fer = "" if self.fer is None else repr(self.fer)
        acc = "" if self.expected_accuracy is None else repr(self.expected_accuracy)
        return f"{self.epoch},{self.objective},{self.loss!r},{fer},{acc}"


@dataclass
class TrainResult:
    params: Parameters
    metrics: list[EpochMetrics]


@dataclass
class AdaptResult:
    params: Parameters
    loss_trajectory: list[float]


def sgd_step(params: Parameters, grads: Parameters, state: MomentumState,
             learning_rate: float, momentum: float, mask: ParamMask):
    """One masked momentum step, in place.

    Unmasked groups: velocity <- momentum * velocity - lr * grad, then
    params += velocity.  Masked groups are left bitwise untouched,
    velocities included.
    """
    updates = (("hidden", mask.hidden), ("gates", mask.gates), ("output", mask.output))
    for group, enabled in updates:
        p_arrays = params.group_arrays(group)
        g_arrays = grads.group_arrays(group)
        v_arrays = state.velocity.group_arrays(group)
        if not len(p_arrays) == len(g_arrays) == len(v_arrays):
            raise ConsistencyError(f"group {group!r} layouts differ between "
                                   "params, grads, and momentum state")
        if not enabled:
            continue
        for p, g, v in zip(p_arrays, g_arrays, v_arrays):
            if p.shape != g.shape or p.shape != v.shape:
                raise ConsistencyError(f"array shapes differ in group {group!r}")
            v *= momentum
            v -= learning_rate * g
            p += v
    return params, state


def _epoch_momentum(tcfg: TrainConfig, epoch: int) -> float:
    return tcfg.momentum_first_epoch if epoch == 1 else tcfg.momentum_later


def _frame_loss(objective: str, posteriors, labels, teacher_posteriors,
                hard_weight: float, temperature: float) -> LossResult:
    if objective == "ce":
        return ce_loss(posteriors, TargetBatch.hard(labels), temperature)
    if objective == "kd":
        return kl_loss(posteriors, TargetBatch.soft(teacher_posteriors), temperature)
    if objective == "hybrid":
        return hybrid_loss(posteriors, TargetBatch.soft(teacher_posteriors),
                           TargetBatch.hard(labels), hard_weight, temperature)
    raise ConfigError(f"not a frame objective: {objective!r}")


class _MetricsWriter:
    """Appends CSV rows to an optional stream, emitting the header once."""

    def __init__(self, stream):
        self.stream = stream
        self.header_done = False

    def write(self, metrics: EpochMetrics):
        if self.stream is None:
            return
        if not self.header_done:
            self.stream.write(CSV_HEADER + "\n")
            self.header_done = True
        self.stream.write(metrics.csv_row() + "\n")
        self.stream.flush()


def train(params: Parameters, config: ModelConfig, data, tcfg: TrainConfig,
          teacher: tuple[Parameters, ModelConfig] | None = None,
          metrics_stream=None) -> TrainResult:
    """Minibatch SGD under the chosen objective; returns a trained copy.

    ``data`` is a FrameDataset for frame objectives or a list of
    Utterances for sequence objectives.  ``teacher`` is a (params, config)
    pair, required exactly for the soft-target objectives.  Deterministic
    for a fixed seed and backend.
    """
    needs_teacher = tcfg.objective in TEACHER_OBJECTIVES
    if needs_teacher and teacher is None:
        raise ConfigError(f"objective {tcfg.objective!r} needs a teacher model")
    if not needs_teacher and teacher is not None:
        raise ConfigError(f"objective {tcfg.objective!r} does not take a teacher")
    if tcfg.objective in SEQUENCE_OBJECTIVES:
        if not (isinstance(data, (list, tuple)) and data
                and all(isinstance(u, Utterance) for u in data)):
            raise ConfigError("sequence objectives need a non-empty list of Utterances")
        return _train_sequence(params, config, list(data), tcfg, teacher, metrics_stream)
    if not isinstance(data, FrameDataset) or data.labels is None and tcfg.objective != "kd":
        raise ConfigError("frame objectives need a FrameDataset (labeled unless pure kd)")
    return _train_frames(params, config, data, tcfg, teacher, metrics_stream)


def _train_frames(params, config, data: FrameDataset, tcfg, teacher,
                  metrics_stream) -> TrainResult:
    params = params.copy()
    state = MomentumState.zeros(params)
    rng = np.random.default_rng(tcfg.seed)
    writer = _MetricsWriter(metrics_stream)
    num_frames = len(data)
    if num_frames == 0:
        raise ParameterError("empty training data")
    all_metrics = []
    for epoch in range(1, tcfg.epochs + 1):
        momentum = _epoch_momentum(tcfg, epoch)
        order = rng.permutation(num_frames)
        total_loss = 0.0
        errors = 0
        for start in range(0, num_frames, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            feats = np.ascontiguousarray(data.features[idx])
            labels = data.labels[idx] if data.labels is not None else None
            trace = forward(params, config, feats, tcfg.temperature)
            teacher_post = None
            if teacher is not None:
                teacher_post = forward(teacher[0], teacher[1], feats,
                                       tcfg.temperature).posteriors
            loss = _frame_loss(tcfg.objective, trace.posteriors, labels,
                               teacher_post, tcfg.hard_weight, tcfg.temperature)
            grads = backward(params, config, trace, loss.d_logits)
            sgd_step(params, grads, state, tcfg.learning_rate, momentum, tcfg.mask)
            total_loss += loss.value * idx.shape[0]
            if labels is not None:
                errors += int((trace.posteriors.argmax(axis=1) != labels).sum())
        fer = errors / num_frames if data.labels is not None else None
        metrics = EpochMetrics(epoch=epoch, objective=tcfg.objective,
                               loss=total_loss / num_frames, fer=fer)
        writer.write(metrics)
        all_metrics.append(metrics)
    return TrainResult(params=params, metrics=all_metrics)


def _train_sequence(params, config, utterances, tcfg, teacher,
                    metrics_stream) -> TrainResult:
    params = params.copy()
    state = MomentumState.zeros(params)
    rng = np.random.default_rng(tcfg.seed)
    writer = _MetricsWriter(metrics_stream)
    mode = "ce_smoothed" if tcfg.objective == "smbr_ce" else "kl_smoothed"
    all_metrics = []
    for epoch in range(1, tcfg.epochs + 1):
        momentum = _epoch_momentum(tcfg, epoch)
        order = rng.permutation(len(utterances))
        total_loss = 0.0
        total_acc = 0.0
        total_frames = 0
        errors = 0
        for u in order:
            utt = utterances[u]
            trace = forward(params, config, utt.features, tcfg.temperature)
            log_post = backend.log_softmax_rows(trace.logits, tcfg.temperature)
            smbr = smbr_forward_backward(utt.lattice, utt.reference, log_post,
                                         tcfg.acoustic_scale)
            if mode == "ce_smoothed":
                frame = ce_loss(trace.posteriors, TargetBatch.hard(utt.reference.states),
                                tcfg.temperature)
            else:
                teacher_post = forward(teacher[0], teacher[1], utt.features,
                                       tcfg.temperature).posteriors
                frame = kl_loss(trace.posteriors, TargetBatch.soft(teacher_post),
                                tcfg.temperature)
            value, d_logits = regularized_sequence_loss(
                smbr, frame, trace.posteriors, tcfg.smoothing, mode, tcfg.temperature)
            grads = backward(params, config, trace, d_logits)
            sgd_step(params, grads, state, tcfg.learning_rate, momentum, tcfg.mask)
            total_loss += value
            total_acc += smbr.expected_accuracy
            total_frames += utt.lattice.num_frames
            errors += int((trace.posteriors.argmax(axis=1) != utt.reference.states).sum())
        metrics = EpochMetrics(epoch=epoch, objective=tcfg.objective,
                               loss=total_loss / len(utterances),
                               fer=errors / total_frames,
                               expected_accuracy=total_acc / total_frames)
        writer.write(metrics)
        all_metrics.append(metrics)
    return TrainResult(params=params, metrics=all_metrics)


def expected_accuracy_per_frame(params: Parameters, config: ModelConfig,
                                utterances, acoustic_scale: float = 1.0,
                                temperature: float = 1.0) -> float:
    """Mean per-frame expected accuracy of the model over the utterances."""
    total_acc = 0.0
    total_frames = 0
    for utt in utterances:
        trace = forward(params, config, utt.features, temperature)
        log_post = backend.log_softmax_rows(trace.logits, temperature)
        smbr = smbr_forward_backward(utt.lattice, utt.reference, log_post, acoustic_scale)
        total_acc += smbr.expected_accuracy
        total_frames += utt.lattice.num_frames
    return total_acc / total_frames


def evaluate(params: Parameters, config: ModelConfig, data: FrameDataset,
             chunk: int = 4096) -> tuple[float, float]:
    """(frame error rate, mean cross-entropy) on labeled frames."""
    if not isinstance(data, FrameDataset) or data.labels is None:
        raise ParameterError("evaluate needs a labeled FrameDataset")
    num_frames = len(data)
    if num_frames == 0:
        raise ParameterError("evaluate called on empty data")
    errors = 0
    total_ce = 0.0
    for start in range(0, num_frames, chunk):
        feats = np.ascontiguousarray(data.features[start:start + chunk])
        labels = data.labels[start:start + chunk]
        trace = forward(params, config, feats)
        errors += int((trace.posteriors.argmax(axis=1) != labels).sum())
        total_ce += ce_loss(trace.posteriors, TargetBatch.hard(labels)).value * len(labels)
    return errors / num_frames, total_ce / num_frames


def adapt(params: Parameters, config: ModelConfig, data: FrameDataset,
          acfg: AdaptConfig,
          teacher: tuple[Parameters, ModelConfig] | None = None) -> AdaptResult:
    """Two-pass adaptation: fix labels with the current model (or teacher /
    oracle), then fine-tune the masked groups for a few epochs.

    Gate-only masks require a highway architecture.  Uses the same
    momentum schedule as training (0 on the first epoch, 0.9 after).
    Returns an adapted copy plus the per-epoch loss trajectory on the
    adaptation data.
    """
    if acfg.mask.gates and not (acfg.mask.hidden or acfg.mask.output):
        if not config.is_highway:
            raise ConfigError("gates-only adaptation needs a highway architecture")
    if len(data) == 0:
        raise ParameterError("empty adaptation data")

    feats_all = data.features
    if acfg.label_source == "hard_pseudo":
        labels = _decode_labels(params, config, feats_all)
        targets_soft = None
    elif acfg.label_source == "oracle_hard":
        if data.labels is None:
            raise ConfigError("oracle_hard adaptation needs labeled data")
        labels = data.labels
        targets_soft = None
    else:  # soft_teacher
        if teacher is None:
            raise ConfigError("soft_teacher adaptation needs a teacher model")
        labels = None
        targets_soft = _teacher_posteriors(teacher, feats_all)

    params = params.copy()
    state = MomentumState.zeros(params)
    rng = np.random.default_rng(acfg.seed)
    num_frames = len(data)
    trajectory = []
    for epoch in range(1, acfg.epochs + 1):
        momentum = (acfg.momentum_first_epoch if epoch == 1 else acfg.momentum_later)
        order = rng.permutation(num_frames)
        total_loss = 0.0
        for start in range(0, num_frames, acfg.batch_size):
            idx = order[start:start + acfg.batch_size]
            feats = np.ascontiguousarray(feats_all[idx])
            trace = forward(params, config, feats)
            if labels is not None:
                loss = ce_loss(trace.posteriors, TargetBatch.hard(labels[idx]))
            else:
                loss = kl_loss(trace.posteriors, TargetBatch.soft(targets_soft[idx]))
            grads = backward(params, config, trace, loss.d_logits)
            sgd_step(params, grads, state, acfg.learning_rate, momentum, acfg.mask)
            total_loss += loss.value * idx.shape[0]
        trajectory.append(total_loss / num_frames)
    return AdaptResult(params=params, loss_trajectory=trajectory)


def _decode_labels(params, config, features, chunk: int = 4096) -> np.ndarray:
    out = np.empty(features.shape[0], dtype=np.int64)
    for start in range(0, features.shape[0], chunk):
        feats = np.ascontiguousarray(features[start:start + chunk])
        out[start:start + chunk] = forward(params, config, feats).posteriors.argmax(axis=1)
    return out


def _teacher_posteriors(teacher, features, chunk: int = 4096) -> np.ndarray:
    t_params, t_config = teacher
    parts = []
    for start in range(0, features.shape[0], chunk):
        feats = np.ascontiguousarray(features[start:start + chunk])
        parts.append(forward(t_params, t_config, feats).posteriors)
    return np.vstack(parts)
