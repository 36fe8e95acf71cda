"""Synthetic data, model serialization, run manifests.

The synthetic task is class-conditional Gaussian frames with a shared
isotropic covariance; class means are a pure function of the seed, while
samples draw from a per-split stream so several splits can share one
class geometry.  An optional offset vector shifts a split to emulate a
domain/speaker mismatch for adaptation experiments.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, FormatError, ParameterError
from .lattice import Lattice, ReferencePath
from .network import (ARCH_HIGHWAY, ARCH_PLAIN, GateConfig, ModelConfig, Parameters,
                      param_count)
from .training import Utterance

MODEL_MAGIC = b"HDN1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int
    feature_dim: int
    frames_per_class: int
    mean_scale: float = 2.0
    noise_scale: float = 1.0
    shift: np.ndarray | None = None
    split: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "feature_dim", "frames_per_class"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.shift is not None:
            shift = np.asarray(self.shift, dtype=np.float64)
            if shift.shape != (self.feature_dim,):
                raise ParameterError(
                    f"shift must be a length-{self.feature_dim} vector")
            object.__setattr__(self, "shift", shift)


def class_means(spec: DatasetSpec) -> np.ndarray:
    """Class means; depend only on (seed, num_classes, feature_dim, mean_scale)."""
    rng = np.random.default_rng([spec.seed, 0])
    return rng.normal(0.0, spec.mean_scale, size=(spec.num_classes, spec.feature_dim))


def generate_synthetic(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (features, labels) with equal frames per class."""
    means = class_means(spec)
    rng = np.random.default_rng([spec.seed, 1 + spec.split])
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64),
                       spec.frames_per_class)
    rng.shuffle(labels)
    features = means[labels] + rng.normal(
        0.0, spec.noise_scale, size=(labels.shape[0], spec.feature_dim))
    if spec.shift is not None:
        features = features + spec.shift
    return features, labels


def shift_vector(spec: DatasetSpec, magnitude: float) -> np.ndarray:
    """Seeded unit direction scaled to ``magnitude``; use as DatasetSpec.shift."""
    rng = np.random.default_rng([spec.seed, 0xD1F7])
    direction = rng.normal(size=spec.feature_dim)
    return direction * (magnitude / np.linalg.norm(direction))


def generate_utterances(spec: DatasetSpec, num_utterances: int, num_frames: int,
                        max_confusions: int = 3, lm_scale: float = 0.5) -> list[Utterance]:
    """Toy sequence-training data: confusion "sausage" lattices.

    Each frame's reference state gets a confusion set of at most
    ``max_confusions`` states (the reference always included); the lattice
    has one node per frame boundary and one arc per confusable state, so
    every combination of per-frame choices is a hypothesis path.
    """
    if max_confusions < 1 or max_confusions > spec.num_classes:
        raise ParameterError("max_confusions must be in 1..num_classes")
    means = class_means(spec)
    rng = np.random.default_rng([spec.seed, 2 + spec.split])
    utterances = []
    for _ in range(num_utterances):
        ref = rng.integers(0, spec.num_classes, size=num_frames)
        features = means[ref] + rng.normal(
            0.0, spec.noise_scale, size=(num_frames, spec.feature_dim))
        if spec.shift is not None:
            features = features + spec.shift
        arcs = []
        for t in range(num_frames):
            width = int(rng.integers(1, max_confusions + 1))
            others = [s for s in range(spec.num_classes) if s != ref[t]]
            rng.shuffle(others)
            states = [int(ref[t])] + others[:width - 1]
            for s in states:
                arcs.append((t, t + 1, s, float(rng.normal(0.0, lm_scale))))
        utterances.append(Utterance(features=features,
                                    lattice=Lattice(num_frames, arcs),
                                    reference=ReferencePath(ref)))
    return utterances


def random_lattice(rng: np.random.Generator, num_frames: int, num_states: int,
                   max_nodes_per_frame: int = 3, max_arcs_per_node: int = 3,
                   lm_scale: float = 1.0) -> tuple[Lattice, ReferencePath]:
    """Random structured lattice for verification: several nodes per frame
    boundary, random fan-out, random states and lm scores."""
    nodes_at = [1] + [int(rng.integers(1, max_nodes_per_frame + 1))
                      for _ in range(num_frames - 1)] + [1]
    node_ids = []
    next_id = 0
    for count in nodes_at:
        node_ids.append(list(range(next_id, next_id + count)))
        next_id += count
    arcs = []
    for t in range(num_frames):
        for src in node_ids[t]:
            fan = int(rng.integers(1, max_arcs_per_node + 1))
            for _ in range(fan):
                dst = int(rng.choice(node_ids[t + 1]))
                state = int(rng.integers(0, num_states))
                arcs.append((src, dst, state, float(rng.normal(0.0, lm_scale))))
        # make sure every next-frame node is enterable
        covered = {a[1] for a in arcs if a[0] in node_ids[t]}
        for dst in node_ids[t + 1]:
            if dst not in covered:
                src = int(rng.choice(node_ids[t]))
                arcs.append((src, dst, int(rng.integers(0, num_states)),
                             float(rng.normal(0.0, lm_scale))))
    reference = ReferencePath(rng.integers(0, num_states, size=num_frames))
    return Lattice(num_frames, arcs), reference


def save_utterances(directory, utterances) -> None:
    """Write a sequence dataset: utt_NNNN.npz features + utt_NNNN.lat lattice."""
    from .lattice import write_lattice
    os.makedirs(directory, exist_ok=True)
    for i, utt in enumerate(utterances):
        stem = os.path.join(directory, f"utt_{i:04d}")
        with open(stem + ".npz", "wb") as fh:
            np.savez(fh, features=utt.features)
        write_lattice(stem + ".lat", utt.lattice, utt.reference)


def load_utterances(directory) -> list:
    from .lattice import read_lattice
    stems = sorted(name[:-4] for name in os.listdir(directory)
                   if name.startswith("utt_") and name.endswith(".lat"))
    if not stems:
        raise FormatError(f"{directory}: no utt_*.lat files found")
    utterances = []
    for stem in stems:
        base = os.path.join(directory, stem)
        lattice, reference = read_lattice(base + ".lat")
        try:
            with np.load(base + ".npz") as data:
                features = data["features"]
        except (OSError, KeyError) as exc:
            raise FormatError(f"{base}.npz: unreadable features: {exc}") from exc
        utterances.append(Utterance(features=features, lattice=lattice,
                                    reference=reference))
    return utterances


# ---------------------------------------------------------------------------
# model file: magic "HDN1", then little-endian u32 fields (version,
# input_dim, hidden_dim, num_layers, output_dim, arch code, transform flag,
# carry flag, constrained flag, parameter count), then every parameter
# array as little-endian float64 in declaration order.
# ---------------------------------------------------------------------------

_HEADER_FMT = "<4s10I"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_ARCH_CODES = {ARCH_PLAIN: 0, ARCH_HIGHWAY: 1}
_ARCH_NAMES = {code: name for name, code in _ARCH_CODES.items()}


def _atomic_write(path, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(params: Parameters, config: ModelConfig, path) -> None:
    gate = config.gate
    transform = int(bool(gate and gate.transform))
    carry = int(bool(gate and gate.carry))
    constrained = int(bool(gate and gate.constrained))
    header = struct.pack(
        _HEADER_FMT, MODEL_MAGIC, MODEL_VERSION, config.input_dim, config.hidden_dim,
        config.num_layers, config.output_dim, _ARCH_CODES[config.architecture],
        transform, carry, constrained, param_count(config))
    chunks = [header]
    for arr in params.all_arrays():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    _atomic_write(path, b"".join(chunks))


def load_model(path) -> tuple[Parameters, ModelConfig]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_SIZE:
        raise FormatError(f"{path}: truncated header at byte {len(blob)} "
                          f"(need {_HEADER_SIZE})")
    header = struct.unpack(_HEADER_FMT, blob[:_HEADER_SIZE])
    magic = header[0]
    (version, input_dim, hidden_dim, num_layers, output_dim, arch_code,
     transform, carry, constrained, declared_count) = header[1:]
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    if arch_code not in _ARCH_NAMES:
        raise FormatError(f"{path}: unknown architecture code {arch_code} at byte 24")
    try:
        if arch_code == _ARCH_CODES[ARCH_PLAIN]:
            config = ModelConfig(input_dim, hidden_dim, num_layers, output_dim,
                                 architecture=ARCH_PLAIN)
        else:
            gate = GateConfig(transform=bool(transform), carry=bool(carry),
                              constrained=bool(constrained))
            config = ModelConfig(input_dim, hidden_dim, num_layers, output_dim,
                                 architecture=ARCH_HIGHWAY, gate=gate)
    except ConfigError as exc:
        raise FormatError(f"{path}: invalid configuration in header: {exc}") from exc
    expected_count = param_count(config)
    if declared_count != expected_count:
        raise FormatError(
            f"{path}: header parameter count {declared_count} at byte 40 does "
            f"not match configuration ({expected_count})")

    params = _empty_params(config)
    offset = _HEADER_SIZE
    for arr in params.all_arrays():
        nbytes = arr.size * 8
        if offset + nbytes > len(blob):
            raise FormatError(
                f"{path}: truncated at byte {len(blob)}; parameter data needs "
                f"{offset + nbytes} bytes")
        flat = np.frombuffer(blob, dtype="<f8", count=arr.size, offset=offset)
        arr[...] = flat.reshape(arr.shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes at byte {offset}")
    return params, config


def _empty_params(config: ModelConfig) -> Parameters:
    hdim = config.hidden_dim
    hidden = []
    prev = config.input_dim
    for _ in range(config.num_layers):
        hidden.append((np.empty((hdim, prev)), np.empty(hdim)))
        prev = hdim
    gates = None
    if config.is_highway:
        gate = config.gate
        gates = (np.empty((hdim, hdim)) if gate.transform else None,
                 np.empty((hdim, hdim)) if gate.has_carry_weights else None)
    output = (np.empty((config.output_dim, hdim)), np.empty(config.output_dim))
    return Parameters(hidden=hidden, gates=gates, output=output)


# ---------------------------------------------------------------------------
# dataset files (.npz) and run manifests (.json)
# ---------------------------------------------------------------------------

def save_dataset(path, features: np.ndarray, labels: np.ndarray, meta: dict | None = None):
    meta_json = json.dumps(meta or {}, sort_keys=True)
    with open(path, "wb") as fh:
        np.savez(fh, features=features, labels=labels,
                 meta=np.frombuffer(meta_json.encode(), dtype=np.uint8))


def load_dataset(path) -> tuple[np.ndarray, np.ndarray, dict]:
    try:
        with np.load(path) as data:
            features = data["features"]
            labels = data["labels"]
            meta = json.loads(bytes(data["meta"]).decode()) if "meta" in data else {}
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a readable dataset file: {exc}") from exc
    return features, labels, meta


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    started_at: str
    finished_at: str
    metrics_files: list[str] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)


def write_manifest(path, manifest: RunManifest) -> None:
    payload = json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n"
    _atomic_write(path, payload.encode())


def read_manifest(path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return RunManifest(**raw)
