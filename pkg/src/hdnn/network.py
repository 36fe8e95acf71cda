"""Model architecture, parameter groups, forward pass and exact backprop.

A highway net mixes each hidden layer's nonlinear output with the layer
input through two learned sigmoid gates; the gate weights are a single
pair shared by every hidden layer, with no bias.  Gating starts at layer 2
because the skip path needs matching dimensions.  Parameters fall into
three groups that can be updated selectively: the hidden-layer stack, the
shared gate pair, and the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ConfigError, ConsistencyError, NumericError, ParameterError, ShapeError

ARCH_PLAIN = "plain_dnn"
ARCH_HIGHWAY = "highway"


@dataclass(frozen=True)
class GateConfig:
    """Which gates a highway layer computes.

    ``constrained`` couples the carry gate to the complement of the
    transform gate (no carry weight matrix is allocated), which saves one
    matrix-vector product per layer.
    """
    transform: bool = True
    carry: bool = True
    constrained: bool = False

    def __post_init__(self):
        if not (self.transform or self.carry):
            raise ConfigError("at least one of the transform/carry gates must be enabled")
        if self.constrained and not (self.transform and self.carry):
            raise ConfigError("constrained gating couples carry to transform; both must be enabled")

    @property
    def has_carry_weights(self) -> bool:
        return self.carry and not self.constrained


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dim: int
    num_layers: int
    output_dim: int
    architecture: str = ARCH_HIGHWAY
    gate: GateConfig | None = None

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "num_layers", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.architecture == ARCH_PLAIN:
            if self.gate is not None:
                raise ConfigError("plain_dnn takes no gate config")
        elif self.architecture == ARCH_HIGHWAY:
            if self.gate is None:
                object.__setattr__(self, "gate", GateConfig())
        else:
            raise ConfigError(f"unknown architecture {self.architecture!r}")

    @property
    def is_highway(self) -> bool:
        return self.architecture == ARCH_HIGHWAY


@dataclass(frozen=True)
class ParamMask:
    """Selects which parameter groups a training step may update."""
    hidden: bool = True
    gates: bool = True
    output: bool = True

    def __post_init__(self):
        if not (self.hidden or self.gates or self.output):
            raise ConfigError("mask disables every parameter group")


GATES_ONLY = ParamMask(hidden=False, gates=True, output=False)


@dataclass
class Parameters:
    """The three parameter groups.

    ``hidden``: per-layer (weight, bias) pairs, layer 1 first.
    ``gates``: the shared (transform, carry) matrices for highway nets;
    a member is None when that gate has no weights, the whole field is
    None for plain nets.
    ``output``: (weight, bias) of the softmax layer.
    """
    hidden: list[tuple[np.ndarray, np.ndarray]]
    gates: tuple[np.ndarray | None, np.ndarray | None] | None
    output: tuple[np.ndarray, np.ndarray]

    def group_arrays(self, group: str) -> list[np.ndarray]:
        """Arrays of one group in fixed declaration order."""
        if group == "hidden":
            return [a for pair in self.hidden for a in pair]
        if group == "gates":
            return [] if self.gates is None else [g for g in self.gates if g is not None]
        if group == "output":
            return list(self.output)
        raise ParameterError(f"unknown parameter group {group!r}")

    def all_arrays(self) -> list[np.ndarray]:
        return (self.group_arrays("hidden") + self.group_arrays("gates")
                + self.group_arrays("output"))

    def copy(self) -> "Parameters":
        gates = None
        if self.gates is not None:
            gates = tuple(None if g is None else g.copy() for g in self.gates)
        return Parameters(
            hidden=[(w.copy(), b.copy()) for w, b in self.hidden],
            gates=gates,
            output=(self.output[0].copy(), self.output[1].copy()),
        )

    def zeros_like(self) -> "Parameters":
        gates = None
        if self.gates is not None:
            gates = tuple(None if g is None else np.zeros_like(g) for g in self.gates)
        return Parameters(
            hidden=[(np.zeros_like(w), np.zeros_like(b)) for w, b in self.hidden],
            gates=gates,
            output=(np.zeros_like(self.output[0]), np.zeros_like(self.output[1])),
        )


# Gradients share the Parameters layout; backward() returns one.
Gradients = Parameters


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, cached during forward.

    ``sigma`` holds the raw nonlinear outputs; ``hidden`` the post-gating
    activations (identical objects for plain nets).  Gate lists hold None
    for layer 1 and wherever a gate is disabled.
    """
    inputs: np.ndarray
    preacts: list[np.ndarray]
    sigma: list[np.ndarray]
    hidden: list[np.ndarray]
    t_gate: list[np.ndarray | None]
    c_gate: list[np.ndarray | None]
    logits: np.ndarray
    posteriors: np.ndarray
    temperature: float

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


def init_params(config: ModelConfig, seed: int) -> Parameters:
    """Seeded init: weights uniform on [-0.5, 0.5], biases exactly zero."""
    rng = np.random.default_rng(seed)
    hdim, layers = config.hidden_dim, config.num_layers

    def uniform(shape):
        return rng.uniform(-0.5, 0.5, size=shape)

    hidden = []
    prev = config.input_dim
    for _ in range(layers):
        hidden.append((uniform((hdim, prev)), np.zeros(hdim)))
        prev = hdim
    gates = None
    if config.is_highway:
        gate = config.gate
        w_t = uniform((hdim, hdim)) if gate.transform else None
        w_c = uniform((hdim, hdim)) if gate.has_carry_weights else None
        gates = (w_t, w_c)
    output = (uniform((config.output_dim, hdim)), np.zeros(config.output_dim))
    return Parameters(hidden=hidden, gates=gates, output=output)


def param_count(config: ModelConfig) -> int:
    """Exact scalar parameter count for a configuration."""
    hdim, layers = config.hidden_dim, config.num_layers
    total = config.input_dim * hdim + hdim              # layer 1
    total += (layers - 1) * (hdim * hdim + hdim)        # remaining hidden layers
    if config.is_highway:
        gate = config.gate
        total += hdim * hdim * (int(gate.transform) + int(gate.has_carry_weights))
    total += hdim * config.output_dim + config.output_dim
    return total


def _check_finite(arr: np.ndarray, layer: int, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what} at layer {layer}")


def _affine(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    out = backend.matmul_nt(x, weight)
    if bias is not None:
        out += bias
    return out


def forward(params: Parameters, config: ModelConfig, batch,
            temperature: float = 1.0, packed: bool = False) -> ForwardTrace:
    """Run the net on a (batch x input_dim) matrix of frames.

    ``packed`` computes each gated layer's three pre-activations with one
    stacked product instead of three separate ones; the result is
    identical (bit-identical on the numba backend).
    """
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ShapeError(
            f"forward: batch shape {x.shape} does not match input_dim {config.input_dim}")
    if not temperature > 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    _check_params_shape(params, config)

    gate = config.gate if config.is_highway else None
    w_t, w_c = params.gates if params.gates is not None else (None, None)

    preacts, sigma, hidden, t_gates, c_gates = [], [], [], [], []
    h_prev = x
    for layer in range(1, config.num_layers + 1):
        weight, bias = params.hidden[layer - 1]
        gated = gate is not None and layer >= 2
        if packed and gated:
            if not (gate.transform and gate.has_carry_weights):
                raise ConfigError("packed forward needs both gate weight matrices")
            stacked = backend.matmul_nt(h_prev, pack_weights(params, layer))
            hdim = config.hidden_dim
            a = stacked[:, :hdim] + bias
            t_val = backend.sigmoid(np.ascontiguousarray(stacked[:, hdim:2 * hdim]))
            c_val = backend.sigmoid(np.ascontiguousarray(stacked[:, 2 * hdim:]))
        else:
            a = _affine(h_prev, weight, bias)
            t_val = c_val = None
            if gated:
                if gate.transform:
                    t_val = backend.sigmoid(_affine(h_prev, w_t, None))
                if gate.has_carry_weights:
                    c_val = backend.sigmoid(_affine(h_prev, w_c, None))
        _check_finite(a, layer, "pre-activation")
        s = backend.sigmoid(a)
        if gated:
            if gate.constrained:
                c_val = 1.0 - t_val
            # disabled transform acts as 1, disabled carry as 0
            h = s * t_val if t_val is not None else s
            if c_val is not None:
                h = h + h_prev * c_val
        else:
            t_val = c_val = None
            h = s
        _check_finite(h, layer, "activation")
        preacts.append(a)
        sigma.append(s)
        hidden.append(h)
        t_gates.append(t_val)
        c_gates.append(c_val)
        h_prev = h

    logits = _affine(h_prev, params.output[0], params.output[1])
    _check_finite(logits, config.num_layers + 1, "logits")
    posteriors = backend.softmax_rows(logits, temperature)
    return ForwardTrace(inputs=x, preacts=preacts, sigma=sigma, hidden=hidden,
                        t_gate=t_gates, c_gate=c_gates, logits=logits,
                        posteriors=posteriors, temperature=temperature)


def pack_weights(params: Parameters, layer: int) -> np.ndarray:
    """Stack [layer weight; transform weight; carry weight] into one matrix.

    One product with the previous activations followed by a 3-way split
    reproduces the three separate pre-activations.
    """
    if params.gates is None:
        raise ConfigError("pack_weights: plain nets have no gate weights")
    w_t, w_c = params.gates
    if w_t is None or w_c is None:
        raise ConfigError("pack_weights: both gate weight matrices are required")
    num_layers = len(params.hidden)
    if not 2 <= layer <= num_layers:
        raise ConfigError(
            f"pack_weights: layer {layer} is not a gated layer (2..{num_layers})")
    return np.vstack([params.hidden[layer - 1][0], w_t, w_c])


def backward(params: Parameters, config: ModelConfig, trace: ForwardTrace,
             d_logits) -> Gradients:
    """Exact loss gradients for every parameter, given dLoss/dLogits.

    Tied-gate gradients accumulate over all gated layers.  The carry path
    contributes both the gate-scaled identity term and the gate-derivative
    term.
    """
    d_logits = np.ascontiguousarray(d_logits, dtype=np.float64)
    if d_logits.shape != trace.logits.shape:
        raise ConsistencyError(
            f"backward: d_logits shape {d_logits.shape} does not match logits "
            f"{trace.logits.shape}")
    if len(trace.preacts) != config.num_layers:
        raise ConsistencyError("backward: trace does not match config depth")
    _check_params_shape(params, config)
    if trace.inputs.shape[1] != config.input_dim:
        raise ConsistencyError("backward: trace does not match config input_dim")

    gate = config.gate if config.is_highway else None
    w_t, w_c = params.gates if params.gates is not None else (None, None)
    grads = params.zeros_like()
    g_w_t, g_w_c = (grads.gates if grads.gates is not None else (None, None))

    h_last = trace.hidden[-1]
    grads.output[0][...] = backend.matmul_tn(d_logits, h_last)
    grads.output[1][...] = d_logits.sum(axis=0)
    g_h = backend.matmul(d_logits, params.output[0])

    for layer in range(config.num_layers, 0, -1):
        h_prev = trace.hidden[layer - 2] if layer >= 2 else trace.inputs
        s = trace.sigma[layer - 1]
        t_val = trace.t_gate[layer - 1]
        c_val = trace.c_gate[layer - 1]
        gated = gate is not None and layer >= 2

        if gated:
            g_s = g_h * t_val if t_val is not None else g_h
        else:
            g_s = g_h
        g_a = g_s * s * (1.0 - s)

        w_layer = params.hidden[layer - 1][0]
        grads.hidden[layer - 1][0][...] = backend.matmul_tn(g_a, h_prev)
        grads.hidden[layer - 1][1][...] = g_a.sum(axis=0)
        g_prev = backend.matmul(g_a, w_layer)

        if gated:
            if c_val is not None:
                g_prev = g_prev + g_h * c_val  # identity carry path
            if gate.constrained:
                g_t = g_h * (s - h_prev)
            elif gate.transform:
                g_t = g_h * s
            else:
                g_t = None
            if g_t is not None:
                g_u = g_t * t_val * (1.0 - t_val)
                g_w_t += backend.matmul_tn(g_u, h_prev)
                g_prev = g_prev + backend.matmul(g_u, w_t)
            if gate.has_carry_weights:
                g_c = g_h * h_prev
                g_v = g_c * c_val * (1.0 - c_val)
                g_w_c += backend.matmul_tn(g_v, h_prev)
                g_prev = g_prev + backend.matmul(g_v, w_c)
        g_h = g_prev

    return grads


def _check_params_shape(params: Parameters, config: ModelConfig) -> None:
    hdim = config.hidden_dim
    if len(params.hidden) != config.num_layers:
        raise ConsistencyError(
            f"parameters have {len(params.hidden)} hidden layers, config says "
            f"{config.num_layers}")
    prev = config.input_dim
    for i, (w, b) in enumerate(params.hidden, start=1):
        if w.shape != (hdim, prev) or b.shape != (hdim,):
            raise ConsistencyError(f"layer {i} weight/bias shapes do not match config")
        prev = hdim
    if config.is_highway:
        if params.gates is None:
            raise ConsistencyError("highway config but parameters carry no gates")
        gate = config.gate
        w_t, w_c = params.gates
        if gate.transform != (w_t is not None) or gate.has_carry_weights != (w_c is not None):
            raise ConsistencyError("gate weight presence does not match gate config")
        for g in (w_t, w_c):
            if g is not None and g.shape != (hdim, hdim):
                raise ConsistencyError("gate weight shape does not match hidden_dim")
    elif params.gates is not None:
        raise ConsistencyError("plain config but parameters carry gates")
    w, b = params.output
    if w.shape != (config.output_dim, hdim) or b.shape != (config.output_dim,):
        raise ConsistencyError("output layer shapes do not match config")
