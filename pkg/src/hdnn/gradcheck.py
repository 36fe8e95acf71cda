"""Finite-difference verification of every objective's parameter gradients.

The numeric side only ever calls the forward pass and the loss values, so
it is independent of the analytic backward path it checks.  Used by the
``gradcheck`` CLI subcommand and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .harness import random_lattice
from .lattice import regularized_sequence_loss, smbr_forward_backward
from .losses import TargetBatch, ce_loss, hybrid_loss, kl_loss
from .network import (ARCH_HIGHWAY, GateConfig, ModelConfig, backward, forward,
                      init_params)

DEFAULT_STEP = 1e-5
FRAME_TOLERANCE = 1e-6
SEQUENCE_TOLERANCE = 1e-5
# entries smaller than this are compared on the absolute scale
RELATIVE_FLOOR = 1e-3


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def numeric_param_grads(loss_fn, params, step: float = DEFAULT_STEP):
    """Central finite differences of ``loss_fn(params)`` over every entry."""
    grads = params.zeros_like()
    for p_arr, g_arr in zip(params.all_arrays(), grads.all_arrays()):
        flat_p = p_arr.ravel()
        flat_g = g_arr.ravel()
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + step
            up = loss_fn(params)
            flat_p[i] = keep - step
            down = loss_fn(params)
            flat_p[i] = keep
            flat_g[i] = (up - down) / (2.0 * step)
    return grads


def max_relative_error(analytic, numeric) -> float:
    """Worst per-entry relative error, floored so near-zero entries are
    judged on an absolute scale."""
    worst = 0.0
    for a_arr, n_arr in zip(analytic.all_arrays(), numeric.all_arrays()):
        denom = np.maximum(np.maximum(np.abs(a_arr), np.abs(n_arr)), RELATIVE_FLOOR)
        err = np.abs(a_arr - n_arr) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def _gate_variant(index: int) -> GateConfig:
    variants = (
        GateConfig(transform=True, carry=True),
        GateConfig(transform=True, carry=False),
        GateConfig(transform=False, carry=True),
        GateConfig(transform=True, carry=True, constrained=True),
    )
    return variants[index % len(variants)]


def _random_net(rng: np.random.Generator, variant: int):
    config = ModelConfig(
        input_dim=int(rng.integers(3, 7)),
        hidden_dim=int(rng.integers(4, 9)),
        num_layers=int(rng.integers(3, 6)),
        output_dim=int(rng.integers(3, 7)),
        architecture=ARCH_HIGHWAY,
        gate=_gate_variant(variant),
    )
    params = init_params(config, seed=int(rng.integers(0, 2**31)))
    return config, params


def check_frame_objective(name: str, rng: np.random.Generator, variant: int,
                          objective: str, temperature: float = 1.0,
                          hard_weight: float = 0.0) -> CheckResult:
    config, params = _random_net(rng, variant)
    batch = int(rng.integers(1, 5))
    feats = rng.normal(size=(batch, config.input_dim))
    labels = rng.integers(0, config.output_dim, size=batch)
    soft = rng.dirichlet(np.ones(config.output_dim), size=batch)

    def compute(p, want_grads: bool):
        trace = forward(p, config, feats, temperature)
        if objective == "ce":
            loss = ce_loss(trace.posteriors, TargetBatch.hard(labels), temperature)
        elif objective == "kl":
            loss = kl_loss(trace.posteriors, TargetBatch.soft(soft), temperature)
        else:
            loss = hybrid_loss(trace.posteriors, TargetBatch.soft(soft),
                               TargetBatch.hard(labels), hard_weight, temperature)
        if want_grads:
            return backward(p, config, trace, loss.d_logits)
        return loss.value

    analytic = compute(params, want_grads=True)
    numeric = numeric_param_grads(lambda p: compute(p, want_grads=False), params)
    return CheckResult(name, max_relative_error(analytic, numeric), FRAME_TOLERANCE)


def check_sequence_objective(name: str, rng: np.random.Generator, variant: int,
                             mode: str, smoothing: float,
                             acoustic_scale: float = 1.0,
                             temperature: float = 1.0) -> CheckResult:
    config, params = _random_net(rng, variant)
    num_frames = int(rng.integers(2, 5))
    feats = rng.normal(size=(num_frames, config.input_dim))
    lattice, reference = random_lattice(rng, num_frames, config.output_dim)
    soft = rng.dirichlet(np.ones(config.output_dim), size=num_frames)

    def compute(p, want_grads: bool):
        trace = forward(p, config, feats, temperature)
        log_post = backend.log_softmax_rows(trace.logits, temperature)
        smbr = smbr_forward_backward(lattice, reference, log_post, acoustic_scale)
        if mode == "ce_smoothed":
            frame = ce_loss(trace.posteriors, TargetBatch.hard(reference.states),
                            temperature)
        else:
            frame = kl_loss(trace.posteriors, TargetBatch.soft(soft), temperature)
        value, d_logits = regularized_sequence_loss(
            smbr, frame, trace.posteriors, smoothing, mode, temperature)
        if want_grads:
            return backward(p, config, trace, d_logits)
        return value

    analytic = compute(params, want_grads=True)
    numeric = numeric_param_grads(lambda p: compute(p, want_grads=False), params)
    return CheckResult(name, max_relative_error(analytic, numeric), SEQUENCE_TOLERANCE)


def run_all(seed: int) -> list[CheckResult]:
    """The full objective grid at the acceptance tolerances."""
    rng = np.random.default_rng(seed)
    results = []
    variant = 0

    results.append(check_frame_objective("ce", rng, variant, "ce"))
    for temperature in (1.0, 2.0, 3.0):
        variant += 1
        results.append(check_frame_objective(
            f"kl T={temperature:g}", rng, variant, "kl", temperature=temperature))
    for hard_weight in (0.0, 0.2, 1.0):
        variant += 1
        results.append(check_frame_objective(
            f"hybrid q={hard_weight:g}", rng, variant, "hybrid",
            hard_weight=hard_weight))
    for mode in ("ce_smoothed", "kl_smoothed"):
        for smoothing in (0.0, 0.2, 0.5):
            variant += 1
            results.append(check_sequence_objective(
                f"smbr {mode} p={smoothing:g}", rng, variant, mode, smoothing))
    return results
