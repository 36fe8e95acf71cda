"""Acceptance suite.

One test per acceptance criterion, each asserting its stated tolerance and
runtime budget and printing a single summary line.  Run with

    pytest tests/test_acceptance.py -v
"""

import os
import time
from dataclasses import replace

import numpy as np

from hdnn import backend, gradcheck
from hdnn.cli import run_cli
from hdnn.harness import (DatasetSpec, class_means, generate_synthetic,
                          generate_utterances, random_lattice)
from hdnn.lattice import brute_force_smbr, smbr_forward_backward
from hdnn.network import (ARCH_HIGHWAY, ARCH_PLAIN, GateConfig, ModelConfig,
                          ParamMask, Parameters, forward, init_params, param_count)
from hdnn.training import (AdaptConfig, FrameDataset, MomentumState, TrainConfig,
                           adapt, evaluate, expected_accuracy_per_frame, sgd_step,
                           train)


def report(criterion: int, detail: str) -> None:
    print(f"[criterion {criterion}] PASS - {detail}")


def plain_twin(params: Parameters) -> Parameters:
    """Plain-net parameters sharing the highway net's non-gate weights."""
    return Parameters(hidden=[(w.copy(), b.copy()) for w, b in params.hidden],
                      gates=None,
                      output=(params.output[0].copy(), params.output[1].copy()))


# --------------------------------------------------------------------------
# 1. parameter-count reproduction
# --------------------------------------------------------------------------

# (architecture, hidden, layers, published size in millions)
PUBLISHED_SIZES = [
    (ARCH_PLAIN, 2048, 6, 30.0),
    (ARCH_PLAIN, 512, 10, 4.6),
    (ARCH_PLAIN, 256, 10, 1.7),
    (ARCH_PLAIN, 128, 10, 0.71),
    (ARCH_HIGHWAY, 512, 15, 6.4),
    (ARCH_HIGHWAY, 512, 10, 5.1),
    (ARCH_HIGHWAY, 256, 15, 2.1),
    (ARCH_HIGHWAY, 256, 10, 1.8),
    (ARCH_HIGHWAY, 128, 10, 0.74),
]

EXACT_COUNTS = {
    (ARCH_PLAIN, 2048, 6): 30_351_236,
    (ARCH_HIGHWAY, 512, 10): 5_233_540,
    (ARCH_HIGHWAY, 128, 10): 770_692,
}


def test_criterion_1_parameter_counts(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    start = time.perf_counter()
    for arch, hidden, layers, millions in PUBLISHED_SIZES:
        cfg = ModelConfig(600, hidden, layers, 3972, architecture=arch,
                          gate=None if arch == ARCH_PLAIN else GateConfig())
        count = param_count(cfg)
        rel = abs(count - millions * 1e6) / (millions * 1e6)
        assert rel <= 0.10, (arch, hidden, layers, count, millions)
        exact = EXACT_COUNTS.get((arch, hidden, layers))
        if exact is not None:
            assert count == exact
    for (arch, hidden, layers), exact in EXACT_COUNTS.items():
        code = run_cli(["count-params", "--arch",
                        "plain" if arch == ARCH_PLAIN else "highway",
                        "--input", "600", "--hidden", str(hidden),
                        "--layers", str(layers), "--output", "3972",
                        "--out-dir", os.path.join("runs", "acceptance-count")])
        assert code == 0
        assert capsys.readouterr().out.strip() == str(exact)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report(1, f"nine published sizes within 10%, three exact counts, {elapsed:.2f}s")


# --------------------------------------------------------------------------
# 2. gradient correctness for every objective
# --------------------------------------------------------------------------

def test_criterion_2_gradient_correctness(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    start = time.perf_counter()
    assert gradcheck.FRAME_TOLERANCE == 1e-6
    assert gradcheck.SEQUENCE_TOLERANCE == 1e-5
    code = run_cli(["gradcheck", "--seed", "7",
                    "--out-dir", os.path.join("runs", "acceptance-gradcheck")])
    out = capsys.readouterr().out
    assert code == 0, out
    lines = [line for line in out.strip().split("\n") if "max rel err" in line]
    assert len(lines) == 13            # ce, kl x3 temps, hybrid x3 weights, smbr x6
    assert all("PASS" in line for line in lines)
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    report(2, f"13 objective configurations finite-difference checked, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 3. sMBR forward-backward vs enumeration oracle
# --------------------------------------------------------------------------

def test_criterion_3_smbr_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_value = worst_grad = 0.0
    for _ in range(200):
        num_frames = int(rng.integers(1, 9))
        num_states = int(rng.integers(2, 5))
        lattice, reference = random_lattice(rng, num_frames, num_states)
        logits = rng.normal(size=(num_frames, num_states))
        log_post = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        scale = float(rng.uniform(0.2, 2.0))
        fast = smbr_forward_backward(lattice, reference, log_post, scale)
        oracle = brute_force_smbr(lattice, reference, log_post, scale)
        worst_value = max(worst_value,
                          abs(fast.expected_accuracy - oracle.expected_accuracy))
        worst_grad = max(worst_grad, float(np.abs(
            fast.d_log_posteriors - oracle.d_log_posteriors).max()))
    assert worst_value < 1e-10
    assert worst_grad < 1e-5
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report(3, f"200 lattices: value diff {worst_value:.2e}, "
              f"gradient diff {worst_grad:.2e}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 4. architectural reductions
# --------------------------------------------------------------------------

def test_criterion_4_architectural_reductions():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    batch = rng.normal(size=(6, 5))

    # carry disabled: the net computes exactly sigma(a) * transform-gate
    cfg = ModelConfig(5, 8, 4, 3, gate=GateConfig(transform=True, carry=False))
    params = init_params(cfg, seed=1)
    trace = forward(params, cfg, batch)
    h = trace.hidden[0]
    for layer in range(2, cfg.num_layers + 1):
        w, b = params.hidden[layer - 1]
        gate = backend.sigmoid(backend.matmul_nt(h, params.gates[0]))
        h = backend.sigmoid(backend.matmul_nt(h, w) + b) * gate
        assert np.array_equal(trace.hidden[layer - 1], h)

    # constrained mode: stored carry equals the transform complement
    cfg = ModelConfig(5, 8, 4, 3, gate=GateConfig(constrained=True))
    params = init_params(cfg, seed=2)
    trace = forward(params, cfg, batch)
    for layer in range(2, cfg.num_layers + 1):
        diff = np.abs(trace.c_gate[layer - 1] - (1.0 - trace.t_gate[layer - 1]))
        assert diff.max() <= 1e-15

    # packed-weight route reproduces the separate route
    cfg = ModelConfig(5, 8, 4, 3)
    params = init_params(cfg, seed=3)
    separate = forward(params, cfg, batch)
    packed = forward(params, cfg, batch, packed=True)
    assert np.abs(separate.posteriors - packed.posteriors).max() <= 1e-15

    # zero gate weights: h = 0.5 sigma(a) + 0.5 h_prev exactly
    params.gates[0][...] = 0.0
    params.gates[1][...] = 0.0
    trace = forward(params, cfg, batch)
    for layer in range(2, cfg.num_layers + 1):
        expected = 0.5 * trace.sigma[layer - 1] + 0.5 * trace.hidden[layer - 2]
        assert np.array_equal(trace.hidden[layer - 1], expected)

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report(4, f"transform-only, constrained, packed, and half-mix reductions, "
              f"{elapsed:.2f}s")


# --------------------------------------------------------------------------
# 5. mask contract and gate-only sequence stability
# --------------------------------------------------------------------------

def _one_training_step(objective, params, cfg, frame_data, utterances, teacher,
                       state, mask):
    from hdnn.lattice import regularized_sequence_loss
    from hdnn.losses import TargetBatch, ce_loss, hybrid_loss, kl_loss
    from hdnn.network import backward

    if objective in ("ce", "kd", "hybrid"):
        feats, labels = frame_data
        trace = forward(params, cfg, feats)
        if objective == "ce":
            loss = ce_loss(trace.posteriors, TargetBatch.hard(labels))
        else:
            soft = forward(teacher[0], teacher[1], feats).posteriors
            if objective == "kd":
                loss = kl_loss(trace.posteriors, TargetBatch.soft(soft))
            else:
                loss = hybrid_loss(trace.posteriors, TargetBatch.soft(soft),
                                   TargetBatch.hard(labels), 0.5)
        d_logits = loss.d_logits
    else:
        utt = utterances[0]
        trace = forward(params, cfg, utt.features)
        log_post = backend.log_softmax_rows(trace.logits, 1.0)
        smbr = smbr_forward_backward(utt.lattice, utt.reference, log_post, 1.0)
        if objective == "smbr_ce":
            frame = ce_loss(trace.posteriors, TargetBatch.hard(utt.reference.states))
            mode = "ce_smoothed"
        else:
            soft = forward(teacher[0], teacher[1], utt.features).posteriors
            frame = kl_loss(trace.posteriors, TargetBatch.soft(soft))
            mode = "kl_smoothed"
        _, d_logits = regularized_sequence_loss(smbr, frame, trace.posteriors,
                                                0.2, mode)
    grads = backward(params, cfg, trace, d_logits)
    sgd_step(params, grads, state, 0.05, 0.9, mask)


def test_criterion_5_mask_contract_and_gate_only_stability():
    start = time.perf_counter()
    rng = np.random.default_rng(55)
    cfg = ModelConfig(6, 8, 3, 4)
    teacher_cfg = ModelConfig(6, 12, 2, 4)
    teacher = (init_params(teacher_cfg, seed=123), teacher_cfg)
    feats = rng.normal(size=(8, 6))
    labels = rng.integers(0, 4, size=8)
    spec = DatasetSpec(num_classes=4, feature_dim=6, frames_per_class=10, seed=5)
    utterances = generate_utterances(spec, num_utterances=1, num_frames=6)

    masks = [
        ParamMask(hidden=False, gates=True, output=True),
        ParamMask(hidden=True, gates=False, output=True),
        ParamMask(hidden=True, gates=True, output=False),
        ParamMask(hidden=False, gates=True, output=False),
    ]
    for objective in ("ce", "kd", "hybrid", "smbr_ce", "smbr_kl"):
        for mask in masks:
            params = init_params(cfg, seed=7)
            state = MomentumState.zeros(params)
            frozen = {group: [a.copy() for a in params.group_arrays(group)]
                      for group, enabled in (("hidden", mask.hidden),
                                             ("gates", mask.gates),
                                             ("output", mask.output))
                      if not enabled}
            for _ in range(100):
                _one_training_step(objective, params, cfg, (feats, labels),
                                   utterances, teacher, state, mask)
            for group, before in frozen.items():
                for b, a in zip(before, params.group_arrays(group)):
                    assert np.array_equal(b, a), (objective, group)

    # gate-only sequence training without smoothing must not diverge
    spec = DatasetSpec(num_classes=4, feature_dim=6, frames_per_class=100,
                       mean_scale=2.0, noise_scale=1.0, seed=5)
    tr_feats, tr_labels = generate_synthetic(spec)
    net_cfg = ModelConfig(6, 12, 4, 4)
    warm = train(init_params(net_cfg, seed=1), net_cfg,
                 FrameDataset(tr_feats, tr_labels),
                 TrainConfig(objective="ce", learning_rate=0.3, epochs=8,
                             batch_size=16, seed=1))
    utts = generate_utterances(spec, num_utterances=20, num_frames=12)
    before = expected_accuracy_per_frame(warm.params, net_cfg, utts)
    res = train(warm.params, net_cfg, utts,
                TrainConfig(objective="smbr_ce", learning_rate=0.05, epochs=4,
                            batch_size=1, smoothing=0.0,
                            mask=ParamMask(hidden=False, gates=True, output=False),
                            seed=2))
    after = expected_accuracy_per_frame(res.params, net_cfg, utts)
    assert after >= before
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report(5, f"masked groups bitwise stable over 100 steps for 5 objectives; "
              f"gate-only smbr p=0 accuracy {before:.4f} -> {after:.4f}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 6. convergence: deep-thin highway trains where the plain net cannot
# --------------------------------------------------------------------------

def test_criterion_6_depth_convergence_trend():
    start = time.perf_counter()
    spec = DatasetSpec(num_classes=6, feature_dim=16, frames_per_class=500,
                       mean_scale=3.0, noise_scale=0.5, seed=77)
    feats, labels = generate_synthetic(spec)
    data = FrameDataset(feats, labels)
    cfg_hw = ModelConfig(16, 16, 20, 6, architecture=ARCH_HIGHWAY)
    cfg_pl = ModelConfig(16, 16, 20, 6, architecture=ARCH_PLAIN)
    wins = 0
    details = []
    for seed in range(5):
        hw_params = init_params(cfg_hw, seed=seed)
        pl_params = plain_twin(hw_params)       # identical shared-weight init
        tcfg = TrainConfig(objective="ce", learning_rate=1.0, epochs=30,
                           batch_size=8, temperature=0.02, seed=seed)
        hw = train(hw_params, cfg_hw, data, tcfg)
        pl = train(pl_params, cfg_pl, data, tcfg)
        wins += hw.metrics[-1].loss < pl.metrics[-1].loss
        details.append(f"{hw.metrics[-1].loss:.0f}<{pl.metrics[-1].loss:.0f}")
    assert wins >= 4, details
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    report(6, f"highway beat plain on training CE in {wins}/5 seeds at depth 20, "
              f"{elapsed:.0f}s")


# --------------------------------------------------------------------------
# 7. distillation: soft targets at least match hard labels
# --------------------------------------------------------------------------

def test_criterion_7_distillation_trend():
    start = time.perf_counter()
    teacher_cfg = ModelConfig(10, 64, 3, 6, architecture=ARCH_PLAIN)
    student_cfg = ModelConfig(10, 8, 6, 6)
    wins = 0
    pairs = []
    for seed in range(5):
        spec = DatasetSpec(num_classes=6, feature_dim=10, frames_per_class=150,
                           mean_scale=1.5, noise_scale=1.2, seed=400 + seed)
        tr_feats, tr_labels = generate_synthetic(spec)
        te_feats, te_labels = generate_synthetic(
            replace(spec, split=1, frames_per_class=500))
        traind = FrameDataset(tr_feats, tr_labels)
        testd = FrameDataset(te_feats, te_labels)
        teacher = train(init_params(teacher_cfg, seed=seed), teacher_cfg, traind,
                        TrainConfig(objective="ce", learning_rate=0.2, epochs=60,
                                    batch_size=32, seed=seed))
        student_init = init_params(student_cfg, seed=seed)
        hard = train(student_init, student_cfg, traind,
                     TrainConfig(objective="ce", learning_rate=0.3, epochs=50,
                                 batch_size=16, seed=seed))
        soft = train(student_init, student_cfg, traind,
                     TrainConfig(objective="kd", learning_rate=0.3, epochs=50,
                                 batch_size=16, seed=seed),
                     teacher=(teacher.params, teacher_cfg))
        hard_fer, _ = evaluate(hard.params, student_cfg, testd)
        soft_fer, _ = evaluate(soft.params, student_cfg, testd)
        wins += soft_fer <= hard_fer
        pairs.append((round(soft_fer, 4), round(hard_fer, 4)))
    assert wins >= 3, pairs

    # hybrid blends converge for every weight
    spec = DatasetSpec(num_classes=6, feature_dim=10, frames_per_class=150,
                       mean_scale=1.5, noise_scale=1.2, seed=400)
    tr_feats, tr_labels = generate_synthetic(spec)
    traind = FrameDataset(tr_feats, tr_labels)
    teacher = train(init_params(teacher_cfg, seed=0), teacher_cfg, traind,
                    TrainConfig(objective="ce", learning_rate=0.2, epochs=60,
                                batch_size=32, seed=0))
    student_init = init_params(student_cfg, seed=0)
    for weight in (0.2, 0.5, 1.0):
        res = train(student_init, student_cfg, traind,
                    TrainConfig(objective="hybrid", learning_rate=0.3, epochs=20,
                                batch_size=16, hard_weight=weight, seed=0),
                    teacher=(teacher.params, teacher_cfg))
        assert res.metrics[-1].loss < res.metrics[0].loss
        assert res.metrics[-1].fer < 0.5
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    report(7, f"soft-target student matched or beat hard labels in {wins}/5 seeds; "
              f"hybrid converged for 3 weights, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 8. gate-only adaptation under domain shift
# --------------------------------------------------------------------------

def test_criterion_8_adaptation_trend():
    start = time.perf_counter()
    wins = 0
    overfit_ok = 0
    rows = []
    for seed in range(5):
        spec = DatasetSpec(num_classes=5, feature_dim=5, frames_per_class=300,
                           mean_scale=2.0, noise_scale=0.5, seed=300 + seed)
        feats, labels = generate_synthetic(spec)
        cfg = ModelConfig(5, 16, 5, 5)
        base = train(init_params(cfg, seed=seed), cfg, FrameDataset(feats, labels),
                     TrainConfig(objective="ce", learning_rate=0.3, epochs=10,
                                 batch_size=16, seed=seed))
        # systematic shift pushing one class toward a confusable neighbor
        means = class_means(spec)
        shift = 0.25 * (means[1] - means[0])
        held = replace(spec, split=1, shift=shift, frames_per_class=2000)
        h_feats, h_labels = generate_synthetic(held)
        held_data = FrameDataset(h_feats, h_labels)
        unadapted, _ = evaluate(base.params, cfg, held_data)
        five = adapt(base.params, cfg, FrameDataset(h_feats),
                     AdaptConfig(learning_rate=2e-4, epochs=5, seed=seed))
        fer5, _ = evaluate(five.params, cfg, held_data)
        ten = adapt(base.params, cfg, FrameDataset(h_feats),
                    AdaptConfig(learning_rate=2e-4, epochs=10, seed=seed))
        fer10, _ = evaluate(ten.params, cfg, held_data)
        wins += fer5 < unadapted
        overfit_ok += fer10 <= fer5 + 0.01
        rows.append(f"{unadapted:.4f}->{fer5:.4f}->{fer10:.4f}")
    assert wins >= 4, rows
    assert overfit_ok == 5, rows
    elapsed = time.perf_counter() - start
    report(8, f"pseudo-label gate adaptation reduced FER in {wins}/5 seeds, "
              f"10-epoch run never worse by >1 point, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 9. scope statement: recognition-accuracy tables are out of reach here
# --------------------------------------------------------------------------

def test_criterion_9_scope_statement():
    readme = os.path.join(os.path.dirname(__file__), os.pardir, "README.md")
    with open(readme, "r", encoding="utf-8") as fh:
        text = fh.read().lower()
    assert "not reproducible at desk scale" in text
    assert "word-error-rate" in text or "word error rate" in text
    report(9, "README states the word-error-rate results are out of scope and "
              "what the suite checks instead")
