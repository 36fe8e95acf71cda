"""Command-line interface.

Every subcommand also accepts ``--config FILE`` with line-oriented
``key = value`` pairs (keys are the flag names with underscores); explicit
flags override file values, which override built-in defaults.  The
``HDNN_SEED`` environment variable supplies the seed when neither a flag
nor a config entry does.  Each run writes a ``manifest.json`` into its
output directory; re-running with the same inputs reproduces the metrics
bit for bit.
"""

from __future__ import annotations

import argparse
import ast
import datetime
import os
import sys

import numpy as np

from . import harness, training
from .errors import ConfigError, FormatError, HdnnError
from .gradcheck import run_all as run_gradcheck
from .harness import (DatasetSpec, RunManifest, generate_synthetic, generate_utterances,
                      load_dataset, load_model, save_dataset, save_model, shift_vector,
                      write_manifest)
from .network import (ARCH_HIGHWAY, ARCH_PLAIN, GateConfig, ModelConfig, ParamMask,
                      init_params, param_count)
from .training import AdaptConfig, FrameDataset, TrainConfig, adapt, evaluate, train

_ARCHES = {"plain": ARCH_PLAIN, "highway": ARCH_HIGHWAY}
_GATE_CHOICES = {
    "both": GateConfig(transform=True, carry=True),
    "transform": GateConfig(transform=True, carry=False),
    "carry": GateConfig(transform=False, carry=True),
    "constrained": GateConfig(transform=True, carry=True, constrained=True),
}

# built-in defaults per subcommand; config files and flags override in turn
_DEFAULTS = {
    "gen-data": dict(out=None, classes=6, dim=10, frames_per_class=200,
                     mean_scale=2.0, noise_scale=1.0, shift=0.0, split=0,
                     sequences=0, frames=20, confusions=3, lm_scale=0.5),
    "train": dict(data=None, init_model=None, arch="highway", gates="both",
                  hidden=32, layers=5, epochs=10, lr=0.2, batch_size=32,
                  temperature=1.0, update="hidden,gates,output"),
    "distill": dict(data=None, teacher=None, arch="highway", gates="both",
                    hidden=16, layers=5, epochs=10, lr=0.2, batch_size=32,
                    temperature=1.0, hard_weight=0.0, update="hidden,gates,output"),
    "smbr": dict(data=None, init_model=None, mode="ce", smoothing=0.2,
                 acoustic_scale=1.0, teacher=None, epochs=4, lr=0.02,
                 update="hidden,gates,output"),
    "adapt": dict(model=None, data=None, label_source="hard_pseudo", teacher=None,
                  lr=2e-4, epochs=5, batch_size=1, update="gates"),
    "eval": dict(model=None, data=None),
    "gradcheck": dict(),
    "count-params": dict(arch="highway", input=600, hidden=512, layers=10,
                         output=3972, gates="both"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdnn",
        description="Train, distill, sequence-train, and adapt highway nets "
                    "on synthetic desk-scale data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *specs, required=()):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help="key = value defaults file")
        p.add_argument("--out-dir", default=argparse.SUPPRESS,
                       help=f"output directory (default runs/{name})")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                       help="random seed (default $HDNN_SEED or 0)")
        for flag, kwargs in specs:
            p.add_argument(flag, default=argparse.SUPPRESS,
                           required=flag.lstrip("-").replace("-", "_") in required,
                           **kwargs)
        return p

    add("gen-data", "generate a synthetic dataset",
        ("--out", dict(help="output .npz (frame mode) or directory (sequence mode)")),
        ("--classes", dict(type=int)), ("--dim", dict(type=int)),
        ("--frames-per-class", dict(type=int)),
        ("--mean-scale", dict(type=float)), ("--noise-scale", dict(type=float)),
        ("--shift", dict(type=float, help="domain-shift magnitude, 0 disables")),
        ("--split", dict(type=int, help="sample-stream selector sharing class means")),
        ("--sequences", dict(type=int, help="emit N utterances with lattices instead")),
        ("--frames", dict(type=int, help="frames per utterance (sequence mode)")),
        ("--confusions", dict(type=int, help="max confusable states per frame")),
        ("--lm-scale", dict(type=float)),
        required=("out",))

    model_flags = (
        ("--arch", dict(choices=sorted(_ARCHES))),
        ("--gates", dict(choices=sorted(_GATE_CHOICES))),
        ("--hidden", dict(type=int)), ("--layers", dict(type=int)),
    )
    add("train", "cross-entropy training",
        ("--data", dict(help="dataset .npz")),
        ("--init-model", dict(help="warm-start model file")),
        *model_flags,
        ("--epochs", dict(type=int)), ("--lr", dict(type=float)),
        ("--batch-size", dict(type=int)), ("--temperature", dict(type=float)),
        ("--update", dict(help="comma list of groups: hidden,gates,output")),
        required=("data",))

    add("distill", "teacher-student training (hybrid when --hard-weight > 0)",
        ("--data", dict(help="dataset .npz")),
        ("--teacher", dict(help="teacher model file")),
        *model_flags,
        ("--epochs", dict(type=int)), ("--lr", dict(type=float)),
        ("--batch-size", dict(type=int)), ("--temperature", dict(type=float)),
        ("--hard-weight", dict(type=float)),
        ("--update", dict(help="comma list of groups: hidden,gates,output")),
        required=("data", "teacher"))

    add("smbr", "lattice sequence training from a warm-start model",
        ("--data", dict(help="utterance directory from gen-data --sequences")),
        ("--init-model", dict(help="warm-start model file")),
        ("--mode", dict(choices=("ce", "kl"), help="smoothing loss")),
        ("--smoothing", dict(type=float)), ("--acoustic-scale", dict(type=float)),
        ("--teacher", dict(help="teacher model (kl mode)")),
        ("--epochs", dict(type=int)), ("--lr", dict(type=float)),
        ("--update", dict(help="comma list of groups: hidden,gates,output")),
        required=("data", "init_model"))

    add("adapt", "fine-tune gate parameters on adaptation data",
        ("--model", dict(help="model file")),
        ("--data", dict(help="adaptation dataset .npz")),
        ("--label-source", dict(choices=("hard_pseudo", "soft_teacher", "oracle_hard"))),
        ("--teacher", dict(help="teacher model (soft_teacher)")),
        ("--lr", dict(type=float)), ("--epochs", dict(type=int)),
        ("--batch-size", dict(type=int)),
        ("--update", dict(help="comma list of groups: hidden,gates,output")),
        required=("model", "data"))

    add("eval", "frame error rate and cross-entropy of a model on a dataset",
        ("--model", dict()), ("--data", dict()),
        required=("model", "data"))

    add("gradcheck", "finite-difference check of every objective's gradients")

    add("count-params", "exact parameter count for a configuration",
        ("--arch", dict(choices=sorted(_ARCHES))),
        ("--input", dict(type=int)), ("--hidden", dict(type=int)),
        ("--layers", dict(type=int)), ("--output", dict(type=int)),
        ("--gates", dict(choices=sorted(_GATE_CHOICES))))
    return parser


def _read_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip()
            try:
                values[key] = ast.literal_eval(raw)
            except (ValueError, SyntaxError):
                values[key] = raw
    return values


def _merge_options(args: argparse.Namespace) -> dict:
    command = args.command
    given = {k: v for k, v in vars(args).items() if k != "command"}
    opts = dict(_DEFAULTS[command])
    opts["out_dir"] = os.path.join("runs", command)
    config_path = given.pop("config", None)
    file_values = _read_config_file(config_path) if config_path else {}
    for key, value in file_values.items():
        if key not in opts and key != "seed":
            raise ConfigError(f"config file sets unknown option {key!r} for {command}")
        default = opts.get(key)
        if isinstance(default, int) and not isinstance(default, bool):
            value = int(value)
        elif isinstance(default, float):
            value = float(value)
        opts[key] = value
    opts.update(given)
    if "seed" not in opts or opts.get("seed") is None:
        opts["seed"] = int(os.environ.get("HDNN_SEED", "0"))
    opts["seed"] = int(opts["seed"])
    return opts


def _mask_from_spec(spec: str) -> ParamMask:
    groups = {g.strip() for g in spec.split(",") if g.strip()}
    unknown = groups - {"hidden", "gates", "output"}
    if unknown:
        raise ConfigError(f"unknown parameter groups in --update: {sorted(unknown)}")
    return ParamMask(hidden="hidden" in groups, gates="gates" in groups,
                     output="output" in groups)


def _model_config(opts, num_classes: int, feature_dim: int) -> ModelConfig:
    arch = _ARCHES[opts["arch"]]
    gate = _GATE_CHOICES[opts["gates"]] if arch == ARCH_HIGHWAY else None
    return ModelConfig(input_dim=feature_dim, hidden_dim=opts["hidden"],
                       num_layers=opts["layers"], output_dim=num_classes,
                       architecture=arch, gate=gate)


def _load_frame_dataset(path) -> tuple[FrameDataset, dict]:
    features, labels, meta = load_dataset(path)
    return FrameDataset(features=features, labels=labels), meta


def _write_metrics_csv(path, result: training.TrainResult) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(training.CSV_HEADER + "\n")
        for m in result.metrics:
            fh.write(m.csv_row() + "\n")


def _cmd_gen_data(opts):
    spec = DatasetSpec(num_classes=opts["classes"], feature_dim=opts["dim"],
                       frames_per_class=opts["frames_per_class"],
                       mean_scale=opts["mean_scale"], noise_scale=opts["noise_scale"],
                       split=opts["split"], seed=opts["seed"])
    if opts["shift"]:
        spec = DatasetSpec(**{**_spec_dict(spec), "shift": shift_vector(spec, opts["shift"])})
    if opts["sequences"]:
        utterances = generate_utterances(spec, opts["sequences"], opts["frames"],
                                         max_confusions=opts["confusions"],
                                         lm_scale=opts["lm_scale"])
        harness.save_utterances(opts["out"], utterances)
        return 0, {"utterances": len(utterances), "frames": opts["frames"]}, []
    features, labels = generate_synthetic(spec)
    meta = {"num_classes": spec.num_classes, "feature_dim": spec.feature_dim,
            "seed": spec.seed, "split": spec.split}
    save_dataset(opts["out"], features, labels, meta)
    return 0, {"frames": int(labels.shape[0]), "classes": spec.num_classes}, []


def _spec_dict(spec: DatasetSpec) -> dict:
    return {"num_classes": spec.num_classes, "feature_dim": spec.feature_dim,
            "frames_per_class": spec.frames_per_class, "mean_scale": spec.mean_scale,
            "noise_scale": spec.noise_scale, "shift": spec.shift,
            "split": spec.split, "seed": spec.seed}


def _train_like(opts, objective: str):
    data, meta = _load_frame_dataset(opts["data"])
    num_classes = int(meta.get("num_classes", int(data.labels.max()) + 1))
    teacher = None
    if objective in ("kd", "hybrid"):
        teacher = load_model(opts["teacher"])
        if teacher[1].input_dim != data.features.shape[1]:
            raise ConfigError("teacher input dim does not match the dataset")
    if opts.get("init_model"):
        params, config = load_model(opts["init_model"])
        params = params.copy()
    else:
        config = _model_config(opts, num_classes, data.features.shape[1])
        params = init_params(config, opts["seed"])
    tcfg = TrainConfig(objective=objective, learning_rate=opts["lr"],
                       epochs=opts["epochs"], batch_size=opts["batch_size"],
                       hard_weight=opts.get("hard_weight", 0.0),
                       temperature=opts["temperature"],
                       mask=_mask_from_spec(opts["update"]), seed=opts["seed"])
    result = train(params, config, data, tcfg, teacher=teacher)
    model_path = os.path.join(opts["out_dir"], "model.hdn")
    metrics_path = os.path.join(opts["out_dir"], "metrics.csv")
    save_model(result.params, config, model_path)
    _write_metrics_csv(metrics_path, result)
    last = result.metrics[-1]
    final = {"loss": last.loss, "fer": last.fer, "model": model_path}
    return 0, final, [metrics_path]


def _cmd_train(opts):
    return _train_like(opts, "ce")


def _cmd_distill(opts):
    objective = "hybrid" if opts["hard_weight"] > 0.0 else "kd"
    return _train_like(opts, objective)


def _cmd_smbr(opts):
    utterances = harness.load_utterances(opts["data"])
    params, config = load_model(opts["init_model"])
    objective = "smbr_ce" if opts["mode"] == "ce" else "smbr_kl"
    teacher = None
    if objective == "smbr_kl":
        if not opts.get("teacher"):
            raise ConfigError("smbr --mode kl needs --teacher")
        teacher = load_model(opts["teacher"])
    tcfg = TrainConfig(objective=objective, learning_rate=opts["lr"],
                       epochs=opts["epochs"], batch_size=1,
                       smoothing=opts["smoothing"],
                       acoustic_scale=opts["acoustic_scale"],
                       mask=_mask_from_spec(opts["update"]), seed=opts["seed"])
    result = train(params, config, utterances, tcfg, teacher=teacher)
    model_path = os.path.join(opts["out_dir"], "model.hdn")
    metrics_path = os.path.join(opts["out_dir"], "metrics.csv")
    save_model(result.params, config, model_path)
    _write_metrics_csv(metrics_path, result)
    last = result.metrics[-1]
    final = {"loss": last.loss, "fer": last.fer,
             "expected_accuracy": last.expected_accuracy, "model": model_path}
    return 0, final, [metrics_path]


def _cmd_adapt(opts):
    params, config = load_model(opts["model"])
    data, _ = _load_frame_dataset(opts["data"])
    teacher = None
    if opts["label_source"] == "soft_teacher":
        if not opts.get("teacher"):
            raise ConfigError("adapt --label-source soft_teacher needs --teacher")
        teacher = load_model(opts["teacher"])
    acfg = AdaptConfig(learning_rate=opts["lr"], epochs=opts["epochs"],
                       label_source=opts["label_source"],
                       mask=_mask_from_spec(opts["update"]),
                       batch_size=opts["batch_size"], seed=opts["seed"])
    result = adapt(params, config, data, acfg, teacher=teacher)
    model_path = os.path.join(opts["out_dir"], "model.hdn")
    metrics_path = os.path.join(opts["out_dir"], "metrics.csv")
    save_model(result.params, config, model_path)
    with open(metrics_path, "w", encoding="ascii") as fh:
        fh.write(training.CSV_HEADER + "\n")
        for epoch, loss in enumerate(result.loss_trajectory, start=1):
            fh.write(f"{epoch},adapt,{loss!r},,\n")
    final = {"final_adapt_loss": result.loss_trajectory[-1], "model": model_path}
    return 0, final, [metrics_path]


def _cmd_eval(opts):
    params, config = load_model(opts["model"])
    data, _ = _load_frame_dataset(opts["data"])
    fer, mean_ce = evaluate(params, config, data)
    print(f"fer={fer!r} ce={mean_ce!r}")
    return 0, {"fer": fer, "ce": mean_ce}, []


def _cmd_gradcheck(opts):
    results = run_gradcheck(opts["seed"])
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name}: max rel err {res.max_error:.3e} "
              f"(tolerance {res.tolerance:g}) {status}")
        failed += 0 if res.passed else 1
    final = {"checks": len(results), "failed": failed,
             "worst": max(r.max_error for r in results)}
    return (1 if failed else 0), final, []


def _cmd_count_params(opts):
    arch = _ARCHES[opts["arch"]]
    gate = _GATE_CHOICES[opts["gates"]] if arch == ARCH_HIGHWAY else None
    config = ModelConfig(input_dim=opts["input"], hidden_dim=opts["hidden"],
                         num_layers=opts["layers"], output_dim=opts["output"],
                         architecture=arch, gate=gate)
    count = param_count(config)
    print(count)
    return 0, {"param_count": count}, []


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "distill": _cmd_distill,
    "smbr": _cmd_smbr,
    "adapt": _cmd_adapt,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "count-params": _cmd_count_params,
}


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        opts = _merge_options(args)
        os.makedirs(opts["out_dir"], exist_ok=True)
        started = _now()
        code, final_metrics, metrics_files = _HANDLERS[args.command](opts)
        manifest = RunManifest(
            command=args.command,
            config={k: _jsonable(v) for k, v in sorted(opts.items())},
            seed=opts["seed"], started_at=started, finished_at=_now(),
            metrics_files=metrics_files, final_metrics=final_metrics)
        write_manifest(os.path.join(opts["out_dir"], "manifest.json"), manifest)
        return code
    except HdnnError as exc:
        print(f"hdnn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hdnn {args.command}: error: {exc}", file=sys.stderr)
        return 1


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
