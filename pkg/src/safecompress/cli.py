"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, read_checkpoint, save_checkpoint
from .config import ExperimentSpec, apply_overrides, dump_config, load_config, resolve_datasets
from .framework import (ConfigError, evaluate_model, membership_split, run_baseline_prune_finetune,
                        run_safecompress)
from .report import emit_report, load_trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("safecompress")

# flag dest -> dotted config path
_FLAGS = [
    ("--mode", "run.mode", str, "bmia, wmia or mmia"),
    ("--omega", "run.omega", float, "fraction of weights kept"),
    ("--lambda", "run.lambda", float, "task-accuracy exponent in the TM-score"),
    ("--alpha", "run.alpha", float, "black-box weight in the multi-attack score"),
    ("--beta", "run.beta", float, "adversarial regularisation weight"),
    ("--rounds", "run.total_rounds", int, "number of compress/test rounds"),
    ("--iterations", "run.iterations_per_round", int, "training steps per round"),
    ("--batch-size", "run.batch_size", int, None),
    ("--lr", "run.lr", float, "SGD learning rate"),
    ("--prune-fraction", "run.prune_fraction", float, "initial per-round prune fraction"),
    ("--prune-schedule", "run.prune_schedule", str, "cosine or constant"),
    ("--finetune-epochs", "run.finetune.epochs", int, None),
    ("--attack-epochs", "run.attack.epochs", int, None),
    ("--baseline-finetune-epochs", "run.baseline_finetune_epochs", int, None),
    ("--seed", "run.seed", int, "seed for every run-time random choice"),
    ("--dataset-seed", "dataset.seed", int, "seed for synthetic data"),
    ("--train-csv", "dataset.train_csv", str, None),
    ("--test-csv", "dataset.test_csv", str, None),
    ("--label-column", "dataset.label_column", str, None),
    ("--output-dir", "output_dir", str, None),
]


def _dest(flag: str) -> str:
    return "opt_" + flag.lstrip("-").replace("-", "_")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="JSON/YAML experiment file")
    for flag, _, typ, help_ in _FLAGS:
        p.add_argument(flag, dest=_dest(flag), type=typ, default=None, help=help_)
    p.add_argument("--hidden-dims", dest="opt_hidden_dims", type=lambda s: [int(v) for v in s.split(",")],
                   default=None, help="comma-separated hidden widths, e.g. 256,256")
    p.add_argument("--adversarial-training", dest="opt_adv", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safecompress", description="Safety-tested dynamic sparse training.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("compress", "run the compress/test/select loop"),
                        ("baseline", "dense training, one-shot prune, fine-tune"),
                        ("attack-eval", "attack a saved checkpoint"),
                        ("report", "render a saved trace"),
                        ("config", "print the resolved configuration")]:
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "attack-eval":
            p.add_argument("checkpoint", help="checkpoint file written by compress or baseline")
        if name == "report":
            p.add_argument("source", help="trace.json or a checkpoint with an embedded trace")
    return parser


def resolve_spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec()
    overrides = {}
    for flag, path, _, _ in _FLAGS:
        value = getattr(args, _dest(flag))
        if value is not None:
            overrides[path] = value
    if args.opt_hidden_dims is not None:
        overrides["run.hidden_dims"] = args.opt_hidden_dims
    if args.opt_adv is not None:
        overrides["run.adversarial_training"] = args.opt_adv
    if overrides.get("dataset.train_csv") or overrides.get("dataset.test_csv"):
        overrides["dataset.kind"] = "csv"
    return apply_overrides(spec, overrides) if overrides else spec


def _run(spec: ExperimentSpec, baseline: bool) -> dict:
    train, test = resolve_datasets(spec.dataset)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_config(spec) + "\n")
    if baseline:
        model, trace = run_baseline_prune_finetune(spec.run, train, test)
    else:
        model, trace = run_safecompress(
            spec.run, train, test,
            progress=lambda rec: log.info("round %d -> %s", rec.round, rec.selected_report.strategy_label))
    files = emit_report(trace, out, write_trace=spec.report.trace)
    if spec.report.checkpoint:
        files["checkpoint"] = save_checkpoint(model, trace, out / "model.safc")
    return {"final": trace.final.to_dict() if trace.final else None, "files": {k: str(v) for k, v in files.items()}}


def _attack_eval(spec: ExperimentSpec, path: str) -> dict:
    model = read_checkpoint(path).model
    train, test = resolve_datasets(spec.dataset)
    if [train.n_features, train.n_classes] != [model.layer_dims[0], model.layer_dims[-1]]:
        raise CheckpointError("checkpoint dims do not match the configured dataset")
    split = membership_split(spec.run, train, test)
    report = evaluate_model(model, split, test, spec.run)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "attack_eval.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report.to_dict()


def _report(spec: ExperimentSpec, source: str) -> dict:
    src = Path(source)
    if src.suffix == ".json":
        trace = load_trace(src)
    else:
        trace = read_checkpoint(src).trace
        if trace is None:
            raise CheckpointError(f"{src} has no embedded trace")
    files = emit_report(trace, spec.output_dir, write_trace=spec.report.trace)
    return {"files": {k: str(v) for k, v in files.items()}}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = resolve_spec(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "config":
            print(dump_config(spec))
            return EXIT_OK
        if args.command in ("compress", "baseline"):
            result = _run(spec, baseline=args.command == "baseline")
        elif args.command == "attack-eval":
            result = _attack_eval(spec, args.checkpoint)
        else:
            result = _report(spec, args.source)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure past config is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
