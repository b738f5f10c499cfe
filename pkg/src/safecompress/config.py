"""Experiment configuration: parsing, validation, defaults.

Config files are JSON (YAML is accepted too, being a superset).  Run
parameters live under ``run``; for brevity they may also be given at the top
level, so ``{"omega": 0.1}`` is a complete config.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .attack import AttackConfig
from .data import LabeledDataset, SyntheticSpec, generate_synthetic, load_csv
from .framework import ConfigError, RunConfig
from .model import FineTuneConfig

# file key -> attribute name, where they differ
_RENAMES = {RunConfig: {"lambda": "lam"}}


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str = "label"
    seed: int = 0


@dataclass
class ReportOptions:
    checkpoint: bool = True
    trace: bool = True


@dataclass
class ExperimentSpec:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    run: RunConfig = field(default_factory=RunConfig)
    output_dir: str = "runs/default"
    report: ReportOptions = field(default_factory=ReportOptions)


# --------------------------------------------------------------------------
# dict <-> dataclass
# --------------------------------------------------------------------------
def _key_to_attr(cls) -> dict[str, str]:
    return _RENAMES.get(cls, {})


def _check_type(value, hint, path: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_type(value, inner[0], path)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(hint, value, path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        item = args[0] if args else Any
        items = [_check_type(v, item, f"{path}[{i}]") if item is not Any else v for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    return value


def _build(cls, data: dict, path: str):
    hints = typing.get_type_hints(cls)
    renames = _key_to_attr(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        attr = renames.get(key, key)
        where = f"{path}.{key}" if path else key
        if attr not in names:
            raise ConfigError(f"{where}: unknown field")
        kwargs[attr] = _check_type(value, hints[attr], where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        inv = {v: k for k, v in _key_to_attr(type(obj)).items()}
        return {inv.get(f.name, f.name): to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


_RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} | set(_RENAMES[RunConfig])


def spec_from_dict(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    data = dict(data)
    flat_run = {k: data.pop(k) for k in list(data) if k in _RUN_KEYS}
    if flat_run:
        nested = data.get("run") or {}
        if not isinstance(nested, dict):
            raise ConfigError("run: expected a mapping")
        clash = set(flat_run) & set(nested)
        if clash:
            raise ConfigError(f"run.{sorted(clash)[0]}: given both at top level and under 'run'")
        data["run"] = {**nested, **flat_run}
    spec = _build(ExperimentSpec, data, "")
    try:
        spec.run.validate()
    except ConfigError as exc:
        raise ConfigError(f"run.{exc}") from None
    _validate_dataset(spec.dataset)
    return spec


def _validate_dataset(ds: DatasetSpec):
    if ds.kind not in ("synthetic", "csv"):
        raise ConfigError("dataset.kind: must be 'synthetic' or 'csv'")
    if ds.kind == "csv" and (not ds.train_csv or not ds.test_csv):
        raise ConfigError("dataset.train_csv: csv datasets need train_csv and test_csv")
    s = ds.synthetic
    if s.n_classes < 2:
        raise ConfigError("dataset.synthetic.n_classes: must be >= 2")
    if s.noise <= 0:
        raise ConfigError("dataset.synthetic.noise: must be > 0")


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return spec_from_dict(data or {})


def dump_config(spec: ExperimentSpec) -> str:
    return json.dumps(to_dict(spec), indent=2, sort_keys=True)


def apply_overrides(spec: ExperimentSpec, overrides: dict[str, Any]) -> ExperimentSpec:
    """Re-validate ``spec`` with dotted-path overrides, e.g. ``{"run.omega": 0.2}``."""
    data = to_dict(spec)
    for dotted, value in overrides.items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return spec_from_dict(data)


def resolve_datasets(ds: DatasetSpec) -> tuple[LabeledDataset, LabeledDataset]:
    if ds.kind == "synthetic":
        return generate_synthetic(ds.synthetic, ds.seed)
    train = load_csv(ds.train_csv, ds.label_column)
    test = load_csv(ds.test_csv, ds.label_column)
    k = max(train.n_classes, test.n_classes)
    return (LabeledDataset(train.features, train.labels, k), LabeledDataset(test.features, test.labels, k))


__all__ = ["ConfigError", "DatasetSpec", "ExperimentSpec", "FineTuneConfig", "AttackConfig", "ReportOptions",
           "RunConfig", "apply_overrides", "dump_config", "load_config", "resolve_datasets", "spec_from_dict",
           "to_dict"]
