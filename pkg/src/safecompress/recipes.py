"""Ready-made experiment settings.

``overfit_recipe`` builds the deliberately memorising setup the acceptance
tests use: a small training split, a fixed budget of 2000 SGD steps and no
weight decay anywhere, so members and non-members look different to an
attacker.
"""
from __future__ import annotations

import dataclasses

from .attack import AttackConfig
from .data import LabeledDataset, SyntheticSpec, generate_synthetic
from .framework import RunConfig
from .model import FineTuneConfig

OVERFIT_DATA = SyntheticSpec(n_classes=10, n_features=32, n_train=400, n_test=800, separation=3.0, noise=1.0)


def overfit_config(seed: int = 0, **overrides) -> RunConfig:
    cfg = RunConfig(
        omega=0.1,
        total_rounds=10,
        iterations_per_round=200,
        batch_size=64,
        hidden_dims=[128, 128],
        lr=0.1,
        momentum=0.9,
        finetune=FineTuneConfig(epochs=5, lr=5e-4, batch_size=128, weight_decay=0.0),
        attack=AttackConfig(epochs=30, finetune_epochs=5),
        seed=seed,
    )
    return dataclasses.replace(cfg, **overrides).validate()


def overfit_data(seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    return generate_synthetic(OVERFIT_DATA, seed)


def overfit_recipe(seed: int = 0, **overrides) -> tuple[RunConfig, LabeledDataset, LabeledDataset]:
    train, test = overfit_data(seed)
    return overfit_config(seed, **overrides), train, test
