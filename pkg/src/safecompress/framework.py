"""The compress-test-select loop and the prune+finetune baseline.

Each round trains the carried sparse model, derives one candidate per
prune/grow strategy, fine-tunes the candidates, attacks each one with a
simulated attacker adapted to it, and carries forward the candidate with the
best accuracy-over-attack score.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .attack import (AttackConfig, AttackModel, MembershipSplit, finetune_attacker, make_split,
                     mia_accuracy, one_hot, train_attacker)
from .data import DataError, LabeledDataset
from .model import (FineTuneConfig, TargetModel, build_mlp, fine_tune, minibatches, task_accuracy,
                    train_rounds)
from .optim import Optimizer, OptimizerConfig, make_optimizer
from .selection import EvalReport, score_report, select_best
from .sparse import STRATEGIES, SparseMask, magnitude_prune, prune_fraction_at, sparse_update

log = logging.getLogger(__name__)

MODE_KINDS = {
    "bmia": ("black_box",),
    "wmia": ("white_box",),
    "mmia": ("black_box", "white_box"),
}

# stage tags mixed into per-stage seeds
_SPLIT, _INIT, _TRAIN, _ATTACK, _UPDATE, _FINETUNE, _ATTACK_FT, _EVAL, _GROWTH, _ADV = range(10)


class ConfigError(ValueError):
    pass


class RoundError(RuntimeError):
    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
        self.round_index = round_index


@dataclass
class RunConfig:
    mode: str = "bmia"
    omega: float = 0.1
    lam: float = 1.0
    alpha: float = 0.5
    beta: float = 0.1
    adversarial_training: bool = False
    total_rounds: int = 10
    iterations_per_round: int = 200
    batch_size: int = 64
    hidden_dims: list[int] = field(default_factory=lambda: [256, 256])
    lr: float = 0.1
    momentum: float = 0.9
    lr_milestones: list[float] = field(default_factory=lambda: [0.5, 0.75])
    lr_gamma: float = 0.1
    prune_fraction: float = 0.3
    prune_schedule: str = "cosine"
    threshold_tau: float = 1e-3
    growth_batch_size: int = 128
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    adversary_lr: float = 1e-3
    baseline_finetune_epochs: int = 20
    seed: int = 0

    def validate(self) -> "RunConfig":
        checks = [
            (self.mode in MODE_KINDS, "mode", f"must be one of {sorted(MODE_KINDS)}"),
            (0.0 < self.omega <= 1.0, "omega", "must be in (0, 1]"),
            (self.lam > 0, "lambda", "must be > 0"),
            (0.0 <= self.alpha <= 1.0, "alpha", "must be in [0, 1]"),
            (self.beta >= 0, "beta", "must be >= 0"),
            (self.total_rounds >= 1, "total_rounds", "must be >= 1"),
            (self.iterations_per_round >= 1, "iterations_per_round", "must be >= 1"),
            (self.batch_size >= 1, "batch_size", "must be >= 1"),
            (all(h >= 1 for h in self.hidden_dims), "hidden_dims", "entries must be >= 1"),
            (self.lr > 0, "lr", "must be > 0"),
            (0.0 <= self.momentum < 1.0, "momentum", "must be in [0, 1)"),
            (0.0 <= self.prune_fraction <= 1.0, "prune_fraction", "must be in [0, 1]"),
            (self.prune_schedule in ("cosine", "constant"), "prune_schedule", "must be 'cosine' or 'constant'"),
            (self.threshold_tau >= 0, "threshold_tau", "must be >= 0"),
            (self.growth_batch_size >= 1, "growth_batch_size", "must be >= 1"),
            (self.finetune.epochs >= 0, "finetune.epochs", "must be >= 0"),
            (self.finetune.lr > 0, "finetune.lr", "must be > 0"),
            (self.attack.epochs >= 1, "attack.epochs", "must be >= 1"),
            (self.attack.finetune_epochs >= 0, "attack.finetune_epochs", "must be >= 0"),
            (self.attack.lr > 0, "attack.lr", "must be > 0"),
            (self.baseline_finetune_epochs >= 0, "baseline_finetune_epochs", "must be >= 0"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        return self

    @property
    def attack_kinds(self) -> tuple[str, ...]:
        return MODE_KINDS[self.mode]

    def lr_at(self, round_index: int) -> float:
        passed = sum(round_index >= m * self.total_rounds for m in self.lr_milestones)
        return self.lr * self.lr_gamma ** passed

    def train_optimizer(self, round_index: int) -> OptimizerConfig:
        return OptimizerConfig("sgd", lr=self.lr_at(round_index), momentum=self.momentum)

    def rng(self, *tags: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, *tags])


@dataclass
class RoundRecord:
    round: int
    prune_fraction: float
    candidates: list[EvalReport]
    selected: int
    active_before: int
    active_after: int
    density: float
    mask_hash: str
    audits: dict[str, bool]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def selected_report(self) -> EvalReport:
        return next(c for c in self.candidates if c.candidate_id == self.selected)

    def to_dict(self) -> dict:
        return {
            "round": self.round, "prune_fraction": self.prune_fraction,
            "candidates": [c.to_dict() for c in self.candidates], "selected": self.selected,
            "active_before": self.active_before, "active_after": self.active_after,
            "density": self.density, "mask_hash": self.mask_hash, "audits": dict(self.audits),
            "timings": dict(self.timings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(int(d["round"]), float(d["prune_fraction"]),
                   [EvalReport.from_dict(c) for c in d["candidates"]], int(d["selected"]),
                   int(d["active_before"]), int(d["active_after"]), float(d["density"]), d["mask_hash"],
                   {k: bool(v) for k, v in d["audits"].items()}, dict(d.get("timings", {})))


@dataclass
class RunTrace:
    mode: str
    kind: str = "safecompress"
    rounds: list[RoundRecord] = field(default_factory=list)
    final: EvalReport | None = None
    final_mask_hash: str = ""
    lam: float = 1.0
    alpha: float = 0.5

    @property
    def strategy_sequence(self) -> list[str]:
        return [r.selected_report.strategy_label for r in self.rounds]

    def audits_pass(self) -> bool:
        return all(all(r.audits.values()) for r in self.rounds)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "kind": self.kind, "lambda": self.lam, "alpha": self.alpha,
            "rounds": [r.to_dict() for r in self.rounds],
            "final": self.final.to_dict() if self.final else None,
            "final_mask_hash": self.final_mask_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        return cls(d["mode"], d.get("kind", "safecompress"), [RoundRecord.from_dict(r) for r in d["rounds"]],
                   EvalReport.from_dict(d["final"]) if d.get("final") else None, d.get("final_mask_hash", ""),
                   float(d.get("lambda", 1.0)), float(d.get("alpha", 0.5)))


# --------------------------------------------------------------------------
# adversarial regularisation
# --------------------------------------------------------------------------
@dataclass
class AdversarialState:
    """A black-box adversary trained jointly with the target, plus its optimiser."""
    adversary: AttackModel
    optimizer: Optimizer

    @classmethod
    def create(cls, target: TargetModel, lr: float = 1e-3, hidden: int = 64, seed=None) -> "AdversarialState":
        adv = AttackModel.for_target("black_box", target, hidden, seed)
        return cls(adv, make_optimizer(adv.parameters(), OptimizerConfig("adam", lr=lr)))


def _adversary_logits(target: TargetModel, adversary: AttackModel, x, y, through_target: bool):
    logits = target.forward(x) if through_target else T.Tensor(target.logits(x))
    probs = T.softmax(logits)
    return adversary.forward({"prob": probs, "label": one_hot(y, target.n_classes)})


def adversarial_objective(target: TargetModel, adversary: AttackModel, x, y, member_flags, beta: float) -> float:
    """Task loss on members plus ``beta`` times the adversary's mean gain."""
    flags = _check_flags(member_flags, len(y))
    ce = T.cross_entropy(T.Tensor(target.logits(x[flags])), y[flags]).item()
    z = _adversary_logits(target, adversary, x, y, False).data[:, 0]
    gain = -np.mean(np.maximum(z, 0) - z * flags + np.log1p(np.exp(-np.abs(z))))
    return ce + beta * gain


def _check_flags(member_flags, n: int) -> np.ndarray:
    if member_flags is None:
        raise ValueError("adversarial step needs membership flags")
    flags = np.asarray(member_flags, dtype=bool)
    if flags.shape != (n,):
        raise ValueError(f"expected {n} membership flags, got shape {flags.shape}")
    if not flags.any():
        raise ValueError("adversarial step needs at least one member sample")
    return flags


def adversarial_train_step(model: TargetModel, state: AdversarialState, batch: tuple[np.ndarray, np.ndarray],
                           member_flags, beta: float, target_opt: Optimizer,
                           inner_steps: int = 1) -> tuple[TargetModel, AdversarialState]:
    """One min-max step.

    The adversary first takes ``inner_steps`` ascent steps on its gain with
    the target frozen; then the target descends on
    ``CE(members) + beta * gain`` with the adversary frozen.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    x, y = batch
    flags = _check_flags(member_flags, len(y))
    adv = state.adversary
    for _ in range(inner_steps):
        # minimising BCE on the flags == maximising the mean gain
        T.bce_with_logits(_adversary_logits(model, adv, x, y, False), flags.astype(float)).backward()
        state.optimizer.step()

    loss = T.cross_entropy(model.forward(x[flags]), y[flags])
    if beta:
        z = _adversary_logits(model, adv, x, y, True)
        loss = loss - beta * T.bce_with_logits(z, flags.astype(float))
    loss.backward()
    for p in adv.parameters():
        p.grad = None
    target_opt.step()
    model.iterations_done += 1
    return model, state


def adversarial_train_rounds(model: TargetModel, state: AdversarialState, members: LabeledDataset,
                             reference: LabeledDataset, iterations: int, batch_size: int,
                             optimizer: OptimizerConfig, beta: float, seed=None) -> TargetModel:
    """``iterations`` min-max steps; each batch pairs training rows with reference rows."""
    if len(members) == 0 or len(reference) == 0:
        raise DataError("adversarial training needs members and reference data")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    opt = make_optimizer(model.parameters(), optimizer, model.weight_masks())
    mb = minibatches(len(members), batch_size, rng)
    rb = minibatches(len(reference), batch_size, rng)
    for _ in range(iterations):
        mi, ri = next(mb), next(rb)
        x = np.concatenate([members.features[mi], reference.features[ri]])
        y = np.concatenate([members.labels[mi], reference.labels[ri]])
        flags = np.concatenate([np.ones(len(mi), bool), np.zeros(len(ri), bool)])
        adversarial_train_step(model, state, (x, y), flags, beta, opt)
    return model


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------
def evaluate_model(model: TargetModel, split: MembershipSplit, test: LabeledDataset, config: RunConfig,
                   candidate_id: int = -1, strategy=None, attackers: dict | None = None,
                   seed_tags: tuple[int, ...] = ()) -> EvalReport:
    """Score ``model`` against the mode's attack battery.

    Without ``attackers`` a fresh attacker per kind is trained from scratch on
    the known halves, as an outside adversary would.
    """
    mia = {}
    for ki, kind in enumerate(config.attack_kinds):
        att = attackers[kind] if attackers else train_attacker(
            kind, model, split, config.attack, config.rng(_EVAL, ki, *seed_tags))
        mia[kind] = 100.0 * mia_accuracy(att, model, split, seed=config.seed)
    return score_report(candidate_id, strategy, 100.0 * task_accuracy(model, test), mia,
                        config.lam, config.alpha, model.mask.density)


def _dims(config: RunConfig, train: LabeledDataset) -> list[int]:
    return [train.n_features, *config.hidden_dims, train.n_classes]


def membership_split(config: RunConfig, train: LabeledDataset, test: LabeledDataset) -> MembershipSplit:
    """The split a run with ``config`` uses; lets a saved model be re-attacked later."""
    return make_split(train, test, config.rng(_SPLIT))


def _check_inputs(config: RunConfig, train: LabeledDataset, test: LabeledDataset):
    config.validate()
    if len(train) == 0 or len(test) == 0:
        raise DataError("train and test data must be nonempty")
    if train.n_classes != test.n_classes or train.n_features != test.n_features:
        raise DataError("train and test data disagree on feature or class count")


def run_safecompress(config: RunConfig, train: LabeledDataset, test: LabeledDataset,
                     progress: Callable[[RoundRecord], None] | None = None,
                     evaluate_final: bool = True) -> tuple[TargetModel, RunTrace]:
    _check_inputs(config, train, test)
    split = membership_split(config, train, test)
    model = build_mlp(_dims(config, train), config.omega, config.rng(_INIT))
    kinds = config.attack_kinds
    adv_state = AdversarialState.create(model, config.adversary_lr, config.attack.hidden, config.rng(_ADV)) \
        if config.adversarial_training else None
    trace = RunTrace(config.mode, lam=config.lam, alpha=config.alpha)

    for r in range(config.total_rounds):
        try:
            record = _round(r, model, config, train, test, split, kinds, adv_state)
        except Exception as exc:
            raise RoundError(r, exc) from exc
        model = record.pop("model")
        rec = RoundRecord(**record)
        trace.rounds.append(rec)
        log.info("round %d: selected %s (TM %.4f), density %.4f", r, rec.selected_report.strategy_label,
                 rec.selected_report.tm_score_combined, rec.density)
        if progress:
            progress(rec)

    trace.final_mask_hash = model.mask.digest()
    if evaluate_final:
        trace.final = evaluate_model(model, split, test, config, seed_tags=(config.total_rounds,))
    return model, trace


def _round(r: int, model: TargetModel, config: RunConfig, train, test, split, kinds, adv_state) -> dict:
    timings = {}
    t0 = time.perf_counter()
    if adv_state is not None:
        adversarial_train_rounds(model, adv_state, train, split.known_test, config.iterations_per_round,
                                 config.batch_size, config.train_optimizer(r), config.beta, config.rng(_TRAIN, r))
    else:
        train_rounds(model, train, config.iterations_per_round, config.batch_size, config.train_optimizer(r),
                     config.rng(_TRAIN, r))
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    parents = {k: train_attacker(k, model, split, config.attack, config.rng(_ATTACK, r, ki))
               for ki, k in enumerate(kinds)}
    timings["attack"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p = prune_fraction_at(r, config.total_rounds, config.prune_fraction, config.prune_schedule)
    grow_rows = config.rng(_GROWTH, r).choice(len(train), min(config.growth_batch_size, len(train)), replace=False)
    growth_batch = train.batch(np.sort(grow_rows))
    active_before = model.mask.active_count
    candidates, reports = [], []
    for ci, strategy in enumerate(STRATEGIES):
        cand = sparse_update(model, strategy, p, growth_batch=growth_batch, tau=config.threshold_tau,
                             seed=config.rng(_UPDATE, r, ci))
        fine_tune(cand, train, config.finetune, config.rng(_FINETUNE, r, ci))
        tuned = {k: finetune_attacker(parents[k], cand, split, config.attack.finetune_epochs, config.attack,
                                      config.rng(_ATTACK_FT, r, ci, ki))
                 for ki, k in enumerate(kinds)}
        candidates.append(cand)
        reports.append(evaluate_model(cand, split, test, config, ci, strategy, attackers=tuned))
    timings["candidates"] = time.perf_counter() - t0

    best = select_best(reports)
    winner = candidates[best.candidate_id]
    audits = {
        "sparsity_bound": all(c.mask.within_budget() for c in candidates),
        "cardinality": all(c.mask.active_count == active_before for c in candidates),
        "mask_weight_consistency": all(c.mask_violations() == 0 for c in candidates),
        "four_candidates": len(candidates) == len(STRATEGIES),
    }
    return dict(model=winner, round=r, prune_fraction=p, candidates=reports, selected=best.candidate_id,
                active_before=active_before, active_after=winner.mask.active_count,
                density=winner.mask.density, mask_hash=winner.mask.digest(), audits=audits, timings=timings)


# --------------------------------------------------------------------------
# baseline
# --------------------------------------------------------------------------
def prune_to_density(model: TargetModel, omega: float) -> TargetModel:
    """One-shot per-layer magnitude pruning so each layer keeps ``floor(omega * size)``."""
    layers, weights = [], []
    for m, w in zip(model.mask.layers, model.weights):
        keep = math.floor(omega * m.size + 1e-9)
        new_m, new_w = magnitude_prune(m, w.data, max(0, int(m.sum()) - keep))
        layers.append(new_m)
        weights.append(new_w)
    for w, new_w in zip(model.weights, weights):
        w.data = new_w
    model.mask = SparseMask(layers, omega)
    return model


def run_baseline_prune_finetune(config: RunConfig, train: LabeledDataset, test: LabeledDataset,
                                evaluate_final: bool = True) -> tuple[TargetModel, RunTrace]:
    """Dense pretraining for the same step budget, magnitude prune, Adam fine-tune."""
    _check_inputs(config, train, test)
    split = membership_split(config, train, test)
    model = build_mlp(_dims(config, train), 1.0, config.rng(_INIT))
    for r in range(config.total_rounds):
        train_rounds(model, train, config.iterations_per_round, config.batch_size, config.train_optimizer(r),
                     config.rng(_TRAIN, r))
    active_before = model.mask.active_count
    if config.omega < 1.0:
        prune_to_density(model, config.omega)
        ft = FineTuneConfig(config.baseline_finetune_epochs, config.finetune.lr, config.finetune.batch_size,
                            config.finetune.weight_decay, config.finetune.betas)
        fine_tune(model, train, ft, config.rng(_FINETUNE, config.total_rounds))
    trace = RunTrace(config.mode, kind="baseline", lam=config.lam, alpha=config.alpha)
    trace.final_mask_hash = model.mask.digest()
    if evaluate_final:
        trace.final = evaluate_model(model, split, test, config, seed_tags=(config.total_rounds,))
        report = EvalReport(0, None, trace.final.task_acc_pct, trace.final.mia_acc_pct, trace.final.tm_scores,
                            trace.final.tm_score_combined, trace.final.sparsity)
        trace.rounds.append(RoundRecord(
            0, 0.0, [report], 0, active_before, model.mask.active_count, model.mask.density,
            model.mask.digest(),
            {"sparsity_bound": model.mask.within_budget(), "mask_weight_consistency": model.mask_violations() == 0}))
    return model, trace
