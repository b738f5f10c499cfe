"""Simulated membership-inference attackers.

The attacker learns from the known halves of a :class:`MembershipSplit`
(known_train = members, known_test = non-members) and is scored on the
unknown halves.  Black-box attackers see the target's probability vector and
the one-hot label; white-box attackers also see the per-sample loss and the
gradient of that loss w.r.t. the target's last weight matrix.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import tensor as T
from .data import DataError, LabeledDataset
from .model import TargetModel
from .nn import MLP
from .optim import OptimizerConfig, make_optimizer
from .tensor import Tensor

KINDS = ("black_box", "white_box")
PROB_CLAMP = 1e-12

STREAMS = {
    "black_box": ("prob", "label"),
    "white_box": ("prob", "loss", "grad", "label"),
}


@dataclass
class MembershipSplit:
    known_train: LabeledDataset
    known_test: LabeledDataset
    unknown_train: LabeledDataset
    unknown_test: LabeledDataset


def make_split(train: LabeledDataset, test: LabeledDataset, seed) -> MembershipSplit:
    """Seeded, class-stratified halving of the training and held-out data.

    Each class is split as evenly as its count allows, so the known and
    unknown halves share class proportions.  A plain random halving of a
    dataset with fixed class counts makes them anti-correlated, and an
    attacker that reads the label would pick that up as a spurious signal.
    The known half gets ``len // 2`` rows.
    """
    if len(train) == 0 or len(test) == 0:
        raise DataError("both datasets must be nonempty")
    rng = np.random.default_rng(seed)

    def halves(ds):
        perm = rng.permutation(len(ds))
        grouped = perm[np.argsort(ds.labels[perm], kind="stable")]
        # alternate within the class-grouped order; odd positions are known
        known, unknown = grouped[1::2], grouped[0::2]
        return ds.subset(np.sort(known)), ds.subset(np.sort(unknown))

    known_train, unknown_train = halves(train)
    known_test, unknown_test = halves(test)
    return MembershipSplit(known_train, known_test, unknown_train, unknown_test)


# --------------------------------------------------------------------------
# target-side features
# --------------------------------------------------------------------------
def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"label out of range [0, {n_classes})")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def bbox_features(target: TargetModel, x: np.ndarray, y: np.ndarray) -> dict[str, np.ndarray]:
    onehot = one_hot(y, target.n_classes)
    return {"prob": target.predict_proba(np.atleast_2d(x)), "label": onehot}


def wbox_features(target: TargetModel, x: np.ndarray, y: np.ndarray) -> dict[str, np.ndarray]:
    x = np.atleast_2d(x)
    onehot = one_hot(y, target.n_classes)
    hidden, logits = target.hidden_and_logits(x)
    lse = T.logsumexp(logits)
    probs = np.exp(logits - lse[:, None])
    loss = lse - (logits * onehot).sum(axis=1)
    # per-sample dCE/dW_last = outer(hidden, probs - onehot), restricted to live weights
    grad = np.einsum("ni,nj->nij", hidden, probs - onehot) * target.mask.layers[-1]
    return {"prob": probs, "loss": loss[:, None], "grad": grad.reshape(len(x), -1), "label": onehot}


def extract_bbox_features(target: TargetModel, sample, label) -> tuple[np.ndarray, np.ndarray]:
    f = bbox_features(target, sample, [label])
    return f["prob"][0], f["label"][0]


def extract_wbox_features(target: TargetModel, sample, label):
    f = wbox_features(target, sample, [label])
    return f["prob"][0], float(f["loss"][0, 0]), f["grad"][0], f["label"][0]


def attack_features(kind: str, target: TargetModel, data: LabeledDataset) -> dict[str, np.ndarray]:
    if kind == "black_box":
        return bbox_features(target, data.features, data.labels)
    if kind == "white_box":
        return wbox_features(target, data.features, data.labels)
    raise ValueError(f"unknown attack kind {kind!r}")


def stream_widths(kind: str, target: TargetModel) -> dict[str, int]:
    c = target.n_classes
    widths = {"prob": c, "label": c, "loss": 1, "grad": target.layer_dims[-2] * c}
    return {s: widths[s] for s in STREAMS[kind]}


# --------------------------------------------------------------------------
# attack network
# --------------------------------------------------------------------------
class Attacker(Protocol):
    kind: str

    def membership_proba(self, target: TargetModel, data: LabeledDataset) -> np.ndarray: ...


class AttackModel:
    """One small MLP per input stream, concatenated into a fusion MLP."""

    def __init__(self, kind: str, widths: dict[str, int], hidden: int = 64, seed=None):
        if kind not in KINDS:
            raise ValueError(f"unknown attack kind {kind!r}")
        rng = np.random.default_rng(seed)
        self.kind = kind
        self.widths = dict(widths)
        self.streams = {name: MLP([w, hidden, hidden], rng, name=f"{name}_stream", final_relu=True)
                        for name, w in widths.items()}
        self.fusion = MLP([hidden * len(widths), hidden, 1], rng, name="fusion")

    @classmethod
    def for_target(cls, kind: str, target: TargetModel, hidden: int = 64, seed=None) -> "AttackModel":
        return cls(kind, stream_widths(kind, target), hidden, seed)

    def parameters(self) -> list[Tensor]:
        params = [p for s in self.streams.values() for p in s.parameters()]
        return params + self.fusion.parameters()

    def forward(self, features: dict) -> Tensor:
        """Membership logit, shape (n, 1)."""
        parts = [self.streams[name](features[name]) for name in self.streams]
        return self.fusion(T.concat(parts, axis=1))

    __call__ = forward

    def proba(self, features: dict[str, np.ndarray]) -> np.ndarray:
        return T._stable_sigmoid(self.forward(features).data[:, 0])

    def membership_proba(self, target: TargetModel, data: LabeledDataset) -> np.ndarray:
        return self.proba(attack_features(self.kind, target, data))

    def copy(self) -> "AttackModel":
        return copy.deepcopy(self)

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]


@dataclass
class AttackConfig:
    epochs: int = 30
    finetune_epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 128
    hidden: int = 64


def balanced_batches(n_members: int, n_nonmembers: int, batch_size: int, rng: np.random.Generator):
    """One epoch of (member_idx, nonmember_idx) pairs of equal length.

    The epoch covers the larger side once; the smaller side is re-permuted
    whenever it runs out.
    """
    if n_members == 0 or n_nonmembers == 0:
        raise DataError("attacker training needs members and non-members")
    half = max(1, min(batch_size // 2, n_members, n_nonmembers))
    n_batches = math.ceil(max(n_members, n_nonmembers) / half)

    def draw(n):
        reps = math.ceil(n_batches * half / n)
        return np.concatenate([rng.permutation(n) for _ in range(reps)])[:n_batches * half].reshape(n_batches, half)

    yield from zip(draw(n_members), draw(n_nonmembers))


def _fit(attacker: AttackModel, members: dict, nonmembers: dict, epochs: int,
         config: AttackConfig, rng: np.random.Generator, batch_log: list | None = None) -> AttackModel:
    opt = make_optimizer(attacker.parameters(), OptimizerConfig("adam", lr=config.lr))
    n_m, n_n = len(members["label"]), len(nonmembers["label"])
    for _ in range(epochs):
        for mi, ni in balanced_batches(n_m, n_n, config.batch_size, rng):
            feats = {k: np.concatenate([members[k][mi], nonmembers[k][ni]]) for k in members}
            targets = np.concatenate([np.ones(len(mi)), np.zeros(len(ni))])
            if batch_log is not None:
                batch_log.append((len(mi), len(ni)))
            T.bce_with_logits(attacker.forward(feats), targets).backward()
            opt.step()
    return attacker


def train_attacker(kind: str, target: TargetModel, split: MembershipSplit, config: AttackConfig | None = None,
                   seed=None, batch_log: list | None = None) -> AttackModel:
    """Train a fresh attacker against ``target`` on the known halves only."""
    config = config or AttackConfig()
    members, nonmembers = split.known_train, split.known_test
    if len(members) == 0 or len(nonmembers) == 0:
        raise DataError("a known half of the split is empty")
    rng = np.random.default_rng(seed)
    attacker = AttackModel.for_target(kind, target, config.hidden, rng)
    return _fit(attacker, attack_features(kind, target, members), attack_features(kind, target, nonmembers),
                config.epochs, config, rng, batch_log)


def finetune_attacker(attacker: AttackModel, target: TargetModel, split: MembershipSplit, epochs: int,
                      config: AttackConfig | None = None, seed=None) -> AttackModel:
    """Adapt a copy of ``attacker`` to a candidate target; the original is left alone."""
    config = config or AttackConfig()
    members, nonmembers = split.known_train, split.known_test
    if len(members) == 0 or len(nonmembers) == 0:
        raise DataError("a known half of the split is empty")
    tuned = attacker.copy()
    if epochs <= 0:
        return tuned
    kind = attacker.kind
    return _fit(tuned, attack_features(kind, target, members), attack_features(kind, target, nonmembers),
                epochs, config, np.random.default_rng(seed))


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------
def gain_from_proba(member_p: np.ndarray, nonmember_p: np.ndarray) -> float:
    """Log-likelihood of the membership labels; probabilities are clamped to
    ``[1e-12, 1 - 1e-12]`` so a saturated attacker yields a finite value."""
    mp = np.clip(member_p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    np_ = np.clip(nonmember_p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.log(mp).sum() + np.log1p(-np_).sum())


def mia_gain(attacker: Attacker, target: TargetModel, members: LabeledDataset,
             nonmembers: LabeledDataset) -> float:
    if len(members) == 0 or len(nonmembers) == 0:
        raise DataError("members and non-members must be nonempty")
    return gain_from_proba(attacker.membership_proba(target, members),
                           attacker.membership_proba(target, nonmembers))


def balanced_eval_sets(split: MembershipSplit, seed=0) -> tuple[LabeledDataset, LabeledDataset]:
    """Equal-size (members, non-members) drawn from the unknown halves.

    All of the smaller half is used; the larger one is subsampled (seeded).
    """
    mem, non = split.unknown_train, split.unknown_test
    if len(mem) == 0 or len(non) == 0:
        raise DataError("unknown halves must be nonempty")
    rng = np.random.default_rng(seed)
    n = min(len(mem), len(non))
    if len(mem) > n:
        mem = mem.subset(np.sort(rng.choice(len(mem), n, replace=False)))
    if len(non) > n:
        non = non.subset(np.sort(rng.choice(len(non), n, replace=False)))
    return mem, non


def mia_accuracy(attacker: Attacker, target: TargetModel, split: MembershipSplit, seed=0) -> float:
    """Threshold-0.5 accuracy on a balanced member/non-member evaluation set."""
    mem, non = balanced_eval_sets(split, seed)
    hits = np.count_nonzero(attacker.membership_proba(target, mem) >= 0.5)
    hits += np.count_nonzero(attacker.membership_proba(target, non) < 0.5)
    return hits / (len(mem) + len(non))
