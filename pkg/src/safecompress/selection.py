"""Trade-off scores and candidate selection.

Accuracies are in percent (0-100).  The score ``task**lam / mia`` is only
representation-independent at ``lam == 1``; for any other exponent the
percent convention is part of the definition.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .sparse import STRATEGIES, UpdateStrategy

ATTACK_KINDS = ("black_box", "white_box")


def tm_score(task_acc_pct: float, mia_acc_pct: float, lam: float = 1.0) -> float:
    if mia_acc_pct <= 0:
        raise ZeroDivisionError("MIA accuracy must be positive")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return task_acc_pct ** lam / mia_acc_pct


def tm_score_multi(tm_b: float, tm_w: float, alpha: float = 0.5) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * tm_b + (1.0 - alpha) * tm_w


@dataclass
class EvalReport:
    candidate_id: int
    strategy: UpdateStrategy | None
    task_acc_pct: float
    mia_acc_pct: dict[str, float]
    tm_scores: dict[str, float] = field(default_factory=dict)
    tm_score_combined: float = float("nan")
    sparsity: float = float("nan")

    @property
    def strategy_label(self) -> str:
        return self.strategy.label if self.strategy is not None else "dense"

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "strategy": self.strategy_label,
            "task_acc_pct": self.task_acc_pct,
            "mia_acc_pct": dict(self.mia_acc_pct),
            "tm_scores": dict(self.tm_scores),
            "tm_score_combined": self.tm_score_combined,
            "sparsity": self.sparsity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        label = d["strategy"]
        return cls(int(d["candidate_id"]), None if label == "dense" else UpdateStrategy.parse(label),
                   float(d["task_acc_pct"]), {k: float(v) for k, v in d["mia_acc_pct"].items()},
                   {k: float(v) for k, v in d["tm_scores"].items()}, float(d["tm_score_combined"]),
                   float(d["sparsity"]))


def score_report(candidate_id: int, strategy: UpdateStrategy | None, task_acc_pct: float,
                 mia_acc_pct: dict[str, float], lam: float = 1.0, alpha: float = 0.5,
                 sparsity: float = float("nan")) -> EvalReport:
    """Fill in per-attack scores and the combined score.

    With both attacks present the combined score is the ``alpha`` blend,
    otherwise it is the single attack's score.
    """
    unknown = set(mia_acc_pct) - set(ATTACK_KINDS)
    if unknown or not mia_acc_pct:
        raise ValueError(f"MIA accuracies must be keyed by {ATTACK_KINDS}, got {sorted(mia_acc_pct)}")
    tms = {k: tm_score(task_acc_pct, v, lam) for k, v in mia_acc_pct.items()}
    if len(tms) == 2:
        combined = tm_score_multi(tms["black_box"], tms["white_box"], alpha)
    else:
        combined = next(iter(tms.values()))
    return EvalReport(candidate_id, strategy, task_acc_pct, dict(mia_acc_pct), tms, combined, sparsity)


def _order(strategy: UpdateStrategy | None) -> int:
    return STRATEGIES.index(strategy) if strategy in STRATEGIES else len(STRATEGIES)


def select_best(reports: Sequence[EvalReport]) -> EvalReport:
    """Highest combined score; ties go to the earlier strategy in ``STRATEGIES``."""
    if not reports:
        raise ValueError("no candidates to select from")
    best = reports[0]
    for r in reports[1:]:
        if r.tm_score_combined > best.tm_score_combined or (
                r.tm_score_combined == best.tm_score_combined and _order(r.strategy) < _order(best.strategy)):
            best = r
    return best
