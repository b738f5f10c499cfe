"""Dynamic sparse training with simulated membership-inference safety tests."""
from .attack import (AttackConfig, AttackModel, MembershipSplit, finetune_attacker, make_split, mia_accuracy,
                     mia_gain, train_attacker)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ExperimentSpec, load_config
from .data import DataError, LabeledDataset, SyntheticSpec, generate_synthetic, load_csv
from .framework import (ConfigError, RoundError, RunConfig, RunTrace, adversarial_train_step, evaluate_model,
                        run_baseline_prune_finetune, run_safecompress)
from .model import FineTuneConfig, TargetModel, build_mlp, fine_tune, task_accuracy, train_rounds
from .report import emit_report
from .selection import EvalReport, select_best, tm_score, tm_score_multi
from .sparse import STRATEGIES, SparseMask, UpdateStrategy, er_init, sparse_update
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackModel", "CheckpointError", "ConfigError", "DataError", "EvalReport", "ExperimentSpec",
    "FineTuneConfig", "LabeledDataset", "MembershipSplit", "RoundError", "RunConfig", "RunTrace", "STRATEGIES",
    "SparseMask", "SyntheticSpec", "TargetModel", "Tensor", "UpdateStrategy", "adversarial_train_step",
    "build_mlp", "emit_report", "er_init", "evaluate_model", "fine_tune", "finetune_attacker", "generate_synthetic",
    "load_checkpoint", "load_config", "load_csv", "make_split", "mia_accuracy", "mia_gain",
    "run_baseline_prune_finetune", "run_safecompress", "save_checkpoint", "select_best", "sparse_update",
    "task_accuracy", "tm_score", "tm_score_multi", "train_attacker", "train_rounds",
]
