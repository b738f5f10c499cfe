"""CSV/JSON rendering of run traces.

``rounds.csv`` has one row per candidate and a ``selected:<strategy>`` marker
row per round that repeats the winner's numbers.  Floats are written with
``repr`` so re-parsing gives back the exact values; cells for an attack kind
the run did not use are left empty.  ``tm_m`` is the score selection used:
the blend when both attacks ran, otherwise the single attack's score.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .framework import RunTrace
from .selection import EvalReport
from .sparse import UpdateStrategy

COLUMNS = ("round", "strategy", "task_acc_pct", "mia_acc_b_pct", "mia_acc_w_pct", "tm_b", "tm_w", "tm_m",
           "sparsity")
SELECTED_PREFIX = "selected:"


def _cell(d: dict, key: str) -> str:
    return repr(float(d[key])) if key in d else ""


def report_row(round_index: int, report: EvalReport, selected: bool = False) -> dict[str, str]:
    label = report.strategy_label
    return {
        "round": str(round_index),
        "strategy": SELECTED_PREFIX + label if selected else label,
        "task_acc_pct": repr(float(report.task_acc_pct)),
        "mia_acc_b_pct": _cell(report.mia_acc_pct, "black_box"),
        "mia_acc_w_pct": _cell(report.mia_acc_pct, "white_box"),
        "tm_b": _cell(report.tm_scores, "black_box"),
        "tm_w": _cell(report.tm_scores, "white_box"),
        "tm_m": repr(float(report.tm_score_combined)),
        "sparsity": repr(float(report.sparsity)),
    }


def trace_rows(trace: RunTrace) -> list[dict[str, str]]:
    rows = []
    for rec in trace.rounds:
        rows += [report_row(rec.round, c) for c in rec.candidates]
        rows.append(report_row(rec.round, rec.selected_report, selected=True))
    return rows


def write_rounds_csv(trace: RunTrace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(trace_rows(trace))
    return path


def parse_row(row: dict[str, str]) -> tuple[int, bool, EvalReport]:
    """Inverse of :func:`report_row`; candidate ids are not stored and come back as -1."""
    label = row["strategy"]
    selected = label.startswith(SELECTED_PREFIX)
    if selected:
        label = label[len(SELECTED_PREFIX):]
    mia, tms = {}, {}
    for kind, mcol, tcol in (("black_box", "mia_acc_b_pct", "tm_b"), ("white_box", "mia_acc_w_pct", "tm_w")):
        if row[mcol] != "":
            mia[kind] = float(row[mcol])
            tms[kind] = float(row[tcol])
    strategy = None if label == "dense" else UpdateStrategy.parse(label)
    report = EvalReport(-1, strategy, float(row["task_acc_pct"]), mia, tms, float(row["tm_m"]),
                        float(row["sparsity"]))
    return int(row["round"]), selected, report


def read_rounds_csv(path) -> list[tuple[int, bool, EvalReport]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        return [parse_row(r) for r in reader]


def _finite(x):
    return x if isinstance(x, float) and math.isfinite(x) else None


def summary(trace: RunTrace) -> dict:
    out = {
        "kind": trace.kind,
        "mode": trace.mode,
        "lambda": trace.lam,
        "alpha": trace.alpha,
        "rounds": len(trace.rounds),
        "strategy_sequence": trace.strategy_sequence,
        "final_mask_hash": trace.final_mask_hash,
        "audits_pass": trace.audits_pass(),
        "final": trace.final.to_dict() if trace.final else None,
    }
    if trace.rounds:
        last = trace.rounds[-1]
        out["final_density"] = _finite(last.density)
        out["timings_total_s"] = {k: sum(r.timings.get(k, 0.0) for r in trace.rounds)
                                  for k in sorted({k for r in trace.rounds for k in r.timings})}
    return out


def emit_report(trace: RunTrace, out_dir, write_trace: bool = True) -> dict[str, Path]:
    """Write ``rounds.csv`` and ``summary.json`` (plus ``trace.json``) to ``out_dir``."""
    if not trace.rounds:
        raise ValueError("trace has no rounds to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"rounds": write_rounds_csv(trace, out_dir / "rounds.csv")}
    files["summary"] = out_dir / "summary.json"
    files["summary"].write_text(json.dumps(summary(trace), indent=2, sort_keys=True) + "\n")
    if write_trace:
        files["trace"] = out_dir / "trace.json"
        files["trace"].write_text(json.dumps(trace.to_dict(), indent=2, sort_keys=True) + "\n")
    return files


def load_trace(path) -> RunTrace:
    return RunTrace.from_dict(json.loads(Path(path).read_text()))
