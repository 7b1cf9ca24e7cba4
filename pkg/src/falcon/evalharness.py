"""Desk-scale evaluation runs: retriever, scorer, and pipeline benchmarks.

Reports are deterministic given dataset + provider + seed and come in two
shapes: a machine-readable dict (dumped as JSON) and a rendered text
table. Published reference numbers appear only in ``reference_context``
rows for orientation; no pass/fail logic ever reads them.
"""
from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable

from falcon.cti import DatasetRecord
from falcon.embeddings import Embedder
from falcon.feedback import ValidationStage
from falcon.orchestrator import Orchestrator
from falcon.retrieval import (
    RetrievalMethod,
    RuleIndex,
    mean_average_precision,
    recall_at_k,
    retrieve,
)
from falcon.rules.model import RuleMedium
from falcon.scorer import ScorerCalibration, calibrate_threshold, diagonal_recall, similarity_matrix

# Reference results for orientation in reports (never asserted).
RETRIEVER_REFERENCE_CONTEXT = [
    {"method": "CTI-Rule bi-encoder", "medium": "snort", "recall_at_10_pct": 35.77, "map_pct": 28.24},
    {"method": "CTI-Rule bi-encoder", "medium": "yara", "recall_at_10_pct": 34.75, "map_pct": 27.37},
    {"method": "BM25", "medium": "snort", "recall_at_10_pct": 33.23, "map_pct": 25.41},
    {"method": "BM25", "medium": "yara", "recall_at_10_pct": 34.38, "map_pct": 21.85},
    {"method": "TF-IDF + Cosine", "medium": "snort", "recall_at_10_pct": 33.92, "map_pct": 25.12},
    {"method": "TF-IDF + Cosine", "medium": "yara", "recall_at_10_pct": 33.91, "map_pct": 21.32},
]

SCORER_REFERENCE_CONTEXT = [
    {"model": "CTI-Rule bi-encoder", "medium": "snort", "diagonal_recall": 0.956, "thresholded_f1": 0.941},
    {"model": "CTI-Rule bi-encoder", "medium": "yara", "diagonal_recall": 0.930, "thresholded_f1": 0.823},
]


class EvalError(Exception):
    pass


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(cells: Iterable[str]) -> str:
        return " | ".join(str(c).ljust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(headers), sep, *[fmt(r) for r in rows]])


# --------------------------------------------------------------------------
# Retriever benchmark

def eval_retriever(
    records: list[DatasetRecord],
    indexes: dict[RuleMedium, RuleIndex],
    methods: list[RetrievalMethod],
    k: int = 10,
    embedder: Embedder | None = None,
    include_ground_truth: bool = False,
    ground_truth_ids: dict[str, str] | None = None,
) -> dict:
    """Recall@k and MAP per method and medium over the dataset's relevance lists.

    ``include_ground_truth`` additionally counts each record's own rule
    (mapped through ``ground_truth_ids``: pair_id -> rule id) as relevant.
    """
    per_method: dict[str, dict[str, dict[str, float]]] = {}
    for method in methods:
        per_medium: dict[str, dict[str, float]] = {}
        for medium in RuleMedium:
            subset = [r for r in records if r.medium is medium]
            if not subset:
                continue
            index = indexes[medium]
            results: list[list[str]] = []
            relevants: list[set[str]] = []
            for record in subset:
                relevant = set(record.related_outdated_rule_ids)
                if include_ground_truth and ground_truth_ids:
                    gt = ground_truth_ids.get(record.pair_id)
                    if gt:
                        relevant.add(gt)
                if not relevant:
                    continue
                missing = [rid for rid in relevant if rid not in index.entries]
                if missing:
                    raise EvalError(
                        f"record {record.pair_id}: relevance id {missing[0]!r} not in index"
                    )
                ranked = retrieve(record.cti, index, method, k=max(k, len(index.entries)),
                                  embedder=embedder)
                results.append(ranked.ids())
                relevants.append(relevant)
            if not results:
                continue
            per_medium[medium.value] = {
                "recall_at_k": sum(
                    recall_at_k(res, rel, k) for res, rel in zip(results, relevants)
                ) / len(results),
                "map": mean_average_precision(results, relevants),
                "queries": len(results),
            }
        per_method[method.value] = per_medium
    return {
        "kind": "retriever_eval",
        "k": k,
        "include_ground_truth": include_ground_truth,
        "per_method": per_method,
        "reference_context": RETRIEVER_REFERENCE_CONTEXT,
    }


def render_retriever_report(report: dict) -> str:
    rows = []
    for method, per_medium in report["per_method"].items():
        for medium, metrics in per_medium.items():
            rows.append([
                method, medium,
                f"{metrics['recall_at_k'] * 100:.2f}",
                f"{metrics['map'] * 100:.2f}",
                str(metrics["queries"]),
            ])
    table = render_table(
        ["method", "medium", f"r@{report['k']} (%)", "MAP (%)", "queries"], rows
    )
    context_rows = [
        [c["method"], c["medium"], f"{c['recall_at_10_pct']:.2f}", f"{c['map_pct']:.2f}", "-"]
        for c in report["reference_context"]
    ]
    context = render_table(
        ["reference method", "medium", "r@10 (%)", "MAP (%)", ""], context_rows
    )
    return table + "\n\nReference values (context only, not asserted):\n" + context


# --------------------------------------------------------------------------
# Scorer benchmark

def eval_scorer(
    records: list[DatasetRecord],
    embedder: Embedder,
    calibration: ScorerCalibration | None = None,
    medium: RuleMedium | None = None,
) -> dict:
    """Diagonal recall and thresholded F1 over the CTI x rule matrix."""
    subset = [r for r in records if medium is None or r.medium is medium]
    if len(subset) < 2:
        raise EvalError("scorer evaluation needs at least 2 pairs for off-diagonal entries")
    calibration = calibration or ScorerCalibration()
    ctis = [r.cti for r in subset]
    rules = [r.ground_truth_rule for r in subset]
    matrix = similarity_matrix(ctis, rules, embedder)
    recall = diagonal_recall(matrix)
    n = matrix.shape[0]
    positives = [calibration.scale(matrix[i][i]) for i in range(n)]
    negatives = [
        calibration.scale(matrix[i][j]) for i in range(n) for j in range(n) if i != j
    ]
    result = calibrate_threshold(positives, negatives, base=calibration)
    return {
        "kind": "scorer_eval",
        "pairs": n,
        "medium": medium.value if medium else "all",
        "diagonal_recall": recall,
        "thresholded_f1": result.f1,
        "threshold": result.calibration.decision_threshold,
        "reference_context": SCORER_REFERENCE_CONTEXT,
    }


def render_scorer_report(report: dict) -> str:
    rows = [[
        report["medium"], str(report["pairs"]),
        f"{report['diagonal_recall']:.3f}",
        f"{report['thresholded_f1']:.3f}",
        f"{report['threshold']:.4f}",
    ]]
    table = render_table(["medium", "pairs", "diag recall", "thresh F1", "threshold"], rows)
    context_rows = [
        [c["model"], c["medium"], f"{c['diagonal_recall']:.3f}", f"{c['thresholded_f1']:.3f}", "-"]
        for c in report["reference_context"]
    ]
    context = render_table(["reference model", "medium", "diag recall", "thresh F1", ""], context_rows)
    return table + "\n\nReference values (context only, not asserted):\n" + context


# --------------------------------------------------------------------------
# End-to-end pipeline benchmark

def gate_score(run_feedback: list) -> int:
    """Map the final iteration's gate progression onto the 0-3 scale.

    0 = no parseable rule, 1 = syntax passed, 2 = + semantic, 3 = all gates.
    Monotone by construction: each later gate adds one point and gates run
    serially.
    """
    score = 0
    order = [ValidationStage.SYNTAX, ValidationStage.SEMANTIC, ValidationStage.PERFORMANCE]
    for stage in order:
        entry = next((f for f in run_feedback if f.stage is stage), None)
        if entry is None or not entry.status:
            break
        score += 1
    return score


def eval_pipeline(records: list[DatasetRecord], orchestrator: Orchestrator) -> dict:
    """Run the full pipeline per record and aggregate gate scores by difficulty."""
    per_record = []
    buckets: dict[str, list[int]] = defaultdict(list)
    for record in records:
        run = orchestrator.start_run(record.cti, record.medium)
        final_feedback = run.iterations[-1].feedback if run.iterations else []
        score = gate_score(final_feedback)
        difficulty = record.difficulty.value if record.difficulty else "Unrated"
        buckets[difficulty].append(score)
        per_record.append({
            "pair_id": record.pair_id,
            "medium": record.medium.value,
            "difficulty": difficulty,
            "run_id": run.run_id,
            "state": run.state.value,
            "iterations": len(run.iterations),
            "score": score,
        })
    per_difficulty = {
        diff: {
            "count": len(scores),
            "mean_score": sum(scores) / len(scores),
            "normalized": sum(scores) / len(scores) / 3.0,
        }
        for diff, scores in sorted(buckets.items())
    }
    return {
        "kind": "pipeline_eval",
        "records": len(records),
        "per_difficulty": per_difficulty,
        "per_record": per_record,
    }


def render_pipeline_report(report: dict) -> str:
    rows = [
        [diff, str(m["count"]), f"{m['mean_score']:.2f}", f"{m['normalized']:.3f}"]
        for diff, m in report["per_difficulty"].items()
    ]
    return render_table(["difficulty", "records", "mean score (0-3)", "normalized [0-1]"], rows)


def write_report(report: dict, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
