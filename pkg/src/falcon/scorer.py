"""CTI-rule semantic similarity scoring and scorer-quality metrics.

Raw cosine between the two embeddings is squashed onto [0, 1] with a
logistic curve; the decision threshold over that scaled score is chosen
by exhaustive F1 sweep. Matrix metrics (diagonal recall, thresholded F1)
quantify how well an embedder separates matching pairs from the rest.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from falcon.cti import CtiDocument, cti_to_text
from falcon.embeddings import Embedder, cosine
from falcon.feedback import ValidationFeedback, ValidationStage
from falcon.llm import ChatClient, LlmConfig, LlmError

DEFAULT_SLOPE = 5.0
DEFAULT_OFFSET = 0.0
DEFAULT_THRESHOLD = 0.75


@dataclass(frozen=True)
class ScorerCalibration:
    """Sigmoid parameters plus the match/no-match decision threshold."""

    slope: float = DEFAULT_SLOPE
    offset: float = DEFAULT_OFFSET
    decision_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if self.slope <= 0:
            raise ValueError("slope must be positive")
        if not (0.0 < self.decision_threshold < 1.0):
            raise ValueError("decision_threshold must lie in (0, 1)")

    def scale(self, raw_cosine: float) -> float:
        return 1.0 / (1.0 + math.exp(-(self.slope * raw_cosine + self.offset)))

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "offset": self.offset,
            "decision_threshold": self.decision_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerCalibration":
        return cls(
            slope=d["slope"],
            offset=d["offset"],
            decision_threshold=d["decision_threshold"],
        )


def save_calibration(
    calibration: ScorerCalibration, path: str | Path,
    f1: float | None = None, dataset_fingerprint: str | None = None,
) -> None:
    payload = calibration.to_dict()
    if f1 is not None:
        payload["f1"] = f1
    if dataset_fingerprint is not None:
        payload["dataset_fingerprint"] = dataset_fingerprint
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_calibration(path: str | Path) -> ScorerCalibration:
    return ScorerCalibration.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class PairScore:
    raw_cosine: float
    scaled: float


def score_pair(
    cti: CtiDocument, rule_text: str, calibration: ScorerCalibration, embedder: Embedder
) -> PairScore:
    """Cosine between CTI text and rule text, plus its sigmoid scaling."""
    cti_vec, rule_vec = embedder.embed([cti_to_text(cti), rule_text])
    raw = cosine(cti_vec, rule_vec)
    return PairScore(raw_cosine=raw, scaled=calibration.scale(raw))


def score_texts(
    left: str, right: str, calibration: ScorerCalibration, embedder: Embedder
) -> PairScore:
    a, b = embedder.embed([left, right])
    raw = cosine(a, b)
    return PairScore(raw_cosine=raw, scaled=calibration.scale(raw))


def similarity_matrix(
    ctis: list[CtiDocument], rules: list[str], embedder: Embedder
) -> np.ndarray:
    """Raw-cosine matrix: entry (i, j) pairs CTI i with rule j."""
    cti_vecs = embedder.embed([cti_to_text(c) for c in ctis])
    rule_vecs = embedder.embed(rules)
    cti_mat = np.stack([v.values for v in cti_vecs])
    rule_mat = np.stack([v.values for v in rule_vecs])
    cti_norms = np.linalg.norm(cti_mat, axis=1, keepdims=True)
    rule_norms = np.linalg.norm(rule_mat, axis=1, keepdims=True)
    return (cti_mat / cti_norms) @ (rule_mat / rule_norms).T


def diagonal_recall(matrix: np.ndarray) -> float:
    """Fraction of rows whose diagonal entry is the strict row maximum.

    Ties count as failures: a constant embedder scores 0, not 1.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"diagonal_recall needs a square matrix, got {m.shape}")
    n = m.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    hits = 0
    for i in range(n):
        row = m[i]
        best = row.max()
        if row[i] == best and np.count_nonzero(row == best) == 1:
            hits += 1
    return hits / n


def f1_at_threshold(
    positive_scores: list[float], negative_scores: list[float], threshold: float
) -> float:
    tp = sum(1 for s in positive_scores if s >= threshold)
    fp = sum(1 for s in negative_scores if s >= threshold)
    fn = len(positive_scores) - tp
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def sweep_thresholds(positive_scores: list[float], negative_scores: list[float]) -> list[float]:
    """Candidate thresholds: midpoints of sorted distinct scores, with 0/1 sentinels."""
    distinct = sorted(set(positive_scores) | set(negative_scores))
    padded = [0.0] + distinct + [1.0]
    return sorted({(a + b) / 2.0 for a, b in zip(padded, padded[1:])})


@dataclass(frozen=True)
class CalibrationResult:
    calibration: ScorerCalibration
    f1: float


def calibrate_threshold(
    positive_scores: list[float],
    negative_scores: list[float],
    base: ScorerCalibration | None = None,
) -> CalibrationResult:
    """Pick the scaled-score threshold maximizing F1 over the sweep.

    Ties prefer the larger (stricter) threshold; scores are the already
    sigmoid-scaled pair scores.
    """
    if not positive_scores or not negative_scores:
        raise ValueError("calibration needs at least one positive and one negative pair")
    base = base or ScorerCalibration()
    best_t, best_f1 = None, -1.0
    for t in sweep_thresholds(positive_scores, negative_scores):
        f1 = f1_at_threshold(positive_scores, negative_scores, t)
        if f1 > best_f1 or (f1 == best_f1 and best_t is not None and t > best_t):
            best_t, best_f1 = t, f1
    threshold = min(max(best_t, 1e-9), 1.0 - 1e-9)
    return CalibrationResult(
        calibration=ScorerCalibration(
            slope=base.slope, offset=base.offset, decision_threshold=threshold
        ),
        f1=best_f1,
    )


def fit_sigmoid(
    positive_raw: list[float], negative_raw: list[float]
) -> tuple[float, float]:
    """Fit (slope, offset) by logistic regression on raw cosines.

    The slope is clamped positive: a separating direction that scores
    negatives above positives means broken inputs, not a negative slope.
    """
    if not positive_raw or not negative_raw:
        raise ValueError("fit needs both classes")
    x = np.array(list(positive_raw) + list(negative_raw), dtype=np.float64)
    y = np.array([1.0] * len(positive_raw) + [0.0] * len(negative_raw))

    def nll(params: np.ndarray) -> float:
        a, b = params
        z = a * x + b
        # log(1 + e^z) computed stably
        return float(np.sum(np.logaddexp(0.0, z) - y * z))

    res = minimize(nll, x0=np.array([1.0, 0.0]), method="BFGS")
    a, b = float(res.x[0]), float(res.x[1])
    if a <= 0:
        a = 1e-3
    return a, b


# --------------------------------------------------------------------------
# Semantic validation gate

_JUDGE_SYSTEM = (
    "You are a detection-engineering reviewer. Given a threat intelligence "
    "document, a candidate IDS rule, and a numeric similarity score in [0,1], "
    "identify logical inconsistencies: missing indicators, wrong protocols, "
    "irrelevant patterns, or detection gaps. Respond with JSON only: "
    '{"findings": [{"critical": true|false, "text": "..."}]}. '
    "Report an empty findings list when the rule is consistent with the CTI."
)


def _judge_prompt(cti_text: str, rule_text: str, scaled_score: float) -> list[dict]:
    user = (
        f"Similarity score: {scaled_score:.4f}\n\n"
        f"=== Threat intelligence ===\n{cti_text}\n\n"
        f"=== Candidate rule ===\n{rule_text}\n"
    )
    return [{"role": "system", "content": _JUDGE_SYSTEM}, {"role": "user", "content": user}]


def _parse_judge_response(raw: str) -> list[dict]:
    match = re.search(r"\{.*\}", raw, flags=re.DOTALL)
    if not match:
        raise ValueError("judge response contains no JSON object")
    body = json.loads(match.group(0))
    findings = body.get("findings", [])
    if not isinstance(findings, list):
        raise ValueError("judge findings must be a list")
    out = []
    for f in findings:
        out.append({"critical": bool(f.get("critical", False)), "text": str(f.get("text", ""))})
    return out


def validate_semantics(
    cti: CtiDocument,
    rule_text: str,
    calibration: ScorerCalibration,
    embedder: Embedder,
    judge: ChatClient | None = None,
    llm_config: LlmConfig | None = None,
) -> ValidationFeedback:
    """Score the pair and, when a judge is wired in, ask it for inconsistencies.

    Verdict: scaled score >= threshold AND no critical judge finding. Judge
    failures degrade to score-only with a recorded warning rather than
    failing the stage.
    """
    pair = score_pair(cti, rule_text, calibration, embedder)
    score_ok = pair.scaled >= calibration.decision_threshold
    findings: list[dict] = []
    notes: list[str] = []
    if judge is not None:
        try:
            raw = judge.complete(
                _judge_prompt(cti_to_text(cti), rule_text, pair.scaled),
                llm_config or LlmConfig(),
            )
            findings = _parse_judge_response(raw)
        except (LlmError, ValueError, json.JSONDecodeError) as exc:
            notes.append(f"warning: semantic judge unavailable, score-only verdict ({exc})")
            findings = []
    has_critical = any(f["critical"] for f in findings)
    lines = [
        f"{n}. {'[critical] ' if f['critical'] else ''}{f['text']}"
        for n, f in enumerate(findings, start=1)
    ]
    if not score_ok:
        lines.append(
            f"score {pair.scaled:.4f} below threshold {calibration.decision_threshold:.4f}: "
            "rule does not sufficiently reflect the reported indicators and behaviors"
        )
    lines.extend(notes)
    return ValidationFeedback(
        stage=ValidationStage.SEMANTIC,
        status=score_ok and not has_critical,
        score=pair.scaled,
        feedback="\n".join(lines),
    )
