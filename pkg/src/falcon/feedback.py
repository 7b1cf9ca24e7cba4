"""Validation feedback records shared by every gate in the pipeline.

Each validator emits one ``ValidationFeedback``: a boolean verdict, an
optional numeric score, and free text the rule generator can act on.
Performance findings additionally carry machine-readable codes so the
review UI and prompts can render them without re-parsing prose.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class ValidationStage(str, Enum):
    SYNTAX = "syntax"
    SEMANTIC = "semantic"
    PERFORMANCE = "performance"
    ANALYST = "analyst"


class FindingSeverity(str, Enum):
    CRITICAL = "critical"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class PerfFinding:
    """One static-analysis finding against a candidate rule.

    ``code`` is drawn from the closed set documented in ``falcon.perf``;
    critical findings force the performance verdict to False.
    """

    code: str
    severity: FindingSeverity
    message: str
    span: tuple[int, int] | None = None  # (line, column), 1-based

    def to_dict(self) -> dict:
        d = {"code": self.code, "severity": self.severity.value, "message": self.message}
        if self.span is not None:
            d["span"] = list(self.span)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PerfFinding":
        span = tuple(d["span"]) if d.get("span") else None
        return cls(
            code=d["code"],
            severity=FindingSeverity(d["severity"]),
            message=d["message"],
            span=span,
        )


@dataclass(frozen=True)
class ValidationFeedback:
    """Stage-tagged validator verdict.

    Semantic feedback always carries a score in [0, 1]; syntax feedback
    never does (its verdict is purely binary).
    """

    stage: ValidationStage
    status: bool
    feedback: str = ""
    score: float | None = None
    findings: tuple[PerfFinding, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.stage is ValidationStage.SEMANTIC and self.score is None:
            raise ValueError("semantic feedback requires a score")
        if self.stage is ValidationStage.SYNTAX and self.score is not None:
            raise ValueError("syntax feedback must not carry a score")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score out of range [0,1]: {self.score}")

    def to_dict(self) -> dict:
        d: dict = {"stage": self.stage.value, "status": self.status, "feedback": self.feedback}
        if self.score is not None:
            d["score"] = self.score
        if self.findings:
            d["findings"] = [f.to_dict() for f in self.findings]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationFeedback":
        return cls(
            stage=ValidationStage(d["stage"]),
            status=bool(d["status"]),
            feedback=d.get("feedback", ""),
            score=d.get("score"),
            findings=tuple(PerfFinding.from_dict(f) for f in d.get("findings", [])),
        )


def render_feedback_history(entries: list[ValidationFeedback]) -> str:
    """Render prior feedback for inclusion in a regeneration prompt.

    Entries keep their original order and each is labeled by stage so the
    generator can tell a parser diagnostic from an analyst note.
    """
    blocks = []
    for entry in entries:
        header = f"[{entry.stage.value} validator] status={'pass' if entry.status else 'fail'}"
        if entry.score is not None:
            header += f" score={entry.score:.4f}"
        body = entry.feedback.strip()
        blocks.append(header + ("\n" + body if body else ""))
    return "\n\n".join(blocks)
