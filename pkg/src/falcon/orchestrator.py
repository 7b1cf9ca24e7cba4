"""Generation/validation loop, run state machine, analyst gate, persistence.

One run drives: retrieve deployed context -> generate a candidate ->
validate serially (syntax, then semantic, then performance, short-circuit
on the first failure) -> regenerate with the accumulated feedback until
every gate passes or the iteration budget is spent. A human decision then
deploys, rejects, or re-enters the loop with an analyst note.

Every event appends to a JSONL journal before the next iteration begins,
so a crashed or finished run can be reconstructed and its LLM exchanges
replayed without network access.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from falcon.corpus import CorpusStore
from falcon.cti import CtiDocument
from falcon.embeddings import Embedder
from falcon.feedback import ValidationFeedback, ValidationStage
from falcon.generation import (
    CandidateAction,
    CandidateRule,
    ExtractionError,
    GenerationInstruction,
    build_prompt,
    extract_candidate,
    load_prompt_pack,
)
from falcon.llm import ChatClient, LlmConfig, LlmError, MockChatClient
from falcon.perf import DEFAULT_DEDUP_THRESHOLD, PerfContext, validate_performance
from falcon.retrieval import RuleIndex, build_index, ensemble_retrieve
from falcon.rules.model import RuleMedium
from falcon.rules.syntax import parse_rule
from falcon.scorer import ScorerCalibration, validate_semantics


class RunState(str, Enum):
    RUNNING = "running"
    PENDING_REVIEW = "pending_review"
    APPROVED = "approved"
    REJECTED = "rejected"
    FAILED = "failed"


class AnalystAction(str, Enum):
    APPROVE = "approve"
    REJECT = "reject"
    REGENERATE = "regenerate"


class OrchestratorError(Exception):
    pass


class WrongStateError(OrchestratorError):
    pass


@dataclass(frozen=True)
class ValidationThresholds:
    semantic_min: float = 0.75
    max_iterations: int = 5
    llm_judges_enabled: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.semantic_min <= 1.0):
            raise ValueError("semantic_min must lie in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def to_dict(self) -> dict:
        return {
            "semantic_min": self.semantic_min,
            "max_iterations": self.max_iterations,
            "llm_judges_enabled": self.llm_judges_enabled,
        }


@dataclass
class Iteration:
    candidate: CandidateRule | None
    feedback: list[ValidationFeedback]
    raw_completion: str = ""

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.to_dict() if self.candidate else None,
            "feedback": [f.to_dict() for f in self.feedback],
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class GenerationRun:
    run_id: str
    cti: CtiDocument
    medium: RuleMedium
    retrieved_rule_ids: list[str] = field(default_factory=list)
    iterations: list[Iteration] = field(default_factory=list)
    state: RunState = RunState.RUNNING
    analyst_notes: list[str] = field(default_factory=list)
    likert_scores: list[int] = field(default_factory=list)
    failure_reason: str | None = None
    deployed_rule_id: str | None = None
    created_at: str = field(default_factory=_now)
    updated_at: str = field(default_factory=_now)

    def transition(self, new_state: RunState) -> None:
        allowed = {
            RunState.RUNNING: {RunState.PENDING_REVIEW, RunState.FAILED},
            RunState.PENDING_REVIEW: {RunState.APPROVED, RunState.REJECTED, RunState.RUNNING},
            RunState.APPROVED: set(),
            RunState.REJECTED: set(),
            RunState.FAILED: set(),
        }
        if new_state not in allowed[self.state]:
            raise WrongStateError(f"cannot transition {self.state.value} -> {new_state.value}")
        self.state = new_state
        self.updated_at = _now()

    @property
    def last_candidate(self) -> CandidateRule | None:
        for iteration in reversed(self.iterations):
            if iteration.candidate is not None:
                return iteration.candidate
        return None

    def feedback_history(self) -> list[ValidationFeedback]:
        history: list[ValidationFeedback] = []
        for iteration in self.iterations:
            history.extend(iteration.feedback)
        return history

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "cti": self.cti.to_dict(),
            "medium": self.medium.value,
            "retrieved_rule_ids": list(self.retrieved_rule_ids),
            "iterations": [it.to_dict() for it in self.iterations],
            "state": self.state.value,
            "analyst_notes": list(self.analyst_notes),
            "likert_scores": list(self.likert_scores),
            "failure_reason": self.failure_reason,
            "deployed_rule_id": self.deployed_rule_id,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


# --------------------------------------------------------------------------
# Journal

class JournalError(Exception):
    pass


class Journal:
    """Append-only JSONL event log; one structured record per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, run_id: str, event: str, data: dict) -> None:
        record = {"ts": _now(), "run_id": run_id, "event": event, "data": data}
        line = json.dumps(record, separators=(",", ":"))
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        records = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise JournalError(
                        f"corrupt journal {self.path} at line {lineno}: {exc}"
                    ) from exc
        return records

    def completions_for(self, run_id: str) -> list[str]:
        """Recorded raw completions of one run, in request order."""
        return [
            r["data"]["completion"]
            for r in self.read_all()
            if r["run_id"] == run_id and r["event"] == "llm_exchange"
        ]


def journal_replay_client(journal_path: str | Path, run_id: str) -> MockChatClient:
    """Chat client that replays a journaled run's completions verbatim."""
    return MockChatClient(Journal(journal_path).completions_for(run_id))


# --------------------------------------------------------------------------
# Services bundle and the orchestrator

@dataclass
class PipelineServices:
    corpus: CorpusStore
    embedder: Embedder
    llm_client: ChatClient
    llm_config: LlmConfig = field(default_factory=LlmConfig)
    calibration: ScorerCalibration = field(default_factory=ScorerCalibration)
    thresholds: ValidationThresholds = field(default_factory=ValidationThresholds)
    semantic_judge: ChatClient | None = None
    perf_judge: ChatClient | None = None
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    prompt_pack_dir: str | Path | None = None


class Orchestrator:
    """Owns runs, the deployed-rule indexes, and corpus mutations."""

    def __init__(self, services: PipelineServices, journal_path: str | Path):
        self.services = services
        self.journal = Journal(journal_path)
        self.runs: dict[str, GenerationRun] = {}
        self._lock = threading.RLock()
        self._indexes: dict[RuleMedium, RuleIndex] = {}
        self._instructions: dict[RuleMedium, GenerationInstruction] = {}
        self.stop_event = threading.Event()
        self.rebuild_indexes()
        self._restore_runs()

    # -- indexes

    def rebuild_indexes(self) -> None:
        with self._lock:
            for medium in RuleMedium:
                rules = self.services.corpus.deployed(medium)
                self._indexes[medium] = build_index(
                    rules, medium, with_embeddings=True, embedder=self.services.embedder
                )

    def index_for(self, medium: RuleMedium) -> RuleIndex:
        with self._lock:
            return self._indexes[medium]

    def _instruction_for(self, medium: RuleMedium) -> GenerationInstruction:
        if medium not in self._instructions:
            self._instructions[medium] = load_prompt_pack(
                medium, self.services.prompt_pack_dir
            )
        return self._instructions[medium]

    # -- validation phase (Algorithm 1's execute_validation)

    def execute_validation(
        self, candidate: CandidateRule, cti: CtiDocument, medium: RuleMedium
    ) -> list[ValidationFeedback]:
        """Serial gates with short-circuit: later stages never run after a failure."""
        svc = self.services
        feedback: list[ValidationFeedback] = []

        parse_result = parse_rule(candidate.rule_text, medium)
        syntax = ValidationFeedback(
            stage=ValidationStage.SYNTAX,
            status=parse_result.ok,
            feedback="\n".join(d.render() for d in parse_result.errors),
        )
        feedback.append(syntax)
        if not syntax.status:
            return feedback

        calibration = replace(
            svc.calibration, decision_threshold=svc.thresholds.semantic_min
        )
        judge = svc.semantic_judge if svc.thresholds.llm_judges_enabled else None
        semantic = validate_semantics(
            cti, candidate.rule_text, calibration, svc.embedder,
            judge=judge, llm_config=svc.llm_config,
        )
        feedback.append(semantic)
        if not semantic.status:
            return feedback

        perf_ctx = PerfContext(
            corpus=svc.corpus,
            index=self.index_for(medium),
            calibration=svc.calibration,
            embedder=svc.embedder,
            dedup_threshold=svc.dedup_threshold,
            judge=svc.perf_judge if svc.thresholds.llm_judges_enabled else None,
            llm_config=svc.llm_config,
        )
        feedback.append(validate_performance(candidate, parse_result.ast, perf_ctx))
        return feedback

    # -- generation phase

    def create_run(self, cti: CtiDocument, medium: RuleMedium) -> GenerationRun:
        """Register a run (journaled, state running) without driving it yet."""
        index = self.index_for(medium)
        retrieved_ids = ensemble_retrieve(
            cti, index, k=10, cap=5, embedder=self.services.embedder
        )
        run = GenerationRun(
            run_id=uuid.uuid4().hex,
            cti=cti,
            medium=medium,
            retrieved_rule_ids=retrieved_ids,
        )
        with self._lock:
            self.runs[run.run_id] = run
        self.journal.append(run.run_id, "run_created", {
            "cti": cti.to_dict(),
            "medium": medium.value,
            "retrieved_rule_ids": retrieved_ids,
            "thresholds": self.services.thresholds.to_dict(),
        })
        return run

    def drive_run(self, run_id: str) -> GenerationRun:
        run = self.get_run(run_id)
        self._drive(run)
        return run

    def start_run(self, cti: CtiDocument, medium: RuleMedium) -> GenerationRun:
        """Create a run and drive the loop until review, failure, or budget end."""
        run = self.create_run(cti, medium)
        self._drive(run)
        return run

    def _drive(self, run: GenerationRun) -> None:
        """Run generate/validate iterations with a fresh budget."""
        svc = self.services
        instruction = self._instruction_for(run.medium)
        retrieved_rules = [svc.corpus.get(rid) for rid in run.retrieved_rule_ids
                           if rid in svc.corpus]
        budget = svc.thresholds.max_iterations
        for _ in range(budget):
            history = run.feedback_history()
            prompt = build_prompt(instruction, run.cti, retrieved_rules, history)
            try:
                completion = svc.llm_client.complete(prompt, svc.llm_config)
            except LlmError as exc:
                run.failure_reason = f"llm transport failure: {exc}"
                self.journal.append(run.run_id, "transport_failure", {"error": str(exc)})
                run.transition(RunState.FAILED)
                self.journal.append(run.run_id, "state_change", {"state": run.state.value,
                                                                 "reason": run.failure_reason})
                return
            self.journal.append(run.run_id, "llm_exchange", {
                "request": prompt, "completion": completion,
            })
            try:
                candidate = extract_candidate(completion, run.retrieved_rule_ids)
            except ExtractionError as exc:
                iteration = Iteration(
                    candidate=None,
                    feedback=[ValidationFeedback(
                        stage=ValidationStage.SYNTAX, status=False,
                        feedback=f"no rule emitted: {exc}",
                    )],
                    raw_completion=completion,
                )
                run.iterations.append(iteration)
                run.updated_at = _now()
                self.journal.append(run.run_id, "iteration", iteration.to_dict())
                continue
            feedback = self.execute_validation(candidate, run.cti, run.medium)
            iteration = Iteration(candidate=candidate, feedback=feedback,
                                  raw_completion=completion)
            run.iterations.append(iteration)
            run.updated_at = _now()
            self.journal.append(run.run_id, "iteration", iteration.to_dict())
            if len(feedback) == 3 and all(f.status for f in feedback):
                run.transition(RunState.PENDING_REVIEW)
                self.journal.append(run.run_id, "state_change", {"state": run.state.value})
                return
            if self.stop_event.is_set():
                run.failure_reason = "interrupted by shutdown"
                run.transition(RunState.FAILED)
                self.journal.append(run.run_id, "state_change", {"state": run.state.value,
                                                                 "reason": run.failure_reason})
                return
        run.failure_reason = f"no candidate passed validation in {budget} iterations"
        run.transition(RunState.FAILED)
        self.journal.append(run.run_id, "state_change", {"state": run.state.value,
                                                         "reason": run.failure_reason})

    # -- analyst gate

    def get_run(self, run_id: str) -> GenerationRun:
        with self._lock:
            try:
                return self.runs[run_id]
            except KeyError:
                raise OrchestratorError(f"unknown run {run_id!r}") from None

    def list_runs(self, state: RunState | None = None,
                  medium: RuleMedium | None = None) -> list[GenerationRun]:
        with self._lock:
            runs = sorted(self.runs.values(), key=lambda r: r.created_at)
        if state is not None:
            runs = [r for r in runs if r.state is state]
        if medium is not None:
            runs = [r for r in runs if r.medium is medium]
        return runs

    def submit_analyst_decision(
        self, run_id: str, action: AnalystAction, note: str = "",
        likert: int | None = None, drive: bool = True,
    ) -> GenerationRun:
        """Apply an analyst decision to a pending run.

        ``drive=False`` applies a regenerate transition without running the
        loop, so callers can continue it on their own executor.
        """
        run = self.get_run(run_id)
        with self._lock:
            if run.state is not RunState.PENDING_REVIEW:
                raise WrongStateError(
                    f"run {run_id} is {run.state.value}, expected pending_review"
                )
            decision_data: dict = {"action": action.value, "note": note}
            if likert is not None:
                if not (0 <= likert <= 3):
                    raise OrchestratorError("likert score must be in 0..3")
                decision_data["likert"] = likert
                run.likert_scores.append(likert)
            self.journal.append(run_id, "analyst_decision", decision_data)
            if note:
                run.analyst_notes.append(note)

            if action is AnalystAction.APPROVE:
                self._deploy(run)
                run.transition(RunState.APPROVED)
                self.journal.append(run_id, "state_change", {"state": run.state.value})
                return run
            if action is AnalystAction.REJECT:
                run.transition(RunState.REJECTED)
                self.journal.append(run_id, "state_change", {"state": run.state.value})
                return run

            # regenerate: analyst note joins the feedback history, budget resets
            run.transition(RunState.RUNNING)
            self.journal.append(run_id, "state_change", {"state": run.state.value})
            analyst_feedback = ValidationFeedback(
                stage=ValidationStage.ANALYST, status=False, feedback=note,
            )
            run.iterations.append(Iteration(candidate=None, feedback=[analyst_feedback]))
            self.journal.append(run_id, "iteration", run.iterations[-1].to_dict())
        if drive:
            self._drive(run)
        return run

    def _deploy(self, run: GenerationRun) -> None:
        candidate = run.last_candidate
        if candidate is None:
            raise OrchestratorError(f"run {run.run_id} has no candidate to deploy")
        new_rule_id = f"{run.medium.value}-gen-{run.run_id[:12]}"
        if candidate.action is CandidateAction.UPDATE:
            rule = self.services.corpus.approve_update(
                new_rule_id, run.medium, candidate.rule_text, candidate.updated_rule_id
            )
            self.journal.append(run.run_id, "corpus_change", {
                "deployed": rule.id, "deprecated": candidate.updated_rule_id,
            })
        else:
            rule = self.services.corpus.deploy_generated(
                new_rule_id, run.medium, candidate.rule_text
            )
            self.journal.append(run.run_id, "corpus_change", {"deployed": rule.id})
        run.deployed_rule_id = rule.id
        self.rebuild_indexes()

    # -- journal restore

    def _restore_runs(self) -> None:
        records = self.journal.read_all()
        for record in records:
            run_id = record["run_id"]
            event = record["event"]
            data = record["data"]
            if event == "run_created":
                self.runs[run_id] = GenerationRun(
                    run_id=run_id,
                    cti=CtiDocument.from_dict(data["cti"]),
                    medium=RuleMedium(data["medium"]),
                    retrieved_rule_ids=list(data["retrieved_rule_ids"]),
                    created_at=record["ts"],
                    updated_at=record["ts"],
                )
                continue
            run = self.runs.get(run_id)
            if run is None:
                continue
            run.updated_at = record["ts"]
            if event == "iteration":
                candidate = (
                    CandidateRule.from_dict(data["candidate"]) if data["candidate"] else None
                )
                feedback = [ValidationFeedback.from_dict(f) for f in data["feedback"]]
                run.iterations.append(Iteration(candidate=candidate, feedback=feedback))
            elif event == "state_change":
                run.state = RunState(data["state"])
                if data.get("reason"):
                    run.failure_reason = data["reason"]
            elif event == "analyst_decision":
                if data.get("note"):
                    run.analyst_notes.append(data["note"])
                if data.get("likert") is not None:
                    run.likert_scores.append(data["likert"])
            elif event == "corpus_change" and data.get("deployed"):
                run.deployed_rule_id = data["deployed"]
        # Anything still mid-flight belonged to a previous process.
        for run in self.runs.values():
            if run.state is RunState.RUNNING:
                run.state = RunState.FAILED
                run.failure_reason = "interrupted: restored from journal mid-run"
