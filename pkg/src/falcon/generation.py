"""Prompt assembly and candidate-rule extraction for the generator agent.

Prompt layout: system = task instructions + few-shot examples + output
contract; user = CTI text + the retrieved deployed rules + all prior
validator feedback in order. Assembly is byte-deterministic so journaled
runs replay exactly.

The output contract demands one fenced code block and an explicit
``ACTION: new`` or ``ACTION: update <rule-id>`` line, which makes
extraction deterministic and the update decision machine-readable.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from falcon.cti import CtiDocument, cti_to_text
from falcon.feedback import ValidationFeedback, render_feedback_history
from falcon.llm import ChatClient, LlmConfig
from falcon.rules.model import IdsRule, RuleMedium


class CandidateAction(str, Enum):
    NEW = "new"
    UPDATE = "update"


class ExtractionError(Exception):
    """Model output did not satisfy the output contract."""


@dataclass(frozen=True)
class GenerationInstruction:
    medium: RuleMedium
    system_text: str
    few_shot_examples: tuple[tuple[str, str], ...]  # (cti_text, rule_text)
    output_contract: str

    def __post_init__(self) -> None:
        if not self.few_shot_examples:
            raise ValueError("instruction needs at least one few-shot example")


@dataclass(frozen=True)
class CandidateRule:
    rule_text: str
    action: CandidateAction
    updated_rule_id: str | None = None
    model_rationale: str = ""

    def __post_init__(self) -> None:
        if self.action is CandidateAction.UPDATE and not self.updated_rule_id:
            raise ValueError("update candidates must reference a rule id")

    def to_dict(self) -> dict:
        return {
            "rule_text": self.rule_text,
            "action": self.action.value,
            "updated_rule_id": self.updated_rule_id,
            "model_rationale": self.model_rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateRule":
        return cls(
            rule_text=d["rule_text"],
            action=CandidateAction(d["action"]),
            updated_rule_id=d.get("updated_rule_id"),
            model_rationale=d.get("model_rationale", ""),
        )


def load_prompt_pack(medium: RuleMedium, pack_dir: str | Path | None = None) -> GenerationInstruction:
    """Load the editable prompt pack for a medium; package defaults otherwise."""
    name = f"{medium.value}.json"
    if pack_dir is not None:
        payload = json.loads((Path(pack_dir) / name).read_text(encoding="utf-8"))
    else:
        ref = resources.files("falcon").joinpath("prompt_packs").joinpath(name)
        payload = json.loads(ref.read_text(encoding="utf-8"))
    return GenerationInstruction(
        medium=RuleMedium(payload["medium"]),
        system_text=payload["system_text"],
        few_shot_examples=tuple((e["cti_text"], e["rule_text"]) for e in payload["few_shot_examples"]),
        output_contract=payload["output_contract"],
    )


def build_prompt(
    instruction: GenerationInstruction,
    cti: CtiDocument,
    retrieved_rules: list[IdsRule],
    feedback_history: list[ValidationFeedback],
) -> list[dict]:
    """Assemble the chat messages for one generation call."""
    example_blocks = []
    for n, (cti_text, rule_text) in enumerate(instruction.few_shot_examples, start=1):
        example_blocks.append(
            f"Example {n} input:\n{cti_text}\n\nExample {n} output:\n```\n{rule_text}\n```\nACTION: new"
        )
    system = "\n\n".join([instruction.system_text, *example_blocks, instruction.output_contract])

    sections = [f"=== Threat intelligence ===\n{cti_to_text(cti)}"]
    if retrieved_rules:
        rule_blocks = [f"[{r.id}]\n{r.raw_text}" for r in retrieved_rules]
        sections.append("=== Deployed rules available for update ===\n" + "\n\n".join(rule_blocks))
    else:
        sections.append("=== Deployed rules available for update ===\nnone deployed")
    if feedback_history:
        sections.append(
            "=== Feedback on previous attempts ===\n" + render_feedback_history(feedback_history)
        )
    user = "\n\n".join(sections)
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\r?\n(.*?)```", re.DOTALL)
_ACTION_RE = re.compile(r"^\s*ACTION:\s*(new|update)(?:\s+(\S+))?\s*$", re.MULTILINE | re.IGNORECASE)


def extract_candidate(completion: str, retrieved_ids: list[str]) -> CandidateRule:
    """Pull the rule block and action declaration out of a completion."""
    fence = _FENCE_RE.search(completion)
    if not fence:
        raise ExtractionError("no rule emitted: completion contains no fenced code block")
    rule_text = fence.group(1).strip()
    if not rule_text:
        raise ExtractionError("no rule emitted: fenced block is empty")

    outside = completion[: fence.start()] + completion[fence.end() :]
    action_match = _ACTION_RE.search(outside) or _ACTION_RE.search(completion)
    if not action_match:
        raise ExtractionError("missing ACTION declaration (expected 'ACTION: new' or 'ACTION: update <rule-id>')")
    action = CandidateAction(action_match.group(1).lower())
    updated_id = action_match.group(2)
    if action is CandidateAction.UPDATE:
        if not updated_id:
            raise ExtractionError("ACTION: update requires a rule id")
        if updated_id not in retrieved_ids:
            raise ExtractionError(
                f"ACTION: update references {updated_id!r}, which was not among the deployed rules provided"
            )
    rationale = _ACTION_RE.sub("", outside).strip()
    if len(rationale) > 2000:
        rationale = rationale[:2000]
    return CandidateRule(
        rule_text=rule_text,
        action=action,
        updated_rule_id=updated_id if action is CandidateAction.UPDATE else None,
        model_rationale=rationale,
    )


def generate_candidate(
    prompt: list[dict],
    llm_config: LlmConfig,
    client: ChatClient,
    retrieved_ids: list[str],
) -> tuple[CandidateRule, str]:
    """Run one completion and extract; returns (candidate, raw completion).

    Transport errors propagate; contract violations raise ExtractionError
    with the raw completion attached for journaling by the caller.
    """
    completion = client.complete(prompt, llm_config)
    try:
        candidate = extract_candidate(completion, retrieved_ids)
    except ExtractionError as exc:
        exc.completion = completion  # type: ignore[attr-defined]
        raise
    return candidate, completion
