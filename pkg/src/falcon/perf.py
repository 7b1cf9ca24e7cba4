"""Static performance and redundancy analysis of candidate rules.

Execution cost is approximated statically (atom quality, regex shape,
header scoping) rather than by running detection engines. Finding codes
are a stable machine-readable vocabulary:

  YARA:  SHORT_ATOM (critical), REGEX_UNANCHORED_LEADING_WILDCARD (critical),
         CONDITION_ALWAYS_TRUE (critical), NO_FILE_HEADER_GUARD (warning),
         MISSING_WIDE_FOR_DOTNET_GUID (warning)
  Snort: SID_COLLISION (critical), UPDATE_WITHOUT_REV_BUMP (critical),
         PCRE_WITHOUT_CONTENT (warning), ANY_ANY_BOTH_DIRECTIONS (warning),
         MISSING_FAST_PATTERN_CANDIDATE (info)
  both:  DUPLICATE_OF_DEPLOYED (critical), NEAR_DUPLICATE (critical),
         LLM_SUGGESTION (info)
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from falcon.corpus import CorpusStore
from falcon.embeddings import Embedder, cosine
from falcon.feedback import (
    FindingSeverity,
    PerfFinding,
    ValidationFeedback,
    ValidationStage,
)
from falcon.generation import CandidateAction, CandidateRule
from falcon.llm import ChatClient, LlmConfig, LlmError
from falcon.retrieval import RuleIndex
from falcon.rules.model import (
    Binary,
    BoolLit,
    Call,
    Expr,
    Ident,
    IntLit,
    IntRead,
    OfExpr,
    RuleMedium,
    SnortRuleAst,
    StringAt,
    StringIn,
    StringLength,
    StringOffset,
    Unary,
    YaraRuleAst,
    YaraStringKind,
)
from falcon.scorer import ScorerCalibration

DEFAULT_DEDUP_THRESHOLD = 0.90
MIN_ATOM_BYTES = 4

_GUID_PREFIX_RE = re.compile(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-")
_REGEX_META = set(".*+?[](){}|^$")


@dataclass
class PerfContext:
    """Everything the performance gate consults besides the candidate."""

    corpus: CorpusStore
    index: RuleIndex
    calibration: ScorerCalibration
    embedder: Embedder
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    judge: ChatClient | None = None
    llm_config: LlmConfig = field(default_factory=LlmConfig)


def _normalize_text(text: str) -> str:
    return " ".join(text.split())


# --------------------------------------------------------------------------
# Atom-length estimation

def text_atom_length(value: str) -> int:
    """Byte length of an escaped YARA text string."""
    i, count = 0, 0
    while i < len(value):
        if value[i] == "\\":
            if i + 1 < len(value) and value[i + 1] == "x":
                i += 4
            else:
                i += 2
        else:
            i += 1
        count += 1
    return count


def hex_atom_length(tokens: tuple[str, ...]) -> int:
    """Longest run of fully-fixed bytes (no wildcards, jumps, alternation)."""
    best = run = 0
    for tok in tokens:
        if len(tok) == 2 and "?" not in tok:
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


def regex_atom_length(pattern: str) -> int:
    """Longest literal run in a regex, counted conservatively."""
    best = run = 0
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\":
            nxt = pattern[i + 1] if i + 1 < len(pattern) else ""
            if nxt in "dDwWsSbB":
                run = 0
                i += 2
                continue
            literal_width = 4 if nxt == "x" else 2
            i += literal_width
            # A quantifier makes the escaped literal unreliable as an anchor.
            if i < len(pattern) and pattern[i] in "*+?{":
                run = 0
                continue
            run += 1
        elif ch in _REGEX_META:
            if ch in "*+?{" and run > 0:
                run -= 1  # the quantified char itself cannot anchor
            run = max(run, 0)
            best = max(best, run)
            run = 0
            i += 1
            continue
        else:
            i += 1
            if i < len(pattern) and pattern[i] in "*+?{":
                run = 0
                continue
            run += 1
        best = max(best, run)
    return max(best, run)


def best_atom_length(s) -> int:
    if s.kind is YaraStringKind.TEXT:
        return text_atom_length(s.value)
    if s.kind is YaraStringKind.HEX:
        return hex_atom_length(s.hex_tokens)
    return regex_atom_length(s.value)


# --------------------------------------------------------------------------
# Condition analysis helpers

def _walk(expr: Expr):
    yield expr
    if isinstance(expr, Binary):
        yield from _walk(expr.left)
        yield from _walk(expr.right)
    elif isinstance(expr, Unary):
        yield from _walk(expr.operand)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from _walk(arg)
    elif isinstance(expr, IntRead):
        yield from _walk(expr.arg)
    elif isinstance(expr, StringAt):
        yield from _walk(expr.offset)
    elif isinstance(expr, StringIn):
        yield from _walk(expr.low)
        yield from _walk(expr.high)
    elif isinstance(expr, (StringOffset, StringLength)):
        if expr.index is not None:
            yield from _walk(expr.index)
    elif isinstance(expr, OfExpr) and not isinstance(expr.quantifier, str):
        yield from _walk(expr.quantifier)


def _const_eval(expr: Expr):
    """Evaluate constant subtrees; None when the value depends on input."""
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, Unary):
        inner = _const_eval(expr.operand)
        if inner is None:
            return None
        if expr.op == "not":
            return not inner
        if expr.op == "-":
            return -inner
        if expr.op == "~":
            return ~inner
        return None
    if isinstance(expr, Binary):
        left = _const_eval(expr.left)
        right = _const_eval(expr.right)
        if expr.op == "and":
            if left is False or right is False:
                return False
            if left is True and right is True:
                return True
            return None
        if expr.op == "or":
            if left is True or right is True:
                return True
            if left is False and right is False:
                return False
            return None
        if left is None or right is None:
            return None
        try:
            if expr.op == "==":
                return left == right
            if expr.op == "!=":
                return left != right
            if expr.op == "<":
                return left < right
            if expr.op == "<=":
                return left <= right
            if expr.op == ">":
                return left > right
            if expr.op == ">=":
                return left >= right
            if expr.op == "+":
                return left + right
            if expr.op == "-":
                return left - right
            if expr.op == "*":
                return left * right
            if expr.op == "\\":
                return left // right if right else None
            if expr.op == "%":
                return left % right if right else None
        except TypeError:
            return None
    return None


def _has_mz_header_guard(condition: Expr) -> bool:
    for node in _walk(condition):
        if isinstance(node, Binary) and node.op == "==":
            sides = (node.left, node.right)
            has_read = any(
                isinstance(s, IntRead) and s.func == "uint16"
                and isinstance(s.arg, IntLit) and s.arg.value == 0
                for s in sides
            )
            has_mz = any(isinstance(s, IntLit) and s.value == 0x5A4D for s in sides)
            if has_read and has_mz:
                return True
    return False


def _references_pe_module(ast: YaraRuleAst) -> bool:
    if "pe" in ast.imports:
        return True
    if ast.condition is None:
        return False
    return any(
        isinstance(node, Ident) and node.path and node.path[0] == "pe"
        for node in _walk(ast.condition)
    )


# --------------------------------------------------------------------------
# Redundancy scan

def redundancy_scan(
    candidate_text: str,
    index: RuleIndex,
    calibration: ScorerCalibration,
    embedder: Embedder,
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
) -> list[tuple[str, float]]:
    """Deployed rules whose scaled similarity to the candidate clears the bar."""
    if not index.entries:
        return []
    if not index.has_embeddings():
        raise ValueError("redundancy scan requires an index built with embeddings")
    candidate_vec = embedder.embed_one(candidate_text)
    hits: list[tuple[str, float]] = []
    for rule_id, entry in index.entries.items():
        scaled = calibration.scale(cosine(candidate_vec, entry.embedding))
        if scaled >= threshold:
            hits.append((rule_id, scaled))
    hits.sort(key=lambda pair: (-pair[1], pair[0]))
    return hits


# --------------------------------------------------------------------------
# Per-medium static checks

def _yara_findings(ast: YaraRuleAst) -> list[PerfFinding]:
    findings: list[PerfFinding] = []
    if ast.strings:
        atom_lengths = {s.name or "<anonymous>": best_atom_length(s) for s in ast.strings}
        if all(length < MIN_ATOM_BYTES for length in atom_lengths.values()):
            worst = ", ".join(f"${n} ({l} bytes)" for n, l in atom_lengths.items())
            findings.append(PerfFinding(
                code="SHORT_ATOM",
                severity=FindingSeverity.CRITICAL,
                message=(
                    f"no string offers a scan atom of {MIN_ATOM_BYTES}+ fixed bytes: {worst}; "
                    "short atoms force the engine to test every offset"
                ),
            ))
    for s in ast.strings:
        if s.kind is YaraStringKind.REGEX and re.match(r"^\.(\*|\+)", s.value):
            findings.append(PerfFinding(
                code="REGEX_UNANCHORED_LEADING_WILDCARD",
                severity=FindingSeverity.CRITICAL,
                message=f"regex ${s.name} starts with an unanchored wildcard '{s.value[:6]}...'",
            ))
        if (
            s.kind is YaraStringKind.TEXT
            and _GUID_PREFIX_RE.match(s.value)
            and "wide" not in s.modifiers
        ):
            findings.append(PerfFinding(
                code="MISSING_WIDE_FOR_DOTNET_GUID",
                severity=FindingSeverity.WARNING,
                message=(
                    f"GUID string ${s.name} lacks the wide modifier; .NET binaries store "
                    "type-library GUIDs as UTF-16, so coverage is incomplete"
                ),
            ))
    if ast.condition is not None:
        if _const_eval(ast.condition) is True:
            findings.append(PerfFinding(
                code="CONDITION_ALWAYS_TRUE",
                severity=FindingSeverity.CRITICAL,
                message="condition is trivially true and would match every file",
            ))
        if _references_pe_module(ast) and not _has_mz_header_guard(ast.condition):
            findings.append(PerfFinding(
                code="NO_FILE_HEADER_GUARD",
                severity=FindingSeverity.WARNING,
                message="PE-targeted rule lacks a uint16(0) == 0x5A4D header guard",
            ))
    return findings


def _snort_findings(
    ast: SnortRuleAst,
    candidate: CandidateRule,
    ctx: PerfContext,
) -> list[PerfFinding]:
    findings: list[PerfFinding] = []
    contents = ast.options_named("content") + ast.options_named("uricontent")
    pcres = ast.options_named("pcre")
    if pcres and not contents:
        findings.append(PerfFinding(
            code="PCRE_WITHOUT_CONTENT",
            severity=FindingSeverity.WARNING,
            message="pcre without any content anchor runs the regex on every packet",
        ))
    if contents and not _has_fast_pattern_candidate(contents):
        findings.append(PerfFinding(
            code="MISSING_FAST_PATTERN_CANDIDATE",
            severity=FindingSeverity.INFO,
            message=f"no content literal of {MIN_ATOM_BYTES}+ bytes for the fast-pattern matcher",
        ))
    if (
        ast.src_addr == "any" and ast.src_port == "any"
        and ast.dst_addr == "any" and ast.dst_port == "any"
    ):
        findings.append(PerfFinding(
            code="ANY_ANY_BOTH_DIRECTIONS",
            severity=FindingSeverity.WARNING,
            message="rule matches any host and any port on both sides; scope it to the threat",
        ))
    sid = ast.sid
    if sid is not None:
        owner = ctx.corpus.deployed_sids().get(sid)
        replaced = candidate.updated_rule_id
        if owner is not None and owner != replaced:
            findings.append(PerfFinding(
                code="SID_COLLISION",
                severity=FindingSeverity.CRITICAL,
                message=f"sid {sid} already belongs to deployed rule {owner}",
            ))
    if candidate.action is CandidateAction.UPDATE:
        old = ctx.corpus.get(candidate.updated_rule_id)
        old_rev = old.ast.rev if isinstance(old.ast, SnortRuleAst) and old.ast.rev else 0
        new_rev = ast.rev
        if new_rev is None or new_rev <= old_rev:
            findings.append(PerfFinding(
                code="UPDATE_WITHOUT_REV_BUMP",
                severity=FindingSeverity.CRITICAL,
                message=(
                    f"update of {candidate.updated_rule_id} must raise rev above {old_rev}, "
                    f"got {new_rev}"
                ),
            ))
    return findings


def _content_byte_length(value: str) -> int:
    """Length in bytes of a Snort content literal, counting |AB CD| hex blocks."""
    text = value.strip()
    if text.startswith("!"):
        text = text[1:]
    text = text.strip('"')
    total = 0
    for n, part in enumerate(text.split("|")):
        if n % 2 == 1:
            total += len(part.split())
        else:
            total += len(part)
    return total


def _has_fast_pattern_candidate(contents) -> bool:
    return any(
        opt.value is not None and _content_byte_length(opt.value) >= MIN_ATOM_BYTES
        for opt in contents
    )


# --------------------------------------------------------------------------
# The gate

_PERF_JUDGE_SYSTEM = (
    "You are a detection-engineering reviewer focused on runtime efficiency. "
    "Given a candidate IDS rule, suggest concrete performance improvements "
    "(modifier coverage, anchoring, scoping). Respond with JSON only: "
    '{"suggestions": ["..."]}. Use an empty list when nothing helps.'
)


def validate_performance(
    candidate: CandidateRule,
    ast: SnortRuleAst | YaraRuleAst,
    ctx: PerfContext,
) -> ValidationFeedback:
    """Run every static check; verdict is false iff a critical finding exists."""
    findings: list[PerfFinding] = []
    medium = RuleMedium.SNORT if isinstance(ast, SnortRuleAst) else RuleMedium.YARA

    normalized = _normalize_text(candidate.rule_text)
    for rule in ctx.corpus.deployed(medium):
        if _normalize_text(rule.raw_text) == normalized:
            findings.append(PerfFinding(
                code="DUPLICATE_OF_DEPLOYED",
                severity=FindingSeverity.CRITICAL,
                message=f"candidate is textually identical to deployed rule {rule.id}",
            ))
            break

    if isinstance(ast, YaraRuleAst):
        findings.extend(_yara_findings(ast))
    else:
        findings.extend(_snort_findings(ast, candidate, ctx))

    if candidate.action is CandidateAction.NEW and ctx.index.has_embeddings():
        already_flagged = {f.code for f in findings}
        hits = redundancy_scan(
            candidate.rule_text, ctx.index, ctx.calibration, ctx.embedder, ctx.dedup_threshold
        )
        if hits and "DUPLICATE_OF_DEPLOYED" not in already_flagged:
            top_id, top_score = hits[0]
            findings.append(PerfFinding(
                code="NEAR_DUPLICATE",
                severity=FindingSeverity.CRITICAL,
                message=(
                    f"candidate scores {top_score:.3f} against deployed rule {top_id} "
                    f"(threshold {ctx.dedup_threshold}); declare ACTION: update {top_id} instead"
                ),
            ))

    if ctx.judge is not None:
        findings.extend(_judge_suggestions(candidate, ctx))

    has_critical = any(f.severity is FindingSeverity.CRITICAL for f in findings)
    lines = [
        f"{n}. [{f.severity.value}] {f.code}: {f.message}"
        for n, f in enumerate(findings, start=1)
    ]
    return ValidationFeedback(
        stage=ValidationStage.PERFORMANCE,
        status=not has_critical,
        feedback="\n".join(lines),
        findings=tuple(findings),
    )


def _judge_suggestions(candidate: CandidateRule, ctx: PerfContext) -> list[PerfFinding]:
    messages = [
        {"role": "system", "content": _PERF_JUDGE_SYSTEM},
        {"role": "user", "content": candidate.rule_text},
    ]
    try:
        raw = ctx.judge.complete(messages, ctx.llm_config)
        match = re.search(r"\{.*\}", raw, flags=re.DOTALL)
        if not match:
            raise ValueError("no JSON object in judge response")
        suggestions = json.loads(match.group(0)).get("suggestions", [])
        return [
            PerfFinding(code="LLM_SUGGESTION", severity=FindingSeverity.INFO, message=str(s))
            for s in suggestions
        ]
    except (LlmError, ValueError, json.JSONDecodeError) as exc:
        return [PerfFinding(
            code="LLM_SUGGESTION",
            severity=FindingSeverity.INFO,
            message=f"performance judge unavailable, static checks only ({exc})",
        )]
