from __future__ import annotations

import pytest

from falcon.corpus import CorpusStore
from falcon.feedback import FindingSeverity
from falcon.generation import CandidateAction, CandidateRule
from falcon.llm import MockChatClient
from falcon.perf import (
    PerfContext,
    hex_atom_length,
    redundancy_scan,
    regex_atom_length,
    text_atom_length,
    validate_performance,
)
from falcon.retrieval import build_index
from falcon.rules.model import RuleMedium
from falcon.rules.syntax import parse_rule
from falcon.scorer import ScorerCalibration


@pytest.fixture()
def ctx(tmp_path, embedder):
    corpus = CorpusStore(tmp_path / "corpus")
    index = build_index([], RuleMedium.YARA, with_embeddings=False)
    return PerfContext(
        corpus=corpus,
        index=index,
        calibration=ScorerCalibration(),
        embedder=embedder,
    )


def _ctx_with_deployed(tmp_path, embedder, rules: list[tuple[str, RuleMedium, str]],
                       dedup_threshold: float = 0.90) -> PerfContext:
    corpus = CorpusStore(tmp_path / "corpus")
    for rule_id, medium, text in rules:
        corpus.deploy_generated(rule_id, medium, text)
    media = {medium for _, medium, _ in rules} or {RuleMedium.YARA}
    medium = next(iter(media))
    index = build_index(corpus.deployed(medium), medium,
                        with_embeddings=True, embedder=embedder)
    return PerfContext(corpus=corpus, index=index, calibration=ScorerCalibration(),
                       embedder=embedder, dedup_threshold=dedup_threshold)


def _validate(text: str, ctx: PerfContext, medium=RuleMedium.YARA,
              action=CandidateAction.NEW, updated_rule_id=None):
    candidate = CandidateRule(rule_text=text, action=action, updated_rule_id=updated_rule_id)
    result = parse_rule(text, medium)
    assert result.ok, result.diagnostics[:1]
    return validate_performance(candidate, result.ast, ctx)


def _codes(feedback):
    return [f.code for f in feedback.findings]


# -- atom estimation

def test_text_atom_length_counts_escapes():
    assert text_atom_length("abcd") == 4
    assert text_atom_length("a\\x41b") == 3
    assert text_atom_length("\\\\ab") == 3


def test_hex_atom_length_runs():
    assert hex_atom_length(("4D", "5A", "90", "00")) == 4
    assert hex_atom_length(("4D", "??", "5A", "90")) == 2
    assert hex_atom_length(("4D", "5A", "[2-4]", "90", "00", "00")) == 3
    assert hex_atom_length(("(", "4D", "|", "5A", ")")) == 1


def test_regex_atom_length():
    assert regex_atom_length("https?://example") >= 4  # 'example' run
    assert regex_atom_length(".*ab") == 2
    assert regex_atom_length("a+b?c") == 1  # quantified chars dropped; bare 'c' remains
    assert regex_atom_length("\\d{4}abcd") == 4


# -- YARA findings

def test_short_atom_critical(ctx):
    text = 'rule t { strings: $a = "ab" $b = { 4D ?? } condition: any of them }'
    feedback = _validate(text, ctx)
    assert "SHORT_ATOM" in _codes(feedback)
    assert not feedback.status


def test_long_atom_passes(ctx):
    text = 'rule t { strings: $a = "abcdef" condition: $a }'
    feedback = _validate(text, ctx)
    assert "SHORT_ATOM" not in _codes(feedback)
    assert feedback.status


def test_regex_leading_wildcard_critical(ctx):
    text = 'rule t { strings: $re = /.*evil_payload/ condition: $re }'
    feedback = _validate(text, ctx)
    assert "REGEX_UNANCHORED_LEADING_WILDCARD" in _codes(feedback)
    assert not feedback.status


def test_condition_always_true_critical(ctx):
    feedback = _validate("rule t { condition: true }", ctx)
    assert "CONDITION_ALWAYS_TRUE" in _codes(feedback)
    const_cmp = _validate("rule t { condition: 2 > 1 and 0x10 == 16 }", ctx)
    assert "CONDITION_ALWAYS_TRUE" in _codes(const_cmp)


def test_pe_rule_without_header_guard_warns(ctx):
    text = '''import "pe"

rule t
{
    condition:
        pe.number_of_sections > 4
}'''
    feedback = _validate(text, ctx)
    assert "NO_FILE_HEADER_GUARD" in _codes(feedback)
    assert feedback.status  # warning only


def test_pe_rule_with_guard_clean(ctx):
    text = '''import "pe"

rule t
{
    condition:
        uint16(0) == 0x5A4D and pe.number_of_sections > 4
}'''
    feedback = _validate(text, ctx)
    assert "NO_FILE_HEADER_GUARD" not in _codes(feedback)


def test_missing_wide_for_dotnet_guid(ctx):
    text = ('rule t { strings: '
            '$guid = "1fff2aee-a540-4613-94ee-4f40eb929549" ascii nocase '
            'condition: uint16(0) == 0x5A4D and $guid }')
    feedback = _validate(text, ctx)
    assert "MISSING_WIDE_FOR_DOTNET_GUID" in _codes(feedback)
    assert feedback.status  # warning, not critical

    fixed = text.replace("ascii nocase", "ascii nocase wide")
    assert "MISSING_WIDE_FOR_DOTNET_GUID" not in _codes(_validate(fixed, ctx))


# -- Snort findings

def test_pcre_without_content_warns(tmp_path, embedder):
    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    text = 'alert tcp $EXTERNAL_NET any -> $HOME_NET 80 (msg:"re only"; pcre:"/evil[0-9]+/"; sid:5000001; rev:1;)'
    feedback = _validate(text, ctx, medium=RuleMedium.SNORT)
    assert "PCRE_WITHOUT_CONTENT" in _codes(feedback)
    assert feedback.status


def test_missing_fast_pattern_info(tmp_path, embedder):
    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    text = 'alert tcp any 80 -> any any (msg:"tiny content"; content:"ab"; sid:5000002; rev:1;)'
    feedback = _validate(text, ctx, medium=RuleMedium.SNORT)
    assert "MISSING_FAST_PATTERN_CANDIDATE" in _codes(feedback)
    severity = next(f.severity for f in feedback.findings
                    if f.code == "MISSING_FAST_PATTERN_CANDIDATE")
    assert severity is FindingSeverity.INFO


def test_any_any_both_directions_warns(tmp_path, embedder):
    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    text = 'alert tcp any any -> any any (msg:"wide open"; content:"abcdef"; sid:5000003; rev:1;)'
    feedback = _validate(text, ctx, medium=RuleMedium.SNORT)
    assert "ANY_ANY_BOTH_DIRECTIONS" in _codes(feedback)


def test_sid_collision_critical(tmp_path, embedder):
    deployed = ('alert tcp $HOME_NET any -> $EXTERNAL_NET 80 '
                '(msg:"existing"; content:"beacon-path"; sid:6000100; rev:1;)')
    ctx = _ctx_with_deployed(tmp_path, embedder, [("snort-dep-0001", RuleMedium.SNORT, deployed)])
    text = ('alert tcp $HOME_NET any -> $EXTERNAL_NET 443 '
            '(msg:"new rule"; content:"other-path"; sid:6000100; rev:1;)')
    feedback = _validate(text, ctx, medium=RuleMedium.SNORT)
    assert "SID_COLLISION" in _codes(feedback)
    assert not feedback.status


def test_update_without_rev_bump_critical(tmp_path, embedder):
    deployed = ('alert tcp $HOME_NET any -> $EXTERNAL_NET 80 '
                '(msg:"old"; content:"beacon-path"; sid:6000200; rev:2;)')
    ctx = _ctx_with_deployed(tmp_path, embedder, [("snort-dep-0002", RuleMedium.SNORT, deployed)])
    same_rev = ('alert tcp $HOME_NET any -> $EXTERNAL_NET 80 '
                '(msg:"new"; content:"beacon-path-v2"; sid:6000200; rev:2;)')
    feedback = _validate(same_rev, ctx, medium=RuleMedium.SNORT,
                         action=CandidateAction.UPDATE, updated_rule_id="snort-dep-0002")
    assert "UPDATE_WITHOUT_REV_BUMP" in _codes(feedback)
    assert not feedback.status

    bumped = same_rev.replace("rev:2;", "rev:3;")
    feedback = _validate(bumped, ctx, medium=RuleMedium.SNORT,
                         action=CandidateAction.UPDATE, updated_rule_id="snort-dep-0002")
    assert "UPDATE_WITHOUT_REV_BUMP" not in _codes(feedback)
    # updating the rule that owns the sid is not a collision
    assert "SID_COLLISION" not in _codes(feedback)


# -- shared findings

def test_duplicate_of_deployed(tmp_path, embedder):
    rule = 'rule dup { strings: $a = "abcdefgh" condition: $a }'
    ctx = _ctx_with_deployed(tmp_path, embedder, [("yara-dep-0001", RuleMedium.YARA, rule)])
    feedback = _validate(rule, ctx)
    assert "DUPLICATE_OF_DEPLOYED" in _codes(feedback)
    message = next(f.message for f in feedback.findings if f.code == "DUPLICATE_OF_DEPLOYED")
    assert "yara-dep-0001" in message
    assert not feedback.status


def test_near_duplicate_requires_update(tmp_path, embedder):
    deployed = ('rule near { strings: $a = "c0ffee00-dead-beef-aaaa-bbbbccccdddd" ascii wide '
                'condition: uint16(0) == 0x5A4D and $a }')
    ctx = _ctx_with_deployed(tmp_path, embedder,
                             [("yara-dep-0002", RuleMedium.YARA, deployed)],
                             dedup_threshold=0.80)
    near = deployed.replace("rule near", "rule near_copy").replace("ascii wide", "ascii")
    feedback = _validate(near, ctx, action=CandidateAction.NEW)
    assert "NEAR_DUPLICATE" in _codes(feedback)
    assert not feedback.status
    # declared as an update of that rule, the near-match is expected
    update = _validate(near, ctx, action=CandidateAction.UPDATE,
                       updated_rule_id="yara-dep-0002")
    assert "NEAR_DUPLICATE" not in _codes(update)


def test_redundancy_scan_empty_corpus(tmp_path, embedder):
    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    assert redundancy_scan("rule t { condition: true }", ctx.index,
                           ctx.calibration, ctx.embedder) == []


def test_redundancy_scan_self_similarity(tmp_path, embedder):
    rule = 'rule self { strings: $a = "unique-marker-123456" condition: $a }'
    ctx = _ctx_with_deployed(tmp_path, embedder, [("yara-dep-0003", RuleMedium.YARA, rule)])
    hits = redundancy_scan(rule, ctx.index, ctx.calibration, ctx.embedder, threshold=0.5)
    assert hits[0][0] == "yara-dep-0003"
    assert hits[0][1] == pytest.approx(ctx.calibration.scale(1.0), abs=1e-9)


def test_redundancy_scan_sorted_and_thresholded(tmp_path, embedder):
    shared = 'rule shared { strings: $a = "dd8805d0e470e59b829d98397507d8c2" condition: $a }'
    other = 'rule other { strings: $b = "completely different text payload" condition: $b }'
    ctx = _ctx_with_deployed(tmp_path, embedder, [
        ("yara-dep-share", RuleMedium.YARA, shared),
        ("yara-dep-other", RuleMedium.YARA, other),
    ])
    candidate = 'rule cand { strings: $a = "dd8805d0e470e59b829d98397507d8c2" nocase condition: $a }'
    hits = redundancy_scan(candidate, ctx.index, ctx.calibration, ctx.embedder, threshold=0.9)
    assert [rid for rid, _ in hits] == ["yara-dep-share"]
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)


def test_status_iff_no_critical(ctx):
    ok = _validate('rule t { strings: $a = "abcdefgh" condition: $a }', ctx)
    assert ok.status
    assert not any(f.severity is FindingSeverity.CRITICAL for f in ok.findings)
    bad = _validate('rule t { strings: $a = "ab" condition: $a }', ctx)
    assert not bad.status
    assert any(f.severity is FindingSeverity.CRITICAL for f in bad.findings)


def test_deterministic_without_judge(ctx):
    text = 'rule t { strings: $a = "ab" condition: $a }'
    assert _validate(text, ctx) == _validate(text, ctx)


def test_llm_judge_suggestions_are_info(tmp_path, embedder):
    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    ctx.judge = MockChatClient(['{"suggestions": ["Introduce wide modifier for coverage"]}'])
    feedback = _validate('rule t { strings: $a = "abcdefgh" condition: $a }', ctx)
    assert "LLM_SUGGESTION" in _codes(feedback)
    assert feedback.status  # info never fails the gate


def test_llm_judge_failure_degrades(tmp_path, embedder):
    class _Dead:
        def complete(self, messages, config):
            from falcon.llm import LlmError
            raise LlmError("down")

    ctx = _ctx_with_deployed(tmp_path, embedder, [])
    ctx.judge = _Dead()
    feedback = _validate('rule t { strings: $a = "abcdefgh" condition: $a }', ctx)
    assert feedback.status
    assert any("judge unavailable" in f.message for f in feedback.findings)
