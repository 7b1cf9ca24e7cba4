"""Syntax validation gate: binary verdict plus parser output as feedback."""
from __future__ import annotations

from falcon.feedback import ValidationFeedback, ValidationStage
from falcon.rules.model import ParseResult, RuleMedium
from falcon.rules.snort import parse_snort
from falcon.rules.yara import parse_yara


def parse_rule(raw_text: str, medium: RuleMedium) -> ParseResult:
    if medium is RuleMedium.SNORT:
        return parse_snort(raw_text)
    return parse_yara(raw_text)


def validate_syntax(raw_text: str, medium: RuleMedium) -> ValidationFeedback:
    """True iff the rule parses with zero errors; feedback carries diagnostics."""
    result = parse_rule(raw_text, medium)
    rendered = "\n".join(d.render() for d in result.errors)
    return ValidationFeedback(
        stage=ValidationStage.SYNTAX,
        status=result.ok,
        feedback=rendered,
    )
