"""Rule domain types, parsers, serializers, and the syntax gate."""
from falcon.rules.files import iter_snort_rules, load_snort_file, load_yara_file
from falcon.rules.model import (
    CorpusStatus,
    Direction,
    IdsRule,
    OptionNode,
    ParseResult,
    RuleMedium,
    RuleSource,
    SnortAction,
    SnortProtocol,
    SnortRuleAst,
    SyntaxDiagnostic,
    YaraRuleAst,
    YaraString,
    YaraStringKind,
)
from falcon.rules.snort import parse_snort, serialize_snort
from falcon.rules.syntax import parse_rule, validate_syntax
from falcon.rules.yara import parse_yara, parse_yara_file, serialize_yara


def serialize(ast: SnortRuleAst | YaraRuleAst) -> str:
    """Render any rule AST back to canonical text."""
    if isinstance(ast, SnortRuleAst):
        return serialize_snort(ast)
    if isinstance(ast, YaraRuleAst):
        return serialize_yara(ast)
    raise TypeError(f"not a rule AST: {type(ast).__name__}")


__all__ = [
    "CorpusStatus", "Direction", "IdsRule", "OptionNode", "ParseResult",
    "RuleMedium", "RuleSource", "SnortAction", "SnortProtocol", "SnortRuleAst",
    "SyntaxDiagnostic", "YaraRuleAst", "YaraString", "YaraStringKind",
    "iter_snort_rules", "load_snort_file", "load_yara_file",
    "parse_rule", "parse_snort", "parse_yara", "parse_yara_file",
    "serialize", "serialize_snort", "serialize_yara", "validate_syntax",
]
