from __future__ import annotations

import hypothesis.strategies as st
from hypothesis import given, settings

from falcon.rules.files import load_yara_file
from falcon.rules.model import (
    Binary,
    BoolLit,
    Filesize,
    IntLit,
    IntRead,
    OfExpr,
    RuleMedium,
    StringCount,
    StringRef,
    Unary,
    YaraRuleAst,
    YaraString,
    YaraStringKind,
)
from falcon.rules.syntax import validate_syntax
from falcon.rules.yara import parse_yara, parse_yara_file, render_expr, serialize_yara


def test_corehound_final_rule(corehound_final):
    result = parse_yara(corehound_final)
    assert result.ok
    ast = result.ast
    assert ast.name == "HackTool_MSIL_CoreHound"
    assert len(ast.strings) == 1
    assert ast.strings[0].modifiers == ("ascii", "nocase", "wide")
    assert dict(ast.meta)["md5"] == "dd8805d0e470e59b829d98397507d8c2"
    rendered = serialize_yara(ast)
    again = parse_yara(rendered)
    assert again.ok
    assert again.ast == ast


def test_corehound_initial_colon_rejected(corehound_initial):
    result = parse_yara(corehound_initial)
    assert not result.ok
    diag = result.errors[0]
    lines = corehound_initial.split("\n")
    assert lines[diag.line - 1][diag.column - 1] == ":"
    assert "expected '='" in diag.message


def test_them_with_zero_strings():
    result = parse_yara("rule t { condition: any of them }")
    assert not result.ok
    assert "'them' requires at least one declared string" in result.errors[0].message


def test_undeclared_string_reference():
    result = parse_yara('rule t { strings: $a = "abcd" condition: $a and $missing }')
    assert not result.ok
    assert "undeclared string $missing" in result.errors[0].message


def test_duplicate_string_id():
    result = parse_yara('rule t { strings: $a = "abcd" $a = "efgh" condition: all of them }')
    assert not result.ok
    assert "duplicate string identifier" in result.errors[0].message


def test_bad_hex_byte():
    result = parse_yara("rule t { strings: $h = { 4D 5G } condition: $h }")
    assert not result.ok
    assert "hex" in result.errors[0].message.lower()


def test_uneven_hex_nibbles():
    result = parse_yara("rule t { strings: $h = { 4D5 } condition: $h }")
    assert not result.ok


def test_unreferenced_string_rejected():
    result = parse_yara('rule t { strings: $a = "abcd" $b = "efgh" condition: $a }')
    assert not result.ok
    assert "unreferenced string $b" in result.errors[0].message


def test_empty_input_diagnostic():
    result = parse_yara("")
    assert not result.ok
    assert (result.errors[0].line, result.errors[0].column) == (1, 1)


def test_meta_value_types():
    text = '''rule m
{
    meta:
        s = "text"
        n = 42
        neg = -7
        flag = true
        off = false
    strings:
        $a = "abcd"
    condition:
        $a
}'''
    result = parse_yara(text)
    assert result.ok
    assert result.ast.meta == (("s", "text"), ("n", 42), ("neg", -7),
                               ("flag", True), ("off", False))
    again = parse_yara(serialize_yara(result.ast))
    assert again.ast == result.ast


def test_empty_meta_serializes_without_section():
    result = parse_yara('rule bare { strings: $a = "abcd" condition: $a }')
    assert result.ok
    assert result.ast.meta == ()
    rendered = serialize_yara(result.ast)
    assert "meta:" not in rendered
    assert parse_yara(rendered).ast == result.ast


def test_tags_modifiers_imports():
    text = '''import "pe"

private rule Tagged : apt loader
{
    strings:
        $a = { 4D 5A [2-4] ( 50 45 | 4C 45 ) ?? 90 }
    condition:
        $a and pe.number_of_sections > 3
}'''
    result = parse_yara(text)
    assert result.ok
    ast = result.ast
    assert ast.is_private and not ast.is_global
    assert ast.tags == ("apt", "loader")
    assert ast.imports == ("pe",)
    assert ast.strings[0].hex_tokens == ("4D", "5A", "[2-4]", "(", "50", "45", "|", "4C", "45", ")", "??", "90")
    again = parse_yara(serialize_yara(ast))
    assert again.ok and again.ast == ast


def test_condition_expression_variety():
    text = '''rule expr
{
    strings:
        $a = "abcd"
        $b = "efgh" nocase
        $re = /https?:\\/\\/[a-z]{4,12}/ ascii
    condition:
        (#a > 2 or @b[1] < 0x100) and
        $re and
        filesize < 2MB and
        uint32be(4) == 0x50450000 and
        2 of ($a, $b) and
        not ($a at entrypoint + 16)
}'''
    result = parse_yara(text)
    assert result.ok
    rendered = serialize_yara(result.ast)
    again = parse_yara(rendered)
    assert again.ok, again.diagnostics
    assert again.ast == result.ast


def test_precedence_and_or():
    result = parse_yara('rule p { strings: $a="aaaa" $b="bbbb" $c="cccc" condition: $a and $b or $c }')
    assert result.ok
    cond = result.ast.condition
    assert isinstance(cond, Binary) and cond.op == "or"
    assert isinstance(cond.left, Binary) and cond.left.op == "and"


def test_explicit_right_parens_preserved():
    result = parse_yara('rule p { strings: $a="aaaa" $b="bbbb" $c="cccc" condition: $a and ($b and $c) }')
    assert result.ok
    cond = result.ast.condition
    assert isinstance(cond.right, Binary)
    rendered = render_expr(cond)
    assert rendered == "$a and ($b and $c)"
    again = parse_yara(serialize_yara(result.ast))
    assert again.ast == result.ast


def test_not_binds_tighter_than_and():
    result = parse_yara('rule p { strings: $a="aaaa" $b="bbbb" condition: not $a and $b }')
    assert result.ok
    cond = result.ast.condition
    assert cond.op == "and"
    assert isinstance(cond.left, Unary) and cond.left.op == "not"


def test_wildcard_set_requires_match():
    result = parse_yara('rule p { strings: $a1="aaaa" condition: any of ($b*) }')
    assert not result.ok
    assert "no declared string matches" in result.errors[0].message


def test_anonymous_strings_them_only():
    ok = parse_yara('rule p { strings: $ = "aaaa" $ = "bbbb" condition: any of them }')
    assert ok.ok
    bad = parse_yara('rule p { strings: $ = "aaaa" condition: filesize > 10 }')
    assert not bad.ok
    assert "anonymous" in bad.errors[0].message


def test_for_loops_out_of_scope():
    result = parse_yara(
        'rule p { strings: $a="aaaa" condition: for all i in (1..#a) : (@a[i] < 100) }'
    )
    assert not result.ok
    assert "not supported" in result.errors[0].message


def test_validate_syntax_yara(corehound_final, corehound_initial):
    good = validate_syntax(corehound_final, RuleMedium.YARA)
    assert good.status and good.score is None
    bad = validate_syntax(corehound_initial, RuleMedium.YARA)
    assert not bad.status
    assert ":" in bad.feedback and "7:" in bad.feedback


def test_multi_rule_file_with_recovery():
    text = '''// header comment
import "pe"

rule good_one { strings: $a = "abcd" condition: $a }

rule broken { strings: $a : "abcd" condition: $a }

rule good_two { condition: uint16(0) == 0x5A4D }
'''
    results = parse_yara_file(text)
    assert len(results) == 3
    assert results[0][0].ok
    assert not results[1][0].ok
    assert results[2][0].ok
    assert results[0][1].startswith("rule good_one")
    assert results[2][0].ast.imports == ("pe",)


def test_corpus_file_roundtrip(data_dir):
    path = data_dir / "corpus" / "yara" / "public-sample.yar"
    pairs = load_yara_file(path)
    assert len(pairs) >= 100
    for raw, result in pairs:
        assert result.ok, f"fixture rule failed: {raw[:60]} {result.errors[:1]}"
        rendered = serialize_yara(result.ast)
        again = parse_yara(rendered)
        assert again.ok, f"{rendered[:120]}: {again.diagnostics[:1]}"
        assert again.ast == result.ast


def test_determinism(corehound_final):
    a = parse_yara(corehound_final)
    b = parse_yara(corehound_final)
    assert a.ast == b.ast


# -- generated expression round-trips

_leaf = st.sampled_from([
    BoolLit(True), BoolLit(False), Filesize(),
    IntLit(value=0x5A4D, lexeme="0x5A4D"), IntLit(value=7, lexeme="7"),
    IntLit(value=10240, lexeme="10KB"),
    StringRef("a"), StringRef("b"), StringCount("a"),
    IntRead(func="uint16", arg=IntLit(value=0, lexeme="0")),
    OfExpr(quantifier="any", targets=None),
    OfExpr(quantifier=IntLit(value=1, lexeme="1"), targets=("a", "b")),
])

_num_ops = st.sampled_from(["+", "-", "*", "\\", "%", "&", "|", "^", "<<", ">>"])
_cmp_ops = st.sampled_from(["==", "!=", "<", "<=", ">", ">="])
_bool_ops = st.sampled_from(["and", "or"])


def _exprs(depth: int):
    if depth == 0:
        return _leaf
    sub = _exprs(depth - 1)
    return st.one_of(
        _leaf,
        st.builds(lambda op, l, r: Binary(op=op, left=l, right=r), _bool_ops, sub, sub),
        st.builds(lambda op, l, r: Binary(op=op, left=l, right=r), _cmp_ops, sub, sub),
        st.builds(lambda op, l, r: Binary(op=op, left=l, right=r), _num_ops, sub, sub),
        st.builds(lambda e: Unary(op="not", operand=e), sub),
        st.builds(lambda e: Unary(op="-", operand=e), sub),
    )


@settings(max_examples=200, deadline=None)
@given(_exprs(3))
def test_generated_condition_roundtrip(expr):
    ast = YaraRuleAst(
        name="generated",
        strings=(
            YaraString(name="a", kind=YaraStringKind.TEXT, value="aaaa"),
            YaraString(name="b", kind=YaraStringKind.TEXT, value="bbbb"),
        ),
        condition=Binary(op="and", left=OfExpr(quantifier="any", targets=None), right=expr),
    )
    rendered = serialize_yara(ast)
    result = parse_yara(rendered)
    assert result.ok, f"{rendered}: {result.diagnostics[:1]}"
    assert result.ast == ast
