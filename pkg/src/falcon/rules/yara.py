"""Parser and serializer for YARA rules.

Covers text/hex/regex strings with the standard modifier set, and condition
expressions over boolean operators, string references (`$a`, `#a`, `@a`,
`!a`, `at`, `in`), `of` quantifiers, integer reads (uintN/intN), filesize,
and arithmetic/comparison. Module references (`pe.`, `cuckoo.`) parse as
opaque dotted identifier paths; nothing is evaluated.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from falcon.rules.model import (
    Binary,
    BoolLit,
    Call,
    Entrypoint,
    Expr,
    Filesize,
    Ident,
    IntLit,
    IntRead,
    LineMap,
    OfExpr,
    ParseResult,
    RegexLit,
    StringAt,
    StringCount,
    StringIn,
    StringLength,
    StringOffset,
    StringRef,
    StrLit,
    SyntaxDiagnostic,
    Unary,
    YaraRuleAst,
    YaraString,
    YaraStringKind,
)

MAX_DIAGNOSTICS = 25

_KEYWORDS = {
    "rule", "private", "global", "meta", "strings", "condition", "import",
    "include", "true", "false", "not", "and", "or", "at", "in", "of", "them",
    "all", "any", "filesize", "entrypoint", "contains", "matches", "for",
}

_INT_READ_FUNCS = {
    f"{sign}int{width}{endian}"
    for sign in ("u", "")
    for width in (8, 16, 32)
    for endian in ("", "be")
}

TEXT_MODIFIERS = ("ascii", "nocase", "wide", "fullword", "xor", "base64", "base64wide", "private")
_MODIFIERS_BY_KIND = {
    YaraStringKind.TEXT: set(TEXT_MODIFIERS),
    YaraStringKind.REGEX: {"ascii", "nocase", "wide", "fullword", "private"},
    YaraStringKind.HEX: {"private"},
}

_ESCAPE_RE = re.compile(r'\\(x[0-9A-Fa-f]{2}|[\\"tnr])')


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | string_id | string_count | string_offset |
    #            string_length | int | str | regex | op | eof
    text: str
    start: int
    end: int
    value: object = None


class YaraSyntaxError(Exception):
    def __init__(self, offset: int, message: str):
        super().__init__(message)
        self.offset = offset
        self.message = message


class _Lexer:
    _OPS = ("<<", ">>", "<=", ">=", "==", "!=", "..",
            "{", "}", "(", ")", "[", "]", ":", "=", ",", ".", "*", "\\", "%",
            "+", "-", "<", ">", "&", "|", "^", "~")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.n = len(text)
        self._buffer: list[_Token] = []

    def peek(self, k: int = 0) -> _Token:
        while len(self._buffer) <= k:
            self._buffer.append(self._scan())
        return self._buffer[k]

    def next(self) -> _Token:
        tok = self.peek()
        self._buffer.pop(0)
        return tok

    def _skip_trivia(self) -> None:
        while self.pos < self.n:
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif self.text.startswith("//", self.pos):
                nl = self.text.find("\n", self.pos)
                self.pos = self.n if nl < 0 else nl + 1
            elif self.text.startswith("/*", self.pos):
                close = self.text.find("*/", self.pos + 2)
                if close < 0:
                    raise YaraSyntaxError(self.pos, "unterminated block comment")
                self.pos = close + 2
            else:
                return

    def _scan(self) -> _Token:
        self._skip_trivia()
        if self.pos >= self.n:
            return _Token("eof", "", self.pos, self.pos)
        start = self.pos
        ch = self.text[start]

        if ch.isalpha() or ch == "_":
            m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", self.text[start:])
            self.pos = start + m.end()
            return _Token("ident", m.group(0), start, self.pos)

        if ch in "$#@":
            kind = {"$": "string_id", "#": "string_count", "@": "string_offset"}[ch]
            m = re.match(r"[A-Za-z0-9_]*", self.text[start + 1 :])
            self.pos = start + 1 + m.end()
            return _Token(kind, self.text[start : self.pos], start, self.pos, value=m.group(0))

        if ch == "!":
            if self.text.startswith("!=", start):
                self.pos = start + 2
                return _Token("op", "!=", start, self.pos)
            m = re.match(r"[A-Za-z0-9_]+", self.text[start + 1 :])
            if m:
                self.pos = start + 1 + m.end()
                return _Token("string_length", self.text[start : self.pos], start, self.pos,
                              value=m.group(0))
            raise YaraSyntaxError(start, "unexpected '!'")

        if ch.isdigit():
            m = re.match(r"0x[0-9A-Fa-f]+|\d+(KB|MB)?", self.text[start:])
            lexeme = m.group(0)
            self.pos = start + len(lexeme)
            if lexeme.startswith("0x"):
                value = int(lexeme, 16)
            elif lexeme.endswith("KB"):
                value = int(lexeme[:-2]) * 1024
            elif lexeme.endswith("MB"):
                value = int(lexeme[:-2]) * 1024 * 1024
            else:
                value = int(lexeme)
            return _Token("int", lexeme, start, self.pos, value=value)

        if ch == '"':
            return self._scan_string(start)

        if ch == "/":
            return self._scan_regex(start)

        for op in self._OPS:
            if self.text.startswith(op, start):
                self.pos = start + len(op)
                return _Token("op", op, start, self.pos)

        raise YaraSyntaxError(start, f"unexpected character {ch!r}")

    def _scan_string(self, start: int) -> _Token:
        i = start + 1
        while i < self.n:
            ch = self.text[i]
            if ch == "\\":
                m = _ESCAPE_RE.match(self.text, i)
                if not m:
                    raise YaraSyntaxError(i, f"invalid escape sequence {self.text[i:i+2]!r}")
                i = m.end()
                continue
            if ch == '"':
                self.pos = i + 1
                return _Token("str", self.text[start : self.pos], start, self.pos,
                              value=self.text[start + 1 : i])
            if ch == "\n":
                break
            i += 1
        raise YaraSyntaxError(start, "unterminated string literal")

    def _scan_regex(self, start: int) -> _Token:
        i = start + 1
        if i < self.n and self.text[i] == "*":
            raise YaraSyntaxError(start, "regex cannot start with '*'")
        while i < self.n:
            ch = self.text[i]
            if ch == "\\" and i + 1 < self.n:
                i += 2
                continue
            if ch == "/":
                pattern = self.text[start + 1 : i]
                if not pattern:
                    raise YaraSyntaxError(start, "empty regex literal")
                m = re.match(r"[is]*", self.text[i + 1 :])
                self.pos = i + 1 + m.end()
                return _Token("regex", self.text[start : self.pos], start, self.pos,
                              value=(pattern, m.group(0)))
            if ch == "\n":
                break
            i += 1
        raise YaraSyntaxError(start, "unterminated regex literal")

    def scan_hex_body(self) -> list[str]:
        """Scan raw hex-string tokens from the current offset up to '}'.

        Only called right after the opening '{' was consumed; the token
        buffer must be empty so offsets line up.
        """
        assert not self._buffer, "lookahead across hex-string boundary"
        tokens: list[str] = []
        run = ""
        run_start = self.pos
        depth = 0
        while self.pos < self.n:
            ch = self.text[self.pos]
            if ch in "0123456789abcdefABCDEF?":
                if not run:
                    run_start = self.pos
                run += ch
                self.pos += 1
                continue
            if run:
                if len(run) % 2 != 0:
                    raise YaraSyntaxError(run_start, f"uneven hex nibble run '{run}'")
                tokens.extend(run[i : i + 2].upper() for i in range(0, len(run), 2))
                run = ""
            if ch in " \t\r\n":
                self.pos += 1
            elif self.text.startswith("//", self.pos):
                nl = self.text.find("\n", self.pos)
                self.pos = self.n if nl < 0 else nl + 1
            elif self.text.startswith("/*", self.pos):
                close = self.text.find("*/", self.pos + 2)
                if close < 0:
                    raise YaraSyntaxError(self.pos, "unterminated block comment")
                self.pos = close + 2
            elif ch == "[":
                close = self.text.find("]", self.pos)
                if close < 0:
                    raise YaraSyntaxError(self.pos, "unterminated hex jump '['")
                jump = self.text[self.pos : close + 1].replace(" ", "")
                if not _valid_jump(jump):
                    raise YaraSyntaxError(self.pos, f"invalid hex jump '{jump}'")
                tokens.append(jump)
                self.pos = close + 1
            elif ch == "(":
                depth += 1
                tokens.append("(")
                self.pos += 1
            elif ch == ")":
                depth -= 1
                if depth < 0:
                    raise YaraSyntaxError(self.pos, "unbalanced ')' in hex string")
                tokens.append(")")
                self.pos += 1
            elif ch == "|":
                if depth == 0:
                    raise YaraSyntaxError(self.pos, "'|' outside alternation group")
                tokens.append("|")
                self.pos += 1
            elif ch == "}":
                if depth != 0:
                    raise YaraSyntaxError(self.pos, "unbalanced '(' in hex string")
                end = self.pos
                self.pos += 1
                if not any(_is_byte_token(t) for t in tokens):
                    raise YaraSyntaxError(end, "hex string contains no bytes")
                return tokens
            else:
                raise YaraSyntaxError(self.pos, f"bad hex byte near {ch!r}")
        raise YaraSyntaxError(self.pos, "unterminated hex string: missing '}'")


def _is_byte_token(tok: str) -> bool:
    return len(tok) == 2 and all(c in "0123456789ABCDEF?" for c in tok)


def _valid_jump(jump: str) -> bool:
    m = re.match(r"^\[(?:(\d+)|(\d*)-(\d*))\]$", jump)
    if not m:
        return False
    if m.group(1) is not None:
        return True
    lo, hi = m.group(2), m.group(3)
    if lo and hi and int(lo) > int(hi):
        return False
    return True


# --------------------------------------------------------------------------
# Parser

_BIN_PREC = {
    "or": 1, "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "contains": 4, "matches": 4,
    "|": 5, "^": 6, "&": 7, "<<": 8, ">>": 8,
    "+": 9, "-": 9, "*": 10, "\\": 10, "%": 10,
}
_NOT_PREC = 3
_UNARY_PREC = 11


class _Parser:
    def __init__(self, lexer: _Lexer):
        self.lx = lexer
        self.declared: list[str] = []
        self.referenced: set[str] = set()
        self.them_used = False
        self.has_anonymous = False
        self.string_errors: list[YaraSyntaxError] = []
        self.last_rule_end = 0

    # -- token helpers

    def _peek(self, k: int = 0) -> _Token:
        return self.lx.peek(k)

    def _next(self) -> _Token:
        return self.lx.next()

    def _expect(self, kind: str, text: str | None = None, what: str = "") -> _Token:
        tok = self._peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            wanted = text if text is not None else kind
            got = tok.text if tok.text else "end of input"
            suffix = f" {what}" if what else ""
            raise YaraSyntaxError(tok.start, f"expected {wanted!r}{suffix}, got {got!r}")
        return self._next()

    def _expect_keyword(self, word: str) -> _Token:
        return self._expect("ident", word)

    # -- rule structure

    def parse_rule(self, imports: tuple[str, ...]) -> YaraRuleAst:
        is_private = is_global = False
        while self._peek().kind == "ident" and self._peek().text in ("private", "global"):
            tok = self._next()
            if tok.text == "private":
                is_private = True
            else:
                is_global = True
        self._expect_keyword("rule")
        name_tok = self._expect("ident", what="as rule name")
        if name_tok.text in _KEYWORDS:
            raise YaraSyntaxError(name_tok.start, f"keyword {name_tok.text!r} cannot name a rule")
        tags: list[str] = []
        if self._peek().kind == "op" and self._peek().text == ":":
            self._next()
            while self._peek().kind == "ident":
                tags.append(self._next().text)
            if not tags:
                raise YaraSyntaxError(self._peek().start, "expected at least one tag after ':'")
        self._expect("op", "{", what="to open rule body")

        self.declared = []
        self.referenced = set()
        self.them_used = False
        self.has_anonymous = False
        self.string_errors = []
        meta: list[tuple[str, str | int | bool]] = []
        strings: list[YaraString] = []
        seen_sections: list[str] = []
        condition: Expr | None = None

        while True:
            tok = self._peek()
            if tok.kind == "op" and tok.text == "}":
                break
            if tok.kind != "ident" or tok.text not in ("meta", "strings", "condition"):
                raise YaraSyntaxError(tok.start, f"expected a rule section, got {tok.text!r}")
            section = tok.text
            order = ["meta", "strings", "condition"]
            if section in seen_sections:
                raise YaraSyntaxError(tok.start, f"duplicate section '{section}'")
            if seen_sections and order.index(section) < order.index(seen_sections[-1]):
                raise YaraSyntaxError(tok.start, f"section '{section}' out of order")
            seen_sections.append(section)
            self._next()
            self._expect("op", ":")
            if section == "meta":
                meta = self._parse_meta()
            elif section == "strings":
                strings = self._parse_strings()
            else:
                condition = self._parse_expression()
                break

        if self.string_errors:
            # Strings-section failures outrank whatever the recovered parse
            # produced further down.
            raise self.string_errors[0]
        if condition is None:
            raise YaraSyntaxError(self._peek().start, "rule has no condition section")
        close = self._expect("op", "}", what="to close rule body")
        self.last_rule_end = close.end

        unreferenced = [s.name for s in strings if s.name and s.name not in self.referenced]
        if unreferenced:
            raise YaraSyntaxError(close.start, f"unreferenced string ${unreferenced[0]}")
        if self.has_anonymous and not self.them_used:
            raise YaraSyntaxError(close.start, "anonymous string requires an 'of them' condition")

        return YaraRuleAst(
            name=name_tok.text,
            tags=tuple(tags),
            meta=tuple(meta),
            strings=tuple(strings),
            condition=condition,
            is_private=is_private,
            is_global=is_global,
            imports=imports,
        )

    def _parse_meta(self) -> list[tuple[str, str | int | bool]]:
        entries: list[tuple[str, str | int | bool]] = []
        while self._peek().kind == "ident" and self._peek().text not in ("strings", "condition"):
            key = self._next()
            self._expect("op", "=", what=f"after meta key '{key.text}'")
            tok = self._peek()
            if tok.kind == "str":
                self._next()
                entries.append((key.text, str(tok.value)))
            elif tok.kind == "int":
                self._next()
                entries.append((key.text, int(tok.value)))  # type: ignore[arg-type]
            elif tok.kind == "op" and tok.text == "-":
                self._next()
                num = self._expect("int", what="after '-'")
                entries.append((key.text, -int(num.value)))  # type: ignore[arg-type]
            elif tok.kind == "ident" and tok.text in ("true", "false"):
                self._next()
                entries.append((key.text, tok.text == "true"))
            else:
                raise YaraSyntaxError(tok.start, f"invalid meta value {tok.text!r}")
        if not entries:
            raise YaraSyntaxError(self._peek().start, "empty meta section")
        return entries

    def _parse_strings(self) -> list[YaraString]:
        strings: list[YaraString] = []
        seen: set[str] = set()
        while self._peek().kind == "string_id":
            try:
                strings.append(self._parse_string_def(seen))
            except YaraSyntaxError as exc:
                if len(self.string_errors) < MAX_DIAGNOSTICS:
                    self.string_errors.append(exc)
                self._recover_string_def()
        if not strings and not self.string_errors:
            raise YaraSyntaxError(self._peek().start, "empty strings section")
        return strings

    def _recover_string_def(self) -> None:
        while True:
            tok = self._peek()
            if tok.kind in ("string_id", "eof"):
                return
            if tok.kind == "ident" and tok.text in ("strings", "condition", "meta"):
                return
            if tok.kind == "op" and tok.text == "}":
                return
            self._next()

    def _parse_string_def(self, seen: set[str]) -> YaraString:
        id_tok = self._next()
        name = str(id_tok.value)
        if name:
            if name in seen:
                # Still declared so condition references resolve during recovery.
                raise YaraSyntaxError(id_tok.start, f"duplicate string identifier ${name}")
            seen.add(name)
            self.declared.append(name)
        else:
            self.has_anonymous = True
        eq = self._peek()
        if not (eq.kind == "op" and eq.text == "="):
            raise YaraSyntaxError(eq.start, f"expected '=' after ${name}, got {eq.text!r}")
        self._next()
        tok = self._peek()
        if tok.kind == "str":
            self._next()
            kind = YaraStringKind.TEXT
            value = str(tok.value)
            hex_tokens: tuple[str, ...] = ()
            regex_mods = ""
        elif tok.kind == "regex":
            self._next()
            kind = YaraStringKind.REGEX
            value, regex_mods = tok.value  # type: ignore[misc]
            hex_tokens = ()
        elif tok.kind == "op" and tok.text == "{":
            self._next()
            toks = self.lx.scan_hex_body()
            kind = YaraStringKind.HEX
            hex_tokens = tuple(toks)
            value = " ".join(toks)
            regex_mods = ""
        else:
            raise YaraSyntaxError(tok.start, f"expected string value, got {tok.text!r}")

        modifiers = self._parse_string_modifiers(kind)
        return YaraString(
            name=name, kind=kind, value=value,
            modifiers=modifiers, hex_tokens=hex_tokens, regex_mods=regex_mods,
        )

    def _parse_string_modifiers(self, kind: YaraStringKind) -> tuple[str, ...]:
        mods: list[str] = []
        allowed = _MODIFIERS_BY_KIND[kind]
        all_mods = set(TEXT_MODIFIERS)
        while self._peek().kind == "ident" and self._peek().text in all_mods:
            tok = self._next()
            mod = tok.text
            if mod not in allowed:
                raise YaraSyntaxError(tok.start, f"modifier '{mod}' not allowed on {kind.value} string")
            if any(m.split("(")[0] == mod for m in mods):
                raise YaraSyntaxError(tok.start, f"duplicate modifier '{mod}'")
            if mod in ("xor", "base64", "base64wide") and \
                    self._peek().kind == "op" and self._peek().text == "(":
                mod += self._collect_modifier_arg()
            mods.append(mod)
        return tuple(mods)

    def _collect_modifier_arg(self) -> str:
        parts = ["("]
        self._next()
        depth = 1
        while True:
            tok = self._next()
            if tok.kind == "eof":
                raise YaraSyntaxError(tok.start, "unterminated modifier argument")
            if tok.kind == "op" and tok.text == "(":
                depth += 1
            elif tok.kind == "op" and tok.text == ")":
                depth -= 1
                if not depth:
                    break
            parts.append(tok.text)
        parts.append(")")
        return "".join(parts)

    # -- condition expressions (Pratt)

    def _parse_expression(self) -> Expr:
        return self._parse_binary(0)

    def _parse_binary(self, min_prec: int) -> Expr:
        left = self._parse_unary()
        while True:
            tok = self._peek()
            op = tok.text
            if tok.kind == "ident" and op in ("and", "or", "contains", "matches"):
                pass
            elif tok.kind != "op" or op not in _BIN_PREC:
                break
            prec = _BIN_PREC.get(op)
            if prec is None or prec < min_prec:
                break
            self._next()
            right = self._parse_binary(prec + 1)
            left = Binary(op=op, left=left, right=right)
        return left

    def _parse_unary(self) -> Expr:
        tok = self._peek()
        if tok.kind == "ident" and tok.text == "not":
            self._next()
            return Unary(op="not", operand=self._parse_binary(_NOT_PREC))
        if tok.kind == "op" and tok.text in ("-", "~"):
            self._next()
            return Unary(op=tok.text, operand=self._parse_binary(_UNARY_PREC))
        return self._parse_primary()

    def _parse_primary(self) -> Expr:
        tok = self._peek()

        if tok.kind == "op" and tok.text == "(":
            self._next()
            inner = self._parse_expression()
            self._expect("op", ")")
            return inner

        if tok.kind == "int":
            if self._peek(1).kind == "ident" and self._peek(1).text == "of":
                self._next()
                quantifier = IntLit(value=int(tok.value), lexeme=tok.text)  # type: ignore[arg-type]
                return self._parse_of(quantifier)
            self._next()
            return IntLit(value=int(tok.value), lexeme=tok.text)  # type: ignore[arg-type]

        if tok.kind == "str":
            self._next()
            return StrLit(value=str(tok.value))

        if tok.kind == "regex":
            self._next()
            pattern, mods = tok.value  # type: ignore[misc]
            return RegexLit(pattern=pattern, mods=mods)

        if tok.kind == "string_id":
            self._next()
            name = str(tok.value)
            if not name:
                raise YaraSyntaxError(tok.start, "anonymous '$' only valid inside 'of' string sets")
            self._check_declared(name, tok)
            nxt = self._peek()
            if nxt.kind == "ident" and nxt.text == "at":
                self._next()
                return StringAt(name=name, offset=self._parse_binary(9))
            if nxt.kind == "ident" and nxt.text == "in":
                self._next()
                self._expect("op", "(")
                low = self._parse_expression()
                self._expect("op", "..")
                high = self._parse_expression()
                self._expect("op", ")")
                return StringIn(name=name, low=low, high=high)
            return StringRef(name=name)

        if tok.kind == "string_count":
            self._next()
            name = str(tok.value)
            if not name:
                raise YaraSyntaxError(tok.start, "expected string name after '#'")
            self._check_declared(name, tok)
            return StringCount(name=name)

        if tok.kind in ("string_offset", "string_length"):
            self._next()
            name = str(tok.value)
            sigil = "@" if tok.kind == "string_offset" else "!"
            if not name:
                raise YaraSyntaxError(tok.start, f"expected string name after {sigil!r}")
            self._check_declared(name, tok)
            index: Expr | None = None
            if self._peek().kind == "op" and self._peek().text == "[":
                self._next()
                index = self._parse_expression()
                self._expect("op", "]")
            if tok.kind == "string_offset":
                return StringOffset(name=name, index=index)
            return StringLength(name=name, index=index)

        if tok.kind == "ident":
            word = tok.text
            if word in ("true", "false"):
                self._next()
                return BoolLit(value=word == "true")
            if word == "filesize":
                self._next()
                return Filesize()
            if word == "entrypoint":
                self._next()
                return Entrypoint()
            if word in ("any", "all"):
                self._next()
                return self._parse_of(word)
            if word in _INT_READ_FUNCS:
                self._next()
                self._expect("op", "(", what=f"after {word}")
                arg = self._parse_expression()
                self._expect("op", ")")
                return IntRead(func=word, arg=arg)
            if word == "for":
                raise YaraSyntaxError(tok.start, "'for' expressions are not supported")
            if word in _KEYWORDS:
                raise YaraSyntaxError(tok.start, f"unexpected keyword {word!r}")
            return self._parse_ident_path()

        raise YaraSyntaxError(tok.start, f"unexpected token {tok.text!r} in condition")

    def _parse_of(self, quantifier: Expr | str) -> Expr:
        self._expect_keyword("of")
        tok = self._peek()
        if tok.kind == "ident" and tok.text == "them":
            self._next()
            if not self.declared and not self.has_anonymous:
                raise YaraSyntaxError(tok.start, "'them' requires at least one declared string")
            self.them_used = True
            self.referenced.update(self.declared)
            return OfExpr(quantifier=quantifier, targets=None)
        self._expect("op", "(", what="after 'of'")
        targets: list[str] = []
        while True:
            id_tok = self._expect("string_id", what="in 'of' set")
            pattern = str(id_tok.value)
            nxt = self._peek()
            if nxt.kind == "op" and nxt.text == "*" and nxt.start == id_tok.end:
                self._next()
                pattern += "*"
            if not pattern:
                raise YaraSyntaxError(id_tok.start, "empty string pattern in 'of' set")
            self._check_set_pattern(pattern, id_tok)
            targets.append(pattern)
            nxt = self._peek()
            if nxt.kind == "op" and nxt.text == ",":
                self._next()
                continue
            break
        self._expect("op", ")")
        return OfExpr(quantifier=quantifier, targets=tuple(targets))

    def _parse_ident_path(self) -> Expr:
        first = self._expect("ident")
        path = [first.text]
        while self._peek().kind == "op" and self._peek().text == ".":
            self._next()
            part = self._expect("ident", what="after '.'")
            path.append(part.text)
        ident = Ident(path=tuple(path))
        if self._peek().kind == "op" and self._peek().text == "(":
            self._next()
            args: list[Expr] = []
            if not (self._peek().kind == "op" and self._peek().text == ")"):
                while True:
                    args.append(self._parse_expression())
                    if self._peek().kind == "op" and self._peek().text == ",":
                        self._next()
                        continue
                    break
            self._expect("op", ")")
            return Call(func=ident, args=tuple(args))
        return ident

    def _check_declared(self, name: str, tok: _Token) -> None:
        if name not in self.declared:
            raise YaraSyntaxError(tok.start, f"undeclared string ${name} referenced in condition")
        self.referenced.add(name)

    def _check_set_pattern(self, pattern: str, tok: _Token) -> None:
        if pattern.endswith("*"):
            prefix = pattern[:-1]
            matching = [n for n in self.declared if n.startswith(prefix)]
            if not matching:
                raise YaraSyntaxError(tok.start, f"no declared string matches ${pattern}")
            self.referenced.update(matching)
        else:
            self._check_declared(pattern, tok)


def _diag(line_map: LineMap, exc: YaraSyntaxError) -> SyntaxDiagnostic:
    line, col = line_map.position(exc.offset)
    return SyntaxDiagnostic(line=line, column=col, message=exc.message, severity="error")


def _parse_header_directives(parser: _Parser) -> list[str]:
    imports: list[str] = []
    while parser._peek().kind == "ident" and parser._peek().text in ("import", "include"):
        word = parser._next().text
        target = parser._expect("str", what=f"after {word}")
        if word == "import":
            imports.append(str(target.value))
    return imports


def parse_yara(text: str) -> ParseResult:
    """Parse exactly one YARA rule (imports before it are allowed)."""
    line_map = LineMap(text)
    if not text.strip():
        return ParseResult(ast=None, diagnostics=[
            SyntaxDiagnostic(line=1, column=1, message="empty input: expected a rule",
                             severity="error")
        ])
    lexer = _Lexer(text)
    parser = _Parser(lexer)
    try:
        imports = _parse_header_directives(parser)
        ast = parser.parse_rule(tuple(imports))
        tail = parser._peek()
        if tail.kind != "eof":
            raise YaraSyntaxError(tail.start, "expected exactly one rule, found trailing content")
        return ParseResult(ast=ast, diagnostics=[])
    except YaraSyntaxError as exc:
        diags = [_diag(line_map, e) for e in parser.string_errors]
        if exc not in parser.string_errors:
            diags.append(_diag(line_map, exc))
        return ParseResult(ast=None, diagnostics=diags[:MAX_DIAGNOSTICS])


def parse_yara_file(text: str) -> list[tuple[ParseResult, str]]:
    """Parse a .yar file with multiple rule blocks and import headers.

    Returns one (result, raw_rule_text) pair per rule block encountered;
    a broken block yields a failed result and parsing resumes at the next
    `rule` keyword.
    """
    line_map = LineMap(text)
    lexer = _Lexer(text)
    parser = _Parser(lexer)
    results: list[tuple[ParseResult, str]] = []
    imports: tuple[str, ...] = ()
    while True:
        try:
            new_imports = _parse_header_directives(parser)
            if new_imports:
                imports = imports + tuple(new_imports)
            tok = parser._peek()
            if tok.kind == "eof":
                break
            start_off = tok.start
            ast = parser.parse_rule(imports)
            raw = text[start_off : parser.last_rule_end]
            results.append((ParseResult(ast=ast, diagnostics=[]), raw.strip()))
        except YaraSyntaxError as exc:
            diags = [_diag(line_map, e) for e in parser.string_errors]
            if exc not in parser.string_errors:
                diags.append(_diag(line_map, exc))
            parser.string_errors = []
            results.append((ParseResult(ast=None, diagnostics=diags[:MAX_DIAGNOSTICS]), ""))
            _recover_to_next_rule(parser)
            if parser._peek().kind == "eof":
                break
    return results


def _recover_to_next_rule(parser: _Parser) -> None:
    guard = parser._peek()
    if guard.kind == "ident" and guard.text in ("rule", "private", "global"):
        # The failure happened at a rule keyword itself; step past it so
        # recovery makes progress.
        parser._next()
    while True:
        try:
            tok = parser._peek()
        except YaraSyntaxError:
            parser.lx.pos += 1
            parser.lx._buffer.clear()
            continue
        if tok.kind == "eof":
            return
        if tok.kind == "ident" and tok.text in ("rule", "private", "global", "import", "include"):
            return
        try:
            parser._next()
        except YaraSyntaxError:
            parser.lx.pos += 1
            parser.lx._buffer.clear()


# --------------------------------------------------------------------------
# Serializer

_ATOM_PREC = 99


def serialize_yara(ast: YaraRuleAst) -> str:
    """Render the AST in canonical form; reparses structurally equal."""
    lines: list[str] = []
    for imp in ast.imports:
        lines.append(f'import "{imp}"')
    if ast.imports:
        lines.append("")
    prefix = ("private " if ast.is_private else "") + ("global " if ast.is_global else "")
    header = f"{prefix}rule {ast.name}"
    if ast.tags:
        header += " : " + " ".join(ast.tags)
    lines.append(header)
    lines.append("{")
    if ast.meta:
        lines.append("    meta:")
        for key, value in ast.meta:
            lines.append(f"        {key} = {_render_meta_value(value)}")
    if ast.strings:
        lines.append("    strings:")
        for s in ast.strings:
            lines.append(f"        {_render_string(s)}")
    lines.append("    condition:")
    cond = render_expr(ast.condition) if ast.condition is not None else "true"
    lines.append(f"        {cond}")
    lines.append("}")
    return "\n".join(lines)


def _render_meta_value(value: str | int | bool) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return f'"{value}"'


def _render_string(s: YaraString) -> str:
    sigil = f"${s.name}"
    if s.kind is YaraStringKind.TEXT:
        body = f'"{s.value}"'
    elif s.kind is YaraStringKind.REGEX:
        body = f"/{s.value}/{s.regex_mods}"
    else:
        body = "{ " + " ".join(s.hex_tokens) + " }"
    mods = (" " + " ".join(s.modifiers)) if s.modifiers else ""
    return f"{sigil} = {body}{mods}"


def render_expr(expr: Expr) -> str:
    text, _ = _render(expr)
    return text


def _render(expr: Expr) -> tuple[str, int]:
    if isinstance(expr, BoolLit):
        return ("true" if expr.value else "false"), _ATOM_PREC
    if isinstance(expr, IntLit):
        return expr.render(), _ATOM_PREC
    if isinstance(expr, StrLit):
        return expr.render(), _ATOM_PREC
    if isinstance(expr, RegexLit):
        return expr.render(), _ATOM_PREC
    if isinstance(expr, Filesize):
        return "filesize", _ATOM_PREC
    if isinstance(expr, Entrypoint):
        return "entrypoint", _ATOM_PREC
    if isinstance(expr, Ident):
        return expr.render(), _ATOM_PREC
    if isinstance(expr, Call):
        args = ", ".join(render_expr(a) for a in expr.args)
        return f"{expr.func.render()}({args})", _ATOM_PREC
    if isinstance(expr, StringRef):
        return f"${expr.name}", _ATOM_PREC
    if isinstance(expr, StringCount):
        return f"#{expr.name}", _ATOM_PREC
    if isinstance(expr, StringOffset):
        base = f"@{expr.name}"
        if expr.index is not None:
            base += f"[{render_expr(expr.index)}]"
        return base, _ATOM_PREC
    if isinstance(expr, StringLength):
        base = f"!{expr.name}"
        if expr.index is not None:
            base += f"[{render_expr(expr.index)}]"
        return base, _ATOM_PREC
    if isinstance(expr, StringAt):
        inner, prec = _render(expr.offset)
        if prec < 9:
            inner = f"({inner})"
        return f"${expr.name} at {inner}", 4
    if isinstance(expr, StringIn):
        return f"${expr.name} in ({render_expr(expr.low)}..{render_expr(expr.high)})", 4
    if isinstance(expr, IntRead):
        return f"{expr.func}({render_expr(expr.arg)})", _ATOM_PREC
    if isinstance(expr, OfExpr):
        if isinstance(expr.quantifier, str):
            q = expr.quantifier
        else:
            q, qp = _render(expr.quantifier)
            if qp < _ATOM_PREC:
                q = f"({q})"
        target = "them" if expr.targets is None else "(" + ", ".join(
            f"${t}" for t in expr.targets) + ")"
        return f"{q} of {target}", 4
    if isinstance(expr, Unary):
        prec = _NOT_PREC if expr.op == "not" else _UNARY_PREC
        inner, ip = _render(expr.operand)
        if ip < prec:
            inner = f"({inner})"
        if expr.op == "not":
            return f"not {inner}", prec
        return f"{expr.op}{inner}", prec
    if isinstance(expr, Binary):
        prec = _BIN_PREC[expr.op]
        left, lp = _render(expr.left)
        right, rp = _render(expr.right)
        if lp < prec:
            left = f"({left})"
        if rp <= prec:
            right = f"({right})"
        return f"{left} {expr.op} {right}", prec
    raise TypeError(f"cannot render expression node {expr!r}")
