"""Parser and serializer for Snort 2.x community-rule syntax.

The header is fully structured (action, protocol, endpoints, direction);
options are parsed to key/value/modifier nodes without interpreting
option semantics. Backslash-newline continuations are treated as
whitespace so diagnostics keep positions in the original text.
"""
from __future__ import annotations

import re

from falcon.rules.model import (
    Direction,
    LineMap,
    OptionNode,
    ParseResult,
    SnortAction,
    SnortProtocol,
    SnortRuleAst,
    SyntaxDiagnostic,
)

MAX_DIAGNOSTICS = 25

_ACTIONS = {a.value for a in SnortAction}
_PROTOCOLS = {p.value for p in SnortProtocol}

# Option keys from the Snort 2.9 manual; unknown keys parse with a warning.
KNOWN_OPTION_KEYS = frozenset({
    "msg", "reference", "gid", "sid", "rev", "classtype", "priority", "metadata",
    "content", "nocase", "rawbytes", "depth", "offset", "distance", "within",
    "http_client_body", "http_cookie", "http_raw_cookie", "http_header",
    "http_raw_header", "http_method", "http_uri", "http_raw_uri",
    "http_stat_code", "http_stat_msg", "fast_pattern", "uricontent", "urilen",
    "isdataat", "pcre", "pkt_data", "file_data", "base64_decode", "base64_data",
    "byte_test", "byte_jump", "byte_extract", "ftpbounce", "asn1", "cvs",
    "dce_iface", "dce_opnum", "dce_stub_data", "ssl_version", "ssl_state",
    "fragoffset", "ttl", "tos", "id", "ipopts", "fragbits", "dsize", "flags",
    "flow", "flowbits", "seq", "ack", "window", "itype", "icode", "icmp_id",
    "icmp_seq", "rpc", "ip_proto", "sameip", "stream_reassemble", "stream_size",
    "logto", "session", "resp", "react", "tag", "activates", "activated_by",
    "count", "replace", "detection_filter", "threshold", "flowbit", "appid",
})

_VAR_RE = re.compile(r"^\$[A-Za-z_][A-Za-z0-9_]*$")
_IPV4_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")
_CIDR_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}/\d{1,2}$")
_IPV6_RE = re.compile(r"^[0-9A-Fa-f:]+(/\d{1,3})?$")


def _split_bracket_list(spec: str) -> list[str] | None:
    """Split the inside of [...] on top-level commas; None when malformed."""
    parts, depth, cur = [], 0, []
    for ch in spec:
        if ch == "[":
            depth += 1
            cur.append(ch)
        elif ch == "]":
            depth -= 1
            if depth < 0:
                return None
            cur.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        return None
    parts.append("".join(cur))
    return parts


def _valid_addr(spec: str) -> bool:
    if spec == "any":
        return True
    if spec.startswith("!"):
        return len(spec) > 1 and _valid_addr(spec[1:])
    if _VAR_RE.match(spec):
        return True
    if spec.startswith("[") and spec.endswith("]"):
        inner = _split_bracket_list(spec[1:-1])
        return inner is not None and all(p and _valid_addr(p) for p in inner)
    if _IPV4_RE.match(spec) or _CIDR_RE.match(spec):
        return all(0 <= int(o) <= 255 for o in re.findall(r"\d{1,3}", spec.split("/")[0]))
    if ":" in spec and _IPV6_RE.match(spec):
        return True
    return False


def _valid_port(spec: str) -> bool:
    if spec == "any":
        return True
    if spec.startswith("!"):
        return len(spec) > 1 and _valid_port(spec[1:])
    if _VAR_RE.match(spec):
        return True
    if spec.startswith("[") and spec.endswith("]"):
        inner = _split_bracket_list(spec[1:-1])
        return inner is not None and all(p and _valid_port(p) for p in inner)
    m = re.match(r"^(\d+)?(:)?(\d+)?$", spec)
    if not m or (m.group(1) is None and m.group(3) is None):
        return False
    return all(
        0 <= int(g) <= 65535 for g in (m.group(1), m.group(3)) if g is not None
    )


def _canonical_spec(spec: str) -> str:
    return "".join(spec.split())


class _Scanner:
    """Character scanner that treats backslash-newline as whitespace."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.n = len(text)

    def skip_ws(self) -> None:
        while self.pos < self.n:
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "\\" and self.pos + 1 < self.n and self.text[self.pos + 1] == "\n":
                self.pos += 2
            elif ch == "\\" and self.pos + 2 < self.n and self.text[self.pos + 1 : self.pos + 3] == "\r\n":
                self.pos += 3
            else:
                return

    def next_field(self) -> tuple[str, int] | None:
        """Next whitespace-delimited field outside parens; (text, offset)."""
        self.skip_ws()
        if self.pos >= self.n or self.text[self.pos] == "(":
            return None
        start = self.pos
        while self.pos < self.n:
            ch = self.text[self.pos]
            if ch in " \t\r\n(":
                break
            if ch == "\\" and self.pos + 1 < self.n and self.text[self.pos + 1] in "\r\n":
                break
            self.pos += 1
        return self.text[start : self.pos], start


def parse_snort(text: str) -> ParseResult:
    """Parse one logical Snort rule into an AST or error diagnostics."""
    line_map = LineMap(text)
    diags: list[SyntaxDiagnostic] = []

    def err(offset: int, message: str) -> None:
        if len(diags) >= MAX_DIAGNOSTICS:
            return
        line, col = line_map.position(offset)
        diags.append(SyntaxDiagnostic(line=line, column=col, message=message, severity="error"))

    def warn(offset: int, message: str) -> None:
        if len(diags) >= MAX_DIAGNOSTICS:
            return
        line, col = line_map.position(offset)
        diags.append(SyntaxDiagnostic(line=line, column=col, message=message, severity="warning"))

    if not text.strip():
        err(0, "empty input: expected a rule")
        return ParseResult(ast=None, diagnostics=diags)

    scanner = _Scanner(text)
    fields: list[tuple[str, int]] = []
    while True:
        field = scanner.next_field()
        if field is None:
            break
        fields.append(field)

    if not fields:
        scanner.skip_ws()
        err(scanner.pos, "rule must start with an action keyword")
        return ParseResult(ast=None, diagnostics=diags)

    action_text, action_off = fields[0]
    if action_text not in _ACTIONS:
        err(action_off, f"unknown action keyword '{action_text}'")
        return ParseResult(ast=None, diagnostics=diags)

    if len(fields) != 7:
        at = fields[-1][1] if len(fields) > 1 else action_off
        err(at, f"malformed header: expected 7 fields before options, got {len(fields)}")
        return ParseResult(ast=None, diagnostics=diags)

    proto_text, proto_off = fields[1]
    if proto_text not in _PROTOCOLS:
        err(proto_off, f"unknown protocol '{proto_text}'")
        return ParseResult(ast=None, diagnostics=diags)

    src_addr, src_addr_off = fields[2]
    src_port, src_port_off = fields[3]
    dir_text, dir_off = fields[4]
    dst_addr, dst_addr_off = fields[5]
    dst_port, dst_port_off = fields[6]

    if dir_text not in ("->", "<>"):
        err(dir_off, f"invalid direction '{dir_text}': expected -> or <>")
        return ParseResult(ast=None, diagnostics=diags)

    for spec, off, what, check in (
        (src_addr, src_addr_off, "source address", _valid_addr),
        (dst_addr, dst_addr_off, "destination address", _valid_addr),
        (src_port, src_port_off, "source port", _valid_port),
        (dst_port, dst_port_off, "destination port", _valid_port),
    ):
        if not check(_canonical_spec(spec)):
            err(off, f"invalid {what} spec '{spec}'")
    if [d for d in diags if d.severity == "error"]:
        return ParseResult(ast=None, diagnostics=diags)

    scanner.skip_ws()
    if scanner.pos >= scanner.n or scanner.text[scanner.pos] != "(":
        err(scanner.pos, "expected '(' to open the options list")
        return ParseResult(ast=None, diagnostics=diags)
    open_off = scanner.pos

    body, close_off = _scan_option_body(text, open_off, err)
    if body is None:
        return ParseResult(ast=None, diagnostics=diags)

    tail = text[close_off + 1 :].strip()
    if tail:
        err(close_off + 1 + text[close_off + 1 :].index(tail[0]), f"unexpected content after ')': '{tail[:20]}'")
        return ParseResult(ast=None, diagnostics=diags)

    options = _parse_options(text, open_off + 1, close_off, err, warn)
    if [d for d in diags if d.severity == "error"]:
        return ParseResult(ast=None, diagnostics=diags)

    _check_option_invariants(options, err, warn, open_off, line_map)
    if [d for d in diags if d.severity == "error"]:
        return ParseResult(ast=None, diagnostics=diags)

    ast = SnortRuleAst(
        action=SnortAction(action_text),
        protocol=SnortProtocol(proto_text),
        src_addr=_canonical_spec(src_addr),
        src_port=_canonical_spec(src_port),
        direction=Direction(dir_text),
        dst_addr=_canonical_spec(dst_addr),
        dst_port=_canonical_spec(dst_port),
        options=tuple(opt for opt, _ in options),
    )
    return ParseResult(ast=ast, diagnostics=diags)


def _scan_option_body(text: str, open_off: int, err) -> tuple[str | None, int]:
    """Find the matching ')' for the options block, honoring quotes."""
    i = open_off + 1
    in_quote = False
    while i < len(text):
        ch = text[i]
        if in_quote:
            if ch == "\\" and i + 1 < len(text):
                i += 2
                continue
            if ch == '"':
                in_quote = False
        elif ch == '"':
            in_quote = True
        elif ch == ")":
            return text[open_off + 1 : i], i
        i += 1
    if in_quote:
        err(open_off, "unterminated quoted content inside options")
    else:
        err(open_off, "unbalanced parentheses: missing ')'")
    return None, -1


def _parse_options(text: str, start: int, end: int, err, warn) -> list[tuple[OptionNode, int]]:
    """Split the options body on top-level ';' and build OptionNodes."""
    options: list[tuple[OptionNode, int]] = []
    i = start
    while i < end:
        while i < end and text[i] in " \t\r\n":
            i += 1
        if i >= end:
            break
        opt_start = i
        in_quote = False
        quote_closed_at = -1
        segment_end = -1
        j = i
        while j < end:
            ch = text[j]
            if in_quote:
                if ch == "\\" and j + 1 < end:
                    j += 2
                    continue
                if ch == '"':
                    in_quote = False
                    quote_closed_at = j
            elif ch == '"':
                in_quote = True
                quote_closed_at = -1
            elif ch == ";":
                segment_end = j
                break
            elif ch == ",":
                # modifier separator: a fresh segment may follow the quote
                quote_closed_at = -1
            elif quote_closed_at >= 0 and ch not in " \t\r\n":
                err(j, "expected ';' after quoted value")
                return options
            j += 1
        if segment_end < 0:
            err(opt_start, "option missing terminating ';'")
            return options
        raw = text[opt_start:segment_end]
        node = _build_option_node(raw, opt_start, err, warn)
        if node is not None:
            options.append((node, opt_start))
        i = segment_end + 1
    return options


def _split_top_commas(raw: str) -> list[str]:
    parts, cur, in_quote = [], [], False
    i = 0
    while i < len(raw):
        ch = raw[i]
        if in_quote:
            if ch == "\\" and i + 1 < len(raw):
                cur.append(raw[i : i + 2])
                i += 2
                continue
            if ch == '"':
                in_quote = False
            cur.append(ch)
        elif ch == '"':
            in_quote = True
            cur.append(ch)
        elif ch == ",":
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    parts.append("".join(cur))
    return parts


def _build_option_node(raw: str, offset: int, err, warn) -> OptionNode | None:
    head, sep, rest = raw.partition(":")
    key = head.strip()
    if not key:
        err(offset, "option with empty key")
        return None
    if not re.match(r"^[A-Za-z_][A-Za-z0-9_.\-]*$", key):
        err(offset, f"invalid option key '{key}'")
        return None
    if key not in KNOWN_OPTION_KEYS:
        warn(offset, f"unknown option key '{key}' parsed as opaque key/value")
    if not sep:
        return OptionNode(key=key)
    parts = _split_top_commas(rest)
    value = parts[0].strip()
    modifiers = tuple(p.strip() for p in parts[1:])
    return OptionNode(key=key, value=value, modifiers=modifiers)


def _check_option_invariants(options: list[tuple[OptionNode, int]], err, warn, fallback_off, line_map) -> None:
    for key in ("sid", "rev"):
        found = [(o, off) for o, off in options if o.key == key]
        if len(found) > 1:
            err(found[1][1], f"at most one '{key}' option allowed")
        for opt, off in found:
            if opt.value is None or not re.match(r"^\d+$", opt.value):
                err(off, f"'{key}' must be a non-negative integer, got '{opt.value}'")


def serialize_snort(ast: SnortRuleAst) -> str:
    """Render the AST with canonical whitespace; reparses structurally equal."""
    parts = []
    for opt in ast.options:
        if opt.value is None:
            rendered = opt.key
        else:
            rendered = f"{opt.key}:{opt.value}"
            for mod in opt.modifiers:
                rendered += f",{mod}"
        parts.append(rendered + ";")
    body = " ".join(parts)
    return (
        f"{ast.action.value} {ast.protocol.value} {ast.src_addr} {ast.src_port} "
        f"{ast.direction.value} {ast.dst_addr} {ast.dst_port} ({body})"
    )
