"""Domain model for Snort and YARA rules.

ASTs are immutable values: parsers construct them, serializers render them,
and structural equality (dataclass ``==``) is the round-trip contract.
No packet matching or file scanning happens here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from falcon.embeddings import EmbeddingVector


class RuleMedium(str, Enum):
    SNORT = "snort"
    YARA = "yara"


class CorpusStatus(str, Enum):
    DEPLOYED = "deployed"
    CANDIDATE = "candidate"
    DEPRECATED = "deprecated"


class RuleSource(str, Enum):
    IMPORTED = "imported"
    GENERATED = "generated"


@dataclass(frozen=True)
class SyntaxDiagnostic:
    """Parser finding with a 1-based position into the input text."""

    line: int
    column: int
    message: str
    severity: str = "error"  # "error" | "warning"

    def render(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass
class ParseResult:
    """Outcome of parsing one rule: an AST iff no error diagnostics."""

    ast: object | None
    diagnostics: list[SyntaxDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.ast is not None and not self.errors

    @property
    def errors(self) -> list[SyntaxDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[SyntaxDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]


class LineMap:
    """Maps character offsets to 1-based (line, column) pairs."""

    def __init__(self, text: str):
        self._starts = [0]
        for i, ch in enumerate(text):
            if ch == "\n":
                self._starts.append(i + 1)
        self._len = len(text)

    def position(self, offset: int) -> tuple[int, int]:
        offset = max(0, min(offset, self._len))
        lo, hi = 0, len(self._starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self._starts[lo] + 1


# --------------------------------------------------------------------------
# Snort

class SnortAction(str, Enum):
    ALERT = "alert"
    LOG = "log"
    PASS = "pass"
    DROP = "drop"
    REJECT = "reject"
    SDROP = "sdrop"


class SnortProtocol(str, Enum):
    TCP = "tcp"
    UDP = "udp"
    ICMP = "icmp"
    IP = "ip"


class Direction(str, Enum):
    TO = "->"
    BIDIRECTIONAL = "<>"


@dataclass(frozen=True)
class OptionNode:
    """One rule option: bare flag, key:value, or key:value,mod,mod.

    Unquoted top-level commas separate modifiers, so ``value`` must not
    contain one (quoted commas are fine).
    """

    key: str
    value: str | None = None
    modifiers: tuple[str, ...] = ()


@dataclass(frozen=True)
class SnortRuleAst:
    action: SnortAction
    protocol: SnortProtocol
    src_addr: str
    src_port: str
    direction: Direction
    dst_addr: str
    dst_port: str
    options: tuple[OptionNode, ...]

    def _single_int_option(self, key: str) -> int | None:
        for opt in self.options:
            if opt.key == key and opt.value is not None:
                return int(opt.value)
        return None

    @property
    def sid(self) -> int | None:
        return self._single_int_option("sid")

    @property
    def rev(self) -> int | None:
        return self._single_int_option("rev")

    @property
    def msg(self) -> str | None:
        for opt in self.options:
            if opt.key == "msg":
                return opt.value
        return None

    def options_named(self, key: str) -> list[OptionNode]:
        return [o for o in self.options if o.key == key]


# --------------------------------------------------------------------------
# YARA

class YaraStringKind(str, Enum):
    TEXT = "text"
    HEX = "hex"
    REGEX = "regex"


@dataclass(frozen=True)
class YaraString:
    """One entry of the strings section.

    ``name`` excludes the leading ``$``; anonymous strings use "".
    Text/regex values keep their escaped source form; hex values are a
    normalized token tuple joined on serialization.
    """

    name: str
    kind: YaraStringKind
    value: str
    modifiers: tuple[str, ...] = ()
    hex_tokens: tuple[str, ...] = ()
    regex_mods: str = ""


# Condition expression nodes. All frozen; equality is structural.

@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class IntLit:
    value: int
    lexeme: str = field(default="", compare=False)

    def render(self) -> str:
        return self.lexeme or str(self.value)


@dataclass(frozen=True)
class StrLit:
    value: str  # escaped source form, without quotes

    def render(self) -> str:
        return f'"{self.value}"'


@dataclass(frozen=True)
class RegexLit:
    pattern: str
    mods: str = ""

    def render(self) -> str:
        return f"/{self.pattern}/{self.mods}"


@dataclass(frozen=True)
class Filesize:
    pass


@dataclass(frozen=True)
class Entrypoint:
    pass


@dataclass(frozen=True)
class Ident:
    """Dotted identifier path, e.g. module references like pe.is_dll."""

    path: tuple[str, ...]

    def render(self) -> str:
        return ".".join(self.path)


@dataclass(frozen=True)
class Call:
    func: Ident
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class StringRef:
    name: str  # without '$'


@dataclass(frozen=True)
class StringCount:
    name: str  # '#a'


@dataclass(frozen=True)
class StringOffset:
    name: str  # '@a' or '@a[i]'
    index: "Expr | None" = None


@dataclass(frozen=True)
class StringLength:
    name: str  # '!a' or '!a[i]'
    index: "Expr | None" = None


@dataclass(frozen=True)
class StringAt:
    name: str
    offset: "Expr"


@dataclass(frozen=True)
class StringIn:
    name: str
    low: "Expr"
    high: "Expr"


@dataclass(frozen=True)
class IntRead:
    """uint8/16/32 and int8/16/32 reads, optionally big-endian."""

    func: str  # e.g. "uint16", "uint32be"
    arg: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str  # 'not' | '-' | '~'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


THEM = "them"


@dataclass(frozen=True)
class OfExpr:
    """`N of (...)`, `any of them`, `all of ($a*, $b)`.

    ``targets`` is None for `them`; otherwise a tuple of string-id
    patterns (may end in '*').
    """

    quantifier: "Expr | str"  # 'any' | 'all' | integer expression
    targets: tuple[str, ...] | None


Expr = (
    BoolLit | IntLit | StrLit | RegexLit | Filesize | Entrypoint | Ident | Call
    | StringRef | StringCount | StringOffset | StringLength | StringAt | StringIn
    | IntRead | Unary | Binary | OfExpr
)


@dataclass(frozen=True)
class YaraRuleAst:
    name: str
    tags: tuple[str, ...] = ()
    meta: tuple[tuple[str, str | int | bool], ...] = ()
    strings: tuple[YaraString, ...] = ()
    condition: Expr | None = None
    is_private: bool = False
    is_global: bool = False
    imports: tuple[str, ...] = ()  # carried over from file context when known


# --------------------------------------------------------------------------
# Corpus-level rule record

@dataclass
class IdsRule:
    """A rule as the corpus sees it: raw text plus parse status."""

    id: str
    medium: RuleMedium
    raw_text: str
    ast: SnortRuleAst | YaraRuleAst | None = None
    corpus_status: CorpusStatus = CorpusStatus.CANDIDATE
    source: RuleSource = RuleSource.IMPORTED
    embedding: EmbeddingVector | None = None

    def __post_init__(self) -> None:
        if not self.raw_text.strip():
            raise ValueError("rule raw_text must be non-empty")
        if self.corpus_status is CorpusStatus.DEPLOYED and self.ast is None:
            raise ValueError(f"deployed rule {self.id} must carry a parsed AST")
