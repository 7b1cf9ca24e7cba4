"""Loaders for .rules and .yar corpus files.

``.rules``: one Snort rule per logical line, ``#`` comments, backslash
line continuation. ``.yar``: multiple rule blocks with ``//`` and
``/* */`` comments and ``import "x"`` headers.
"""
from __future__ import annotations

from pathlib import Path

from falcon.rules.model import ParseResult
from falcon.rules.snort import parse_snort
from falcon.rules.yara import parse_yara_file


def iter_snort_rules(text: str) -> list[tuple[int, str]]:
    """Yield (1-based starting line, logical rule text) from a .rules payload."""
    out: list[tuple[int, str]] = []
    pending: list[str] = []
    start_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if pending:
            if line.endswith("\\"):
                pending.append(line[:-1])
                continue
            pending.append(line)
            out.append((start_line, " ".join(p.strip() for p in pending)))
            pending = []
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if line.endswith("\\"):
            pending = [line[:-1]]
            start_line = lineno
            continue
        out.append((lineno, stripped))
    if pending:
        out.append((start_line, " ".join(p.strip() for p in pending)))
    return out


def load_snort_file(path: Path) -> list[tuple[str, ParseResult]]:
    """Parse every logical rule in a .rules file; returns (raw, result) pairs."""
    text = path.read_text(encoding="utf-8")
    return [(raw, parse_snort(raw)) for _, raw in iter_snort_rules(text)]


def load_yara_file(path: Path) -> list[tuple[str, ParseResult]]:
    """Parse every rule block in a .yar file; returns (raw, result) pairs."""
    text = path.read_text(encoding="utf-8")
    return [(raw, result) for result, raw in parse_yara_file(text)]
