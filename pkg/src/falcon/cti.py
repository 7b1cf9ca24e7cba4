"""CTI document types, dataset ingestion, and canonical text rendering.

The canonical text layout (Threat Name / Threat Category / IoCs /
Observed Behavior) is the single serialization used for both prompts and
embeddings, so it must be byte-stable across runs.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from falcon.rules.model import RuleMedium
from falcon.rules.syntax import parse_rule


class IocKind(str, Enum):
    MD5 = "md5"
    SHA1 = "sha1"
    SHA256 = "sha256"
    IP = "ip"
    DOMAIN = "domain"
    URL = "url"
    GUID = "guid"
    MUTEX = "mutex"
    FILENAME = "filename"
    OTHER = "other"


_IOC_LABELS = {
    IocKind.MD5: "MD5 Hash",
    IocKind.SHA1: "SHA1 Hash",
    IocKind.SHA256: "SHA256 Hash",
    IocKind.IP: "IP Address",
    IocKind.DOMAIN: "Domain",
    IocKind.URL: "URL",
    IocKind.GUID: "GUID",
    IocKind.MUTEX: "Mutex",
    IocKind.FILENAME: "Filename",
    IocKind.OTHER: "Indicator",
}

_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")
_IP_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")
_GUID_RE = re.compile(
    r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)
_DOMAIN_RE = re.compile(r"^(?=.{4,253}$)([a-zA-Z0-9-]{1,63}\.)+[a-zA-Z]{2,}$")


class CtiValidationError(ValueError):
    """A CTI document or dataset record violates its invariants."""


def infer_ioc_kind(value: str) -> IocKind:
    """Best-effort kind classification when a record omits it."""
    v = value.strip()
    if _HEX_RE.match(v):
        if len(v) == 32:
            return IocKind.MD5
        if len(v) == 40:
            return IocKind.SHA1
        if len(v) == 64:
            return IocKind.SHA256
    if _IP_RE.match(v):
        return IocKind.IP
    if _GUID_RE.match(v):
        return IocKind.GUID
    if v.lower().startswith(("http://", "https://", "ftp://")):
        return IocKind.URL
    if _DOMAIN_RE.match(v):
        return IocKind.DOMAIN
    return IocKind.OTHER


@dataclass(frozen=True)
class Ioc:
    kind: IocKind
    value: str
    label: str | None = None  # display label override, e.g. "TypeLibGUID / ProjectGuid"

    def __post_init__(self) -> None:
        if not self.value.strip():
            raise CtiValidationError("IoC value must be non-empty")
        if self.kind is IocKind.MD5 and not (len(self.value) == 32 and _HEX_RE.match(self.value)):
            raise CtiValidationError(f"md5 IoC must be 32 hex chars: {self.value!r}")
        if self.kind is IocKind.SHA256 and not (len(self.value) == 64 and _HEX_RE.match(self.value)):
            raise CtiValidationError(f"sha256 IoC must be 64 hex chars: {self.value!r}")

    @property
    def display_label(self) -> str:
        return self.label or _IOC_LABELS[self.kind]


@dataclass(frozen=True)
class CtiDocument:
    """Structured threat intelligence: the pipeline's input."""

    id: str
    threat_name: str
    categories: tuple[str, ...] = ()
    iocs: tuple[Ioc, ...] = ()
    behaviors: tuple[str, ...] = ()
    free_text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "iocs", tuple(self.iocs))
        object.__setattr__(self, "behaviors", tuple(self.behaviors))
        if not self.threat_name.strip():
            raise CtiValidationError("threat_name must be non-empty")
        if not self.iocs and not self.behaviors:
            raise CtiValidationError(
                f"CTI {self.id}: at least one of iocs/behaviors must be non-empty"
            )

    def to_dict(self) -> dict:
        d: dict = {
            "id": self.id,
            "threat_name": self.threat_name,
            "categories": list(self.categories),
            "iocs": [
                {"kind": i.kind.value, "value": i.value, **({"label": i.label} if i.label else {})}
                for i in self.iocs
            ],
            "behaviors": list(self.behaviors),
        }
        if self.free_text:
            d["free_text"] = self.free_text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CtiDocument":
        iocs = []
        for entry in d.get("iocs", []):
            if isinstance(entry, str):
                iocs.append(Ioc(kind=infer_ioc_kind(entry), value=entry))
                continue
            kind = IocKind(entry["kind"]) if entry.get("kind") else infer_ioc_kind(entry["value"])
            iocs.append(Ioc(kind=kind, value=entry["value"], label=entry.get("label")))
        return cls(
            id=str(d["id"]),
            threat_name=d["threat_name"],
            categories=tuple(d.get("categories", [])),
            iocs=tuple(iocs),
            behaviors=tuple(d.get("behaviors", [])),
            free_text=d.get("free_text"),
        )


def cti_to_text(cti: CtiDocument) -> str:
    """Render the canonical section-ordered text form of a CTI document.

    Empty sections are omitted entirely; two calls on the same document
    produce identical bytes.
    """
    lines = [f"Threat Name: {cti.threat_name}"]
    if cti.categories:
        lines.append("Threat Category:")
        lines.extend(f"- {c}" for c in cti.categories)
    if cti.iocs:
        lines.append("Indicators of Compromise (IoCs):")
        lines.extend(f"- {i.display_label}: {i.value}" for i in cti.iocs)
    if cti.behaviors:
        lines.append("Observed Behavior:")
        lines.extend(f"{n}. {b}" for n, b in enumerate(cti.behaviors, start=1))
    if cti.free_text:
        lines.append("Additional Context:")
        lines.append(cti.free_text)
    return "\n".join(lines)


class Difficulty(str, Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


@dataclass
class DatasetRecord:
    """One CTI/ground-truth-rule pair with retrieval relevance lists."""

    pair_id: str
    medium: RuleMedium
    cti: CtiDocument
    ground_truth_rule: str
    related_outdated_rule_ids: tuple[str, ...] = ()
    difficulty: Difficulty | None = None
    parse_failed: bool = field(default=False, compare=False)

    def to_dict(self) -> dict:
        d: dict = {
            "pair_id": self.pair_id,
            "medium": self.medium.value,
            "cti": self.cti.to_dict(),
            "ground_truth_rule": self.ground_truth_rule,
            "related_outdated_rule_ids": list(self.related_outdated_rule_ids),
        }
        if self.difficulty is not None:
            d["difficulty"] = self.difficulty.value
        return d


def load_dataset(
    path: str | Path,
    known_rule_ids: set[str] | None = None,
) -> list[DatasetRecord]:
    """Load line-delimited dataset records, validating every invariant.

    Ground-truth rules that fail our parsers are retained with
    ``parse_failed`` set (they still serve retrieval and scoring).
    Malformed records and dangling related-rule ids are hard errors that
    name the offending line.
    """
    path = Path(path)
    records: list[DatasetRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CtiValidationError(f"{path}:{lineno}: malformed record: {exc}") from exc
            try:
                record = _record_from_dict(raw)
            except (KeyError, ValueError) as exc:
                raise CtiValidationError(f"{path}:{lineno}: {exc}") from exc
            if known_rule_ids is not None:
                dangling = [r for r in record.related_outdated_rule_ids if r not in known_rule_ids]
                if dangling:
                    raise CtiValidationError(
                        f"{path}:{lineno}: dangling related-rule id {dangling[0]!r}"
                    )
            records.append(record)
    return records


def _record_from_dict(raw: dict) -> DatasetRecord:
    medium = RuleMedium(raw["medium"])
    cti = CtiDocument.from_dict(raw["cti"])
    rule_text = raw["ground_truth_rule"]
    if not rule_text.strip():
        raise CtiValidationError("ground_truth_rule must be non-empty")
    difficulty = Difficulty(raw["difficulty"]) if raw.get("difficulty") else None
    result = parse_rule(rule_text, medium)
    return DatasetRecord(
        pair_id=str(raw["pair_id"]),
        medium=medium,
        cti=cti,
        ground_truth_rule=rule_text,
        related_outdated_rule_ids=tuple(raw.get("related_outdated_rule_ids", [])),
        difficulty=difficulty,
        parse_failed=not result.ok,
    )


def count_by_medium(records: list[DatasetRecord]) -> dict[str, int]:
    counts: dict[str, int] = {m.value: 0 for m in RuleMedium}
    for record in records:
        counts[record.medium.value] += 1
    return counts
