"""Deployed-rule corpus: import, lookup, and the approve/deprecate lifecycle.

Backed by a directory of .rules/.yar files plus a manifest mapping rule id
to (file, index, status). Mutations serialize through one lock and flush
the manifest so readers and restarts see consistent state.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from falcon.rules.files import load_snort_file, load_yara_file
from falcon.rules.model import CorpusStatus, IdsRule, RuleMedium, RuleSource
from falcon.rules.syntax import parse_rule

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class CorpusError(Exception):
    pass


@dataclass
class ImportReport:
    imported: int
    failed: list[tuple[str, str]]  # (source location, first diagnostic)


class CorpusStore:
    """Rule corpus rooted at a directory; safe for concurrent readers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._rules: dict[str, IdsRule] = {}
        self._lock = threading.RLock()
        manifest = self.root / MANIFEST_NAME
        if manifest.exists():
            self._load_manifest()

    # -- queries

    def get(self, rule_id: str) -> IdsRule:
        with self._lock:
            try:
                return self._rules[rule_id]
            except KeyError:
                raise CorpusError(f"unknown rule id {rule_id!r}") from None

    def __contains__(self, rule_id: str) -> bool:
        with self._lock:
            return rule_id in self._rules

    def all_rules(self) -> list[IdsRule]:
        with self._lock:
            return list(self._rules.values())

    def deployed(self, medium: RuleMedium | None = None) -> list[IdsRule]:
        with self._lock:
            return [
                r for r in self._rules.values()
                if r.corpus_status is CorpusStatus.DEPLOYED
                and (medium is None or r.medium is medium)
            ]

    def deployed_sids(self) -> dict[int, str]:
        """Map sid -> rule id over deployed Snort rules."""
        out: dict[int, str] = {}
        for rule in self.deployed(RuleMedium.SNORT):
            if rule.ast is not None and rule.ast.sid is not None:
                out[rule.ast.sid] = rule.id
        return out

    # -- imports

    def import_directory(self, directory: str | Path) -> ImportReport:
        """Import every .rules/.yar file under a directory as deployed rules."""
        directory = Path(directory)
        imported = 0
        failed: list[tuple[str, str]] = []
        for path in sorted(directory.rglob("*")):
            if path.suffix == ".rules":
                pairs = load_snort_file(path)
                medium = RuleMedium.SNORT
            elif path.suffix in (".yar", ".yara"):
                pairs = load_yara_file(path)
                medium = RuleMedium.YARA
            else:
                continue
            for idx, (raw, result) in enumerate(pairs):
                location = f"{path.name}:{idx}"
                if not result.ok:
                    first = result.errors[0].render() if result.errors else "parse failed"
                    failed.append((location, first))
                    continue
                rule_id = f"{medium.value}-{path.stem}-{idx:04d}"
                rule = IdsRule(
                    id=rule_id,
                    medium=medium,
                    raw_text=raw,
                    ast=result.ast,
                    corpus_status=CorpusStatus.DEPLOYED,
                    source=RuleSource.IMPORTED,
                )
                with self._lock:
                    if rule_id in self._rules:
                        raise CorpusError(f"duplicate rule id {rule_id!r} during import")
                    self._rules[rule_id] = rule
                imported += 1
        self._save_manifest()
        return ImportReport(imported=imported, failed=failed)

    def add_rule(self, rule: IdsRule) -> None:
        with self._lock:
            if rule.id in self._rules:
                raise CorpusError(f"duplicate rule id {rule.id!r}")
            self._rules[rule.id] = rule
            self._save_manifest()

    def deploy_generated(self, rule_id: str, medium: RuleMedium, raw_text: str) -> IdsRule:
        """Parse and deploy a generated rule text."""
        result = parse_rule(raw_text, medium)
        if not result.ok:
            raise CorpusError(f"cannot deploy unparsable rule {rule_id!r}")
        rule = IdsRule(
            id=rule_id,
            medium=medium,
            raw_text=raw_text,
            ast=result.ast,
            corpus_status=CorpusStatus.DEPLOYED,
            source=RuleSource.GENERATED,
        )
        self.add_rule(rule)
        return rule

    def approve_update(
        self, new_rule_id: str, medium: RuleMedium, raw_text: str, replaces_rule_id: str
    ) -> IdsRule:
        """Atomically deploy a replacement and deprecate the rule it updates.

        The corpus never holds both sides deployed: the deprecation and the
        deployment commit under one lock.
        """
        with self._lock:
            old = self.get(replaces_rule_id)
            if old.corpus_status is not CorpusStatus.DEPLOYED:
                raise CorpusError(f"rule {replaces_rule_id!r} is not deployed")
            result = parse_rule(raw_text, medium)
            if not result.ok:
                raise CorpusError(f"cannot deploy unparsable rule {new_rule_id!r}")
            if new_rule_id in self._rules:
                raise CorpusError(f"duplicate rule id {new_rule_id!r}")
            old.corpus_status = CorpusStatus.DEPRECATED
            rule = IdsRule(
                id=new_rule_id,
                medium=medium,
                raw_text=raw_text,
                ast=result.ast,
                corpus_status=CorpusStatus.DEPLOYED,
                source=RuleSource.GENERATED,
            )
            self._rules[new_rule_id] = rule
            self._save_manifest()
            return rule

    def deprecate(self, rule_id: str) -> None:
        with self._lock:
            rule = self.get(rule_id)
            rule.corpus_status = CorpusStatus.DEPRECATED
            self._save_manifest()

    # -- persistence

    def _save_manifest(self) -> None:
        with self._lock:
            payload = {
                "version": MANIFEST_VERSION,
                "rules": {
                    rid: {
                        "medium": r.medium.value,
                        "status": r.corpus_status.value,
                        "source": r.source.value,
                        "raw_text": r.raw_text,
                    }
                    for rid, r in self._rules.items()
                },
            }
            tmp = self.root / (MANIFEST_NAME + ".tmp")
            tmp.write_text(json.dumps(payload, indent=1), encoding="utf-8")
            tmp.replace(self.root / MANIFEST_NAME)

    def _load_manifest(self) -> None:
        payload = json.loads((self.root / MANIFEST_NAME).read_text(encoding="utf-8"))
        if payload.get("version") != MANIFEST_VERSION:
            raise CorpusError(f"unsupported corpus manifest version {payload.get('version')}")
        for rid, entry in payload["rules"].items():
            medium = RuleMedium(entry["medium"])
            result = parse_rule(entry["raw_text"], medium)
            status = CorpusStatus(entry["status"])
            if status is CorpusStatus.DEPLOYED and not result.ok:
                raise CorpusError(f"manifest rule {rid!r} is deployed but fails to parse")
            self._rules[rid] = IdsRule(
                id=rid,
                medium=medium,
                raw_text=entry["raw_text"],
                ast=result.ast if result.ok else None,
                corpus_status=status,
                source=RuleSource(entry["source"]),
            )
