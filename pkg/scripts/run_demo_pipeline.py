#!/usr/bin/env python3
"""Offline walkthrough of one generation run.

Imports the fixture corpus, then drives a YARA generation for a new
variant of an already-covered .NET hacktool. The scripted model stumbles
through the full gauntlet: a broken rule (':' instead of '='), then a
brand-new rule the redundancy scan rejects as a near-duplicate, then the
proper update of the deployed rule--which the analyst approves,
deprecating its predecessor. No network, no model weights.
"""
from __future__ import annotations

import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from falcon.corpus import CorpusStore  # noqa: E402
from falcon.cti import CtiDocument, Ioc, IocKind, cti_to_text  # noqa: E402
from falcon.embeddings import Embedder  # noqa: E402
from falcon.llm import MockChatClient  # noqa: E402
from falcon.orchestrator import (  # noqa: E402
    AnalystAction,
    Orchestrator,
    PipelineServices,
    ValidationThresholds,
)
from falcon.rules.model import RuleMedium  # noqa: E402

FINAL_RULE = '''rule HackTool_MSIL_CoreProbe
{
    meta:
        description = "The TypeLibGUID present in a .NET binary maps back to CoreProbe"
        md5 = "7a8f2c41959f8cd5a1f51081e12ba35e"
    strings:
        $typelibguid0 = "9c71b3a6-0c31-4c2f-9136-46a55ba48cee" ascii nocase wide
    condition:
        uint16(0) == 0x5A4D and uint32(uint32(0x3C)) == 0x00004550 and any of them
}'''

INITIAL_RULE = FINAL_RULE.replace("$typelibguid0 = ", "$typelibguid0 : ")

CTI = CtiDocument(
    id="cti-demo-001",
    threat_name="HackTool_MSIL_CoreProbe",
    categories=("Malware / HackTool", ".NET-based Threat"),
    iocs=(
        Ioc(kind=IocKind.GUID, value="9c71b3a6-0c31-4c2f-9136-46a55ba48cee",
            label="TypeLibGUID / ProjectGuid"),
        Ioc(kind=IocKind.MD5, value="7a8f2c41959f8cd5a1f51081e12ba35e"),
    ),
    behaviors=(
        "Windows PE file by MZ (0x5A4D) header at file beginning.",
        "PE signature (0x00004550) at specified location in header.",
    ),
)


def fenced(rule: str, action: str = "new") -> str:
    return f"Proposed rule:\n```\n{rule}\n```\nACTION: {action}\n"


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="falcon-demo-"))
    print(f"working directory: {workdir}\n")

    corpus = CorpusStore(workdir / "corpus")
    report = corpus.import_directory(ROOT / "data" / "corpus")
    print(f"imported {report.imported} deployed rules from the fixture corpus")

    # The corpus already detects CoreProbe under its old GUID; this CTI is a
    # fresh build with a new one, so the right move is an update.
    superseded = "yara-public-sample-0002"
    services = PipelineServices(
        corpus=corpus,
        embedder=Embedder(),
        llm_client=MockChatClient([
            fenced(INITIAL_RULE),
            fenced(FINAL_RULE),
            fenced(FINAL_RULE, action=f"update {superseded}"),
        ]),
        thresholds=ValidationThresholds(semantic_min=0.5, max_iterations=5),
    )
    orchestrator = Orchestrator(services, workdir / "runs.journal.jsonl")

    print("\n=== CTI input ===")
    print(cti_to_text(CTI))

    run = orchestrator.start_run(CTI, RuleMedium.YARA)
    print(f"\nrun {run.run_id}: {run.state.value} after {len(run.iterations)} iterations")
    print(f"retrieved for context: {run.retrieved_rule_ids}")
    for n, iteration in enumerate(run.iterations, start=1):
        print(f"\n--- iteration {n} ---")
        for fb in iteration.feedback:
            verdict = "pass" if fb.status else "FAIL"
            score = f" score={fb.score:.4f}" if fb.score is not None else ""
            print(f"[{fb.stage.value}] {verdict}{score}")
            if fb.feedback:
                print("    " + fb.feedback.replace("\n", "\n    "))

    before = len(corpus.deployed(RuleMedium.YARA))
    run = orchestrator.submit_analyst_decision(run.run_id, AnalystAction.APPROVE,
                                               note="looks tight, ship it", likert=3)
    after = len(corpus.deployed(RuleMedium.YARA))
    old = corpus.get(superseded)
    print(f"\nanalyst approved -> deployed {run.deployed_rule_id}"
          f" (yara corpus stays at {before} -> {after}: update replaced a rule)")
    print(f"{superseded} is now {old.corpus_status.value}")
    print(f"journal: {orchestrator.journal.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
