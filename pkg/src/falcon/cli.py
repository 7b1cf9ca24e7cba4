"""Command-line entry points.

Exit codes: 0 success, 1 domain error (bad data, failed run), 2 usage
error (argparse handles these natively on stderr).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from falcon.corpus import CorpusError, CorpusStore
from falcon.cti import CtiDocument, CtiValidationError, load_dataset
from falcon.embeddings import Embedder, EmbeddingProviderConfig
from falcon.evalharness import (
    EvalError,
    eval_pipeline,
    eval_retriever,
    eval_scorer,
    render_pipeline_report,
    render_retriever_report,
    render_scorer_report,
    write_report,
)
from falcon.llm import LlmConfig, OpenAiChatClient
from falcon.orchestrator import (
    JournalError,
    Orchestrator,
    OrchestratorError,
    PipelineServices,
    RunState,
    ValidationThresholds,
)
from falcon.retrieval import RetrievalMethod, build_index, save_index
from falcon.rules.model import RuleMedium
from falcon.scorer import (
    ScorerCalibration,
    calibrate_threshold,
    load_calibration,
    save_calibration,
    similarity_matrix,
)

DEFAULT_DATA_DIR = "falcon-data"


class CliError(Exception):
    """Domain error surfaced to the user with exit code 1."""


def _data_dir(args) -> Path:
    raw = args.data_dir or os.environ.get("FALCON_DATA_DIR") or DEFAULT_DATA_DIR
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _embedder() -> Embedder:
    return Embedder(EmbeddingProviderConfig.from_env())


def _calibration(data_dir: Path) -> ScorerCalibration:
    path = data_dir / "calibration.json"
    if path.exists():
        return load_calibration(path)
    return ScorerCalibration()


def _services(args, data_dir: Path, llm_client=None) -> PipelineServices:
    calibration = _calibration(data_dir)
    thresholds = ValidationThresholds(
        semantic_min=getattr(args, "semantic_min", None) or calibration.decision_threshold,
        max_iterations=getattr(args, "max_iterations", None) or 5,
        llm_judges_enabled=bool(getattr(args, "llm_judges", False)),
    )
    return PipelineServices(
        corpus=CorpusStore(data_dir / "corpus"),
        embedder=_embedder(),
        llm_client=llm_client or OpenAiChatClient(),
        llm_config=LlmConfig.from_env(),
        calibration=calibration,
        thresholds=thresholds,
    )


def _load_cti_file(path: Path) -> CtiDocument:
    payload = json.loads(path.read_text(encoding="utf-8"))
    return CtiDocument.from_dict(payload)


def _print_feedback(entries) -> None:
    for entry in entries:
        verdict = "pass" if entry.status else "FAIL"
        score = f" score={entry.score:.4f}" if entry.score is not None else ""
        print(f"[{entry.stage.value}] {verdict}{score}")
        if entry.feedback:
            for line in entry.feedback.splitlines():
                print(f"    {line}")


# --------------------------------------------------------------------------
# Subcommands

def cmd_import_rules(args) -> int:
    data_dir = _data_dir(args)
    corpus = CorpusStore(data_dir / "corpus")
    report = corpus.import_directory(args.directory)
    print(f"imported {report.imported} rules into {data_dir / 'corpus'}")
    for location, error in report.failed:
        print(f"  parse failed: {location}: {error}")
    return 0


def cmd_ingest_cti(args) -> int:
    data_dir = _data_dir(args)
    target = data_dir / "ctis"
    target.mkdir(parents=True, exist_ok=True)
    path = Path(args.file)
    docs: list[CtiDocument] = []
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                docs.append(CtiDocument.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from exc
    else:
        docs.append(_load_cti_file(path))
    for doc in docs:
        (target / f"{doc.id}.json").write_text(
            json.dumps(doc.to_dict(), indent=2), encoding="utf-8"
        )
    print(f"ingested {len(docs)} CTI document(s) into {target}")
    return 0


def cmd_index(args) -> int:
    data_dir = _data_dir(args)
    corpus = CorpusStore(data_dir / "corpus")
    embedder = _embedder() if args.with_embeddings else None
    for medium in RuleMedium:
        rules = corpus.deployed(medium)
        index = build_index(rules, medium, with_embeddings=args.with_embeddings,
                            embedder=embedder)
        out = data_dir / "index" / medium.value
        save_index(index, out)
        print(f"{medium.value}: indexed {index.stats.doc_count} deployed rules -> {out}")
    return 0


def cmd_generate(args) -> int:
    data_dir = _data_dir(args)
    cti = _load_cti_file(Path(args.cti))
    medium = RuleMedium(args.medium)
    services = _services(args, data_dir)
    orchestrator = Orchestrator(services, data_dir / "runs.journal.jsonl")
    run = orchestrator.start_run(cti, medium)
    print(f"run {run.run_id}: {run.state.value} after {len(run.iterations)} iteration(s)")
    for n, iteration in enumerate(run.iterations, start=1):
        print(f"--- iteration {n} ---")
        _print_feedback(iteration.feedback)
    candidate = run.last_candidate
    if run.state is RunState.PENDING_REVIEW and candidate is not None:
        print("--- candidate rule (pending review) ---")
        print(candidate.rule_text)
        return 0
    print(f"run did not reach review: {run.failure_reason}")
    return 1


def cmd_validate(args) -> int:
    data_dir = _data_dir(args)
    cti = _load_cti_file(Path(args.cti))
    rule_text = Path(args.rule).read_text(encoding="utf-8").strip()
    medium = RuleMedium(args.medium) if args.medium else _guess_medium(Path(args.rule))
    services = _services(args, data_dir, llm_client=_NoopClient())
    orchestrator = Orchestrator(services, data_dir / "runs.journal.jsonl")
    from falcon.generation import CandidateAction, CandidateRule

    candidate = CandidateRule(rule_text=rule_text, action=CandidateAction.NEW)
    feedback = orchestrator.execute_validation(candidate, cti, medium)
    _print_feedback(feedback)
    return 0


def _guess_medium(path: Path) -> RuleMedium:
    if path.suffix in (".yar", ".yara"):
        return RuleMedium.YARA
    if path.suffix == ".rules":
        return RuleMedium.SNORT
    text = path.read_text(encoding="utf-8")
    return RuleMedium.YARA if "condition:" in text else RuleMedium.SNORT


class _NoopClient:
    def complete(self, messages, config):  # pragma: no cover - never called
        raise RuntimeError("validation does not call the LLM")


def _build_eval_indexes(records, corpus: CorpusStore, embedder: Embedder):
    indexes = {}
    for medium in RuleMedium:
        indexes[medium] = build_index(
            corpus.deployed(medium), medium, with_embeddings=True, embedder=embedder
        )
    return indexes


def cmd_eval_retriever(args) -> int:
    data_dir = _data_dir(args)
    corpus = CorpusStore(data_dir / "corpus")
    embedder = _embedder()
    records = load_dataset(args.dataset)
    methods = [RetrievalMethod(m) for m in args.method]
    indexes = _build_eval_indexes(records, corpus, embedder)
    report = eval_retriever(
        records, indexes, methods, k=args.k, embedder=embedder,
        include_ground_truth=args.include_ground_truth,
    )
    print(render_retriever_report(report))
    out = data_dir / "reports" / "retriever.json"
    write_report(report, out)
    print(f"\nreport written to {out}")
    return 0


def cmd_eval_scorer(args) -> int:
    data_dir = _data_dir(args)
    embedder = _embedder()
    records = load_dataset(args.dataset)
    calibration = _calibration(data_dir)
    report = eval_scorer(records, embedder, calibration)
    print(render_scorer_report(report))
    out = data_dir / "reports" / "scorer.json"
    write_report(report, out)
    print(f"\nreport written to {out}")
    return 0


def cmd_eval_pipeline(args) -> int:
    data_dir = _data_dir(args)
    records = load_dataset(args.dataset)
    if args.limit:
        records = records[: args.limit]
    services = _services(args, data_dir)
    orchestrator = Orchestrator(services, data_dir / "runs.journal.jsonl")
    report = eval_pipeline(records, orchestrator)
    print(render_pipeline_report(report))
    out = data_dir / "reports" / "pipeline.json"
    write_report(report, out)
    print(f"\nreport written to {out}")
    return 0


def cmd_calibrate(args) -> int:
    data_dir = _data_dir(args)
    embedder = _embedder()
    records = load_dataset(args.dataset)
    if len(records) < 2:
        raise CliError("calibration needs at least 2 dataset records")
    base = ScorerCalibration(slope=args.slope, offset=args.offset,
                             decision_threshold=0.5)
    matrix = similarity_matrix(
        [r.cti for r in records], [r.ground_truth_rule for r in records], embedder
    )
    n = matrix.shape[0]
    positives = [base.scale(matrix[i][i]) for i in range(n)]
    negatives = [base.scale(matrix[i][j]) for i in range(n) for j in range(n) if i != j]
    result = calibrate_threshold(positives, negatives, base=base)
    out = data_dir / "calibration.json"
    save_calibration(result.calibration, out, f1=result.f1,
                     dataset_fingerprint=f"{Path(args.dataset).name}:{n}")
    print(f"threshold {result.calibration.decision_threshold:.4f} (F1 {result.f1:.4f}) -> {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from falcon.api import create_app

    data_dir = _data_dir(args)
    services = _services(args, data_dir)
    orchestrator = Orchestrator(services, data_dir / "runs.journal.jsonl")
    app = create_app(orchestrator)
    bind = args.bind or os.environ.get("FALCON_BIND_ADDR", "127.0.0.1:8787")
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="falcon",
        description="CTI-to-IDS-rule generation pipeline with validation gates",
    )
    parser.add_argument("--data-dir", help="working directory (default FALCON_DATA_DIR or ./falcon-data)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import-rules", help="import .rules/.yar files as the deployed corpus")
    p.add_argument("directory")
    p.set_defaults(func=cmd_import_rules)

    p = sub.add_parser("ingest-cti", help="validate and store CTI documents")
    p.add_argument("file")
    p.set_defaults(func=cmd_ingest_cti)

    p = sub.add_parser("index", help="rebuild the on-disk retrieval index")
    p.add_argument("--with-embeddings", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("generate", help="run the generation pipeline for one CTI")
    p.add_argument("--cti", required=True)
    p.add_argument("--medium", required=True, choices=[m.value for m in RuleMedium])
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--semantic-min", type=float, dest="semantic_min")
    p.add_argument("--llm-judges", action="store_true", dest="llm_judges")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="run the three validation gates on a rule file")
    p.add_argument("--rule", required=True)
    p.add_argument("--cti", required=True)
    p.add_argument("--medium", choices=[m.value for m in RuleMedium])
    p.add_argument("--semantic-min", type=float, dest="semantic_min")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval-retriever", help="Recall@k and MAP over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", action="append",
                   choices=[m.value for m in RetrievalMethod],
                   default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--include-ground-truth", action="store_true")
    p.set_defaults(func=cmd_eval_retriever)

    p = sub.add_parser("eval-scorer", help="diagonal recall and thresholded F1")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_eval_scorer)

    p = sub.add_parser("eval-pipeline", help="end-to-end gate scores per difficulty")
    p.add_argument("--dataset", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--semantic-min", type=float, dest="semantic_min")
    p.set_defaults(func=cmd_eval_pipeline)

    p = sub.add_parser("calibrate", help="fit the decision threshold on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--slope", type=float, default=5.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument("--bind", help="host:port (default FALCON_BIND_ADDR or 127.0.0.1:8787)")
    p.add_argument("--semantic-min", type=float, dest="semantic_min")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--llm-judges", action="store_true", dest="llm_judges")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "method", "missing") is None:
        args.method = ["bm25", "tfidf_cosine", "dense"]
    try:
        return args.func(args)
    except (CliError, CtiValidationError, CorpusError, OrchestratorError,
            JournalError, EvalError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
