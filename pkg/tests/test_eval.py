from __future__ import annotations

import numpy as np
import pytest

from falcon.corpus import CorpusStore
from falcon.cti import load_dataset
from falcon.embeddings import Embedder, EmbeddingVector, EMBEDDING_DIM
from falcon.evalharness import (
    EvalError,
    eval_pipeline,
    eval_retriever,
    eval_scorer,
    gate_score,
    render_pipeline_report,
    render_retriever_report,
    render_scorer_report,
    write_report,
)
from falcon.feedback import ValidationFeedback, ValidationStage
from falcon.llm import LlmConfig, MockChatClient
from falcon.orchestrator import Orchestrator, PipelineServices, ValidationThresholds
from falcon.retrieval import RetrievalMethod, build_index
from falcon.rules.model import RuleMedium


@pytest.fixture(scope="module")
def eval_world(tmp_path_factory, data_dir):
    embedder = Embedder()
    tmp = tmp_path_factory.mktemp("evalworld")
    corpus = CorpusStore(tmp / "corpus")
    corpus.import_directory(data_dir / "corpus")
    records = load_dataset(data_dir / "dataset" / "pairs-eval.jsonl",
                           known_rule_ids={r.id for r in corpus.all_rules()})
    indexes = {
        medium: build_index(corpus.deployed(medium), medium,
                            with_embeddings=True, embedder=embedder)
        for medium in RuleMedium
    }
    return embedder, corpus, records, indexes


def test_eval_retriever_matches_brute_force(eval_world):
    from falcon.retrieval import retrieve, recall_at_k, average_precision

    embedder, corpus, records, indexes = eval_world
    report = eval_retriever(records, indexes, [RetrievalMethod.BM25], k=10,
                            embedder=embedder)
    for medium in ("snort", "yara"):
        metrics = report["per_method"]["bm25"][medium]
        subset = [r for r in records if r.medium.value == medium]
        recalls, aps = [], []
        for record in subset:
            index = indexes[RuleMedium(medium)]
            ranked = retrieve(record.cti, index, RetrievalMethod.BM25,
                              k=len(index.entries)).ids()
            relevant = set(record.related_outdated_rule_ids)
            recalls.append(recall_at_k(ranked, relevant, 10))
            aps.append(average_precision(ranked, relevant))
        assert metrics["recall_at_k"] == pytest.approx(sum(recalls) / len(recalls), abs=1e-9)
        assert metrics["map"] == pytest.approx(sum(aps) / len(aps), abs=1e-9)


def test_eval_retriever_ground_truth_pooling(eval_world):
    embedder, corpus, records, indexes = eval_world
    gt_ids = {}
    for record in records:
        matches = [r.id for r in corpus.all_rules() if r.raw_text == record.ground_truth_rule]
        assert len(matches) == 1
        gt_ids[record.pair_id] = matches[0]
    pooled = eval_retriever(records, indexes, [RetrievalMethod.BM25], k=10,
                            embedder=embedder, include_ground_truth=True,
                            ground_truth_ids=gt_ids)
    plain = eval_retriever(records, indexes, [RetrievalMethod.BM25], k=10,
                           embedder=embedder)
    # the ground truth is lexically identical to the query's own rule: adding
    # it to the relevance set cannot reduce recall
    for medium in ("snort", "yara"):
        assert (pooled["per_method"]["bm25"][medium]["recall_at_k"]
                >= plain["per_method"]["bm25"][medium]["recall_at_k"] - 1e-9)


def test_eval_retriever_unresolved_relevance_errors(eval_world, data_dir):
    embedder, corpus, records, indexes = eval_world
    broken = [r for r in records][:1]
    broken[0].related_outdated_rule_ids = ("ghost-rule-id",)
    with pytest.raises(EvalError, match="ghost-rule-id"):
        eval_retriever(broken, indexes, [RetrievalMethod.BM25], k=10, embedder=embedder)
    # restore for other tests (records fixture is module-scoped)
    reloaded = load_dataset(data_dir / "dataset" / "pairs-eval.jsonl")
    broken[0].related_outdated_rule_ids = reloaded[0].related_outdated_rule_ids


def test_eval_scorer_on_fixture(eval_world):
    embedder, corpus, records, indexes = eval_world
    report = eval_scorer(records, embedder)
    assert report["pairs"] == len(records)
    assert report["diagonal_recall"] >= 0.8  # fixture built for lexical separation
    assert 0.0 <= report["thresholded_f1"] <= 1.0
    assert render_scorer_report(report)


def test_eval_scorer_single_pair_is_error(eval_world):
    embedder, corpus, records, indexes = eval_world
    with pytest.raises(EvalError):
        eval_scorer(records[:1], embedder)


def test_eval_scorer_identity_provider_stub():
    class _IdentityEmbedder:
        """Distinct orthogonal vector per distinct text."""

        def __init__(self):
            self.known = {}

        def embed(self, texts):
            out = []
            for t in texts:
                if t not in self.known:
                    v = np.zeros(EMBEDDING_DIM)
                    v[len(self.known)] = 1.0
                    self.known[t] = EmbeddingVector(values=v, model_id="stub")
                out.append(self.known[t])
            return out

    # identical text pairs -> identical embeddings -> diagonal dominates
    from falcon.cti import CtiDocument, Ioc, IocKind
    from falcon.scorer import similarity_matrix, diagonal_recall

    stub = _IdentityEmbedder()
    ctis = [CtiDocument(id=f"c{i}", threat_name=f"T{i}",
                        iocs=(Ioc(kind=IocKind.IP, value=f"10.0.0.{i}"),))
            for i in range(4)]
    # rule text rendered identical to the cti text so the pair shares a vector
    from falcon.cti import cti_to_text
    rules = [cti_to_text(c) for c in ctis]
    m = similarity_matrix(ctis, rules, stub)
    assert diagonal_recall(m) == 1.0


def test_gate_score_mapping():
    syn_fail = [ValidationFeedback(stage=ValidationStage.SYNTAX, status=False)]
    assert gate_score(syn_fail) == 0
    syn_only = [ValidationFeedback(stage=ValidationStage.SYNTAX, status=True),
                ValidationFeedback(stage=ValidationStage.SEMANTIC, status=False, score=0.2)]
    assert gate_score(syn_only) == 1
    plus_sem = [ValidationFeedback(stage=ValidationStage.SYNTAX, status=True),
                ValidationFeedback(stage=ValidationStage.SEMANTIC, status=True, score=0.9),
                ValidationFeedback(stage=ValidationStage.PERFORMANCE, status=False)]
    assert gate_score(plus_sem) == 2
    full = [ValidationFeedback(stage=ValidationStage.SYNTAX, status=True),
            ValidationFeedback(stage=ValidationStage.SEMANTIC, status=True, score=0.9),
            ValidationFeedback(stage=ValidationStage.PERFORMANCE, status=True)]
    assert gate_score(full) == 3
    assert gate_score([]) == 0


def test_gate_score_monotone_in_progression():
    # appending a later passing gate never lowers the score
    prefix = [ValidationFeedback(stage=ValidationStage.SYNTAX, status=True)]
    with_sem = prefix + [ValidationFeedback(stage=ValidationStage.SEMANTIC,
                                            status=True, score=0.9)]
    with_perf = with_sem + [ValidationFeedback(stage=ValidationStage.PERFORMANCE, status=True)]
    assert gate_score(prefix) <= gate_score(with_sem) <= gate_score(with_perf)


def _fenced(rule_text: str) -> str:
    return f"```\n{rule_text}\n```\nACTION: new\n"


def test_eval_pipeline_difficulty_buckets(tmp_path, embedder, data_dir):
    records = load_dataset(data_dir / "dataset" / "pairs-small.jsonl")[:6]
    # script one completion per record: its own ground-truth rule with a bumped sid
    completions = []
    for n, record in enumerate(records):
        text = record.ground_truth_rule.replace("sid:", f"sid:9{n}")
        completions.append(_fenced(text))
    corpus = CorpusStore(tmp_path / "corpus")
    services = PipelineServices(
        corpus=corpus, embedder=embedder, llm_client=MockChatClient(completions),
        llm_config=LlmConfig(),
        thresholds=ValidationThresholds(semantic_min=0.3, max_iterations=1),
    )
    orchestrator = Orchestrator(services, tmp_path / "runs.jsonl")
    report = eval_pipeline(records, orchestrator)
    assert report["records"] == 6
    assert set(report["per_difficulty"]) == {"Easy", "Medium", "Hard"}
    for bucket in report["per_difficulty"].values():
        assert bucket["count"] == 2
        assert 0.0 <= bucket["normalized"] <= 1.0
        assert bucket["normalized"] == pytest.approx(bucket["mean_score"] / 3.0)
    assert all(r["score"] == 3 for r in report["per_record"])
    assert render_pipeline_report(report)


def test_eval_pipeline_failed_syntax_scores_zero(tmp_path, embedder, data_dir):
    records = load_dataset(data_dir / "dataset" / "pairs-small.jsonl")[:2]
    completions = ["no rule here at all"] * 2
    corpus = CorpusStore(tmp_path / "corpus")
    services = PipelineServices(
        corpus=corpus, embedder=embedder, llm_client=MockChatClient(completions),
        thresholds=ValidationThresholds(semantic_min=0.3, max_iterations=1),
    )
    orchestrator = Orchestrator(services, tmp_path / "runs.jsonl")
    report = eval_pipeline(records, orchestrator)
    assert all(r["score"] == 0 for r in report["per_record"])


def test_reports_deterministic(eval_world):
    embedder, corpus, records, indexes = eval_world
    a = eval_scorer(records, embedder)
    b = eval_scorer(records, embedder)
    assert a == b


def test_write_report_and_render(tmp_path, eval_world):
    embedder, corpus, records, indexes = eval_world
    report = eval_retriever(records, indexes, [RetrievalMethod.BM25], k=10,
                            embedder=embedder)
    out = tmp_path / "reports" / "retriever.json"
    write_report(report, out)
    assert out.exists()
    rendered = render_retriever_report(report)
    assert "not asserted" in rendered
    assert "33.23" in rendered  # reference context row present
