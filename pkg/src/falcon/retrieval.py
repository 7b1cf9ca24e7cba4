"""Deployed-rule retrieval: sparse (BM25, TF-IDF+cosine) and dense search.

Tokenization keeps hashes, GUIDs, and dotted identifiers whole before
splitting on punctuation, because IoC tokens are the strongest retrieval
signal in this domain. Scoring formulas:

  BM25 (Okapi):  sum over query tokens t of
      idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)),
      idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)),  k1 = 1.5, b = 0.75.

  TF-IDF (ltc.ltc): weights (1 + ln tf) * ln(N / df) on both sides,
      cosine of the two weighted vectors.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from falcon.cti import CtiDocument, cti_to_text
from falcon.embeddings import EMBEDDING_DIM, Embedder, EmbeddingVector
from falcon.rules.model import IdsRule, RuleMedium

BM25_K1 = 1.5
BM25_B = 0.75

_GUID = r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
_DOTTED = r"\w+(?:\.\w+)+"
_WORD = r"\w+"
_TOKEN_RE = re.compile(f"{_GUID}|{_DOTTED}|{_WORD}")


class RetrievalMethod(str, Enum):
    BM25 = "bm25"
    TFIDF_COSINE = "tfidf_cosine"
    DENSE = "dense"


class RetrievalError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class IndexStats:
    doc_count: int
    avg_doc_len: float
    document_frequencies: dict[str, int]


@dataclass
class IndexEntry:
    tokens: list[str]
    embedding: EmbeddingVector | None = None
    token_counts: Counter = field(default_factory=Counter)


@dataclass
class RuleIndex:
    medium: RuleMedium
    entries: dict[str, IndexEntry]
    stats: IndexStats

    def has_embeddings(self) -> bool:
        return bool(self.entries) and all(e.embedding is not None for e in self.entries.values())


@dataclass(frozen=True)
class RetrievalResult:
    ranked: tuple[tuple[str, float], ...]  # (rule_id, score), scores non-increasing
    method: RetrievalMethod

    def ids(self) -> list[str]:
        return [rid for rid, _ in self.ranked]


def compute_stats(entries: dict[str, IndexEntry]) -> IndexStats:
    doc_count = len(entries)
    avg_len = (
        sum(len(e.tokens) for e in entries.values()) / doc_count if doc_count else 0.0
    )
    dfs: dict[str, int] = {}
    for entry in entries.values():
        for token in set(entry.tokens):
            dfs[token] = dfs.get(token, 0) + 1
    return IndexStats(doc_count=doc_count, avg_doc_len=avg_len, document_frequencies=dfs)


def build_index(
    rules: list[IdsRule],
    medium: RuleMedium,
    with_embeddings: bool = False,
    embedder: Embedder | None = None,
) -> RuleIndex:
    """Index deployed rules of one medium; embeddings are optional."""
    deployed = [r for r in rules if r.corpus_status.value == "deployed"]
    entries: dict[str, IndexEntry] = {}
    for rule in deployed:
        if rule.medium is not medium:
            raise RetrievalError(f"rule {rule.id} has medium {rule.medium.value}, expected {medium.value}")
        if rule.id in entries:
            raise RetrievalError(f"duplicate rule id {rule.id!r}")
        tokens = tokenize(rule.raw_text)
        entries[rule.id] = IndexEntry(tokens=tokens, token_counts=Counter(tokens))
    if with_embeddings and entries:
        if embedder is None:
            raise RetrievalError("with_embeddings requires an embedder")
        ordered = list(entries)
        texts = {rid: r.raw_text for r in deployed for rid in [r.id]}
        vectors = embedder.embed([texts[rid] for rid in ordered])
        for rid, vec in zip(ordered, vectors):
            entries[rid].embedding = vec
    return RuleIndex(medium=medium, entries=entries, stats=compute_stats(entries))


def bm25_score(index: RuleIndex, query_tokens: list[str], doc_id: str) -> float:
    entry = index.entries[doc_id]
    stats = index.stats
    dl = len(entry.tokens)
    avgdl = stats.avg_doc_len or 1.0
    score = 0.0
    for token in query_tokens:
        tf = entry.token_counts.get(token, 0)
        if tf == 0:
            continue
        df = stats.document_frequencies.get(token, 0)
        idf = math.log(1.0 + (stats.doc_count - df + 0.5) / (df + 0.5))
        score += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl))
    return score


def _ltc_weights(token_counts: Counter, stats: IndexStats) -> dict[str, float]:
    weights: dict[str, float] = {}
    for token, tf in token_counts.items():
        df = stats.document_frequencies.get(token, 0)
        if df == 0:
            continue
        idf = math.log(stats.doc_count / df)
        if idf == 0.0:
            continue
        weights[token] = (1.0 + math.log(tf)) * idf
    return weights


def tfidf_cosine_score(index: RuleIndex, query_tokens: list[str], doc_id: str) -> float:
    q_weights = _ltc_weights(Counter(query_tokens), index.stats)
    d_weights = _ltc_weights(index.entries[doc_id].token_counts, index.stats)
    if not q_weights or not d_weights:
        return 0.0
    dot = sum(w * d_weights.get(t, 0.0) for t, w in q_weights.items())
    qn = math.sqrt(sum(w * w for w in q_weights.values()))
    dn = math.sqrt(sum(w * w for w in d_weights.values()))
    if qn == 0.0 or dn == 0.0:
        return 0.0
    return dot / (qn * dn)


def retrieve(
    cti: CtiDocument,
    index: RuleIndex,
    method: RetrievalMethod,
    k: int,
    embedder: Embedder | None = None,
) -> RetrievalResult:
    """Top-k deployed rules for a CTI under the chosen method."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query_text = cti_to_text(cti)
    return retrieve_text(query_text, index, method, k, embedder=embedder)


def retrieve_text(
    query_text: str,
    index: RuleIndex,
    method: RetrievalMethod,
    k: int,
    embedder: Embedder | None = None,
) -> RetrievalResult:
    if not index.entries:
        return RetrievalResult(ranked=(), method=method)
    if method is RetrievalMethod.DENSE:
        if not index.has_embeddings():
            raise RetrievalError("dense retrieval requires an index built with embeddings")
        if embedder is None:
            raise RetrievalError("dense retrieval requires an embedder for the query")
        qv = embedder.embed_one(query_text).values
        qn = np.linalg.norm(qv)
        scored = []
        for rid, entry in index.entries.items():
            dv = entry.embedding.values
            scored.append((rid, float(np.dot(qv, dv) / (qn * np.linalg.norm(dv)))))
    else:
        query_tokens = tokenize(query_text)
        scorer = bm25_score if method is RetrievalMethod.BM25 else tfidf_cosine_score
        scored = [(rid, scorer(index, query_tokens, rid)) for rid in index.entries]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RetrievalResult(ranked=tuple(scored[:k]), method=method)


def ensemble_retrieve(
    cti: CtiDocument,
    index: RuleIndex,
    k: int = 10,
    cap: int = 5,
    embedder: Embedder | None = None,
) -> list[str]:
    """Union of dense and BM25 top-k, deduplicated, capped for prompts.

    Dense results lead when available; sparse fills the remainder.
    """
    ids: list[str] = []
    if index.has_embeddings() and embedder is not None:
        ids.extend(retrieve(cti, index, RetrievalMethod.DENSE, k, embedder=embedder).ids())
    for rid in retrieve(cti, index, RetrievalMethod.BM25, k).ids():
        if rid not in ids:
            ids.append(rid)
    return ids[:cap]


# --------------------------------------------------------------------------
# Ranked-retrieval metrics

def recall_at_k(result_ids: list[str], relevant_ids: set[str], k: int = 10) -> float:
    """Proportion of the relevant set present in the top k."""
    if not relevant_ids:
        raise ValueError("relevance set must be non-empty")
    top = set(result_ids[:k])
    return len(top & set(relevant_ids)) / len(relevant_ids)


def average_precision(result_ids: list[str], relevant_ids: set[str]) -> float:
    if not relevant_ids:
        raise ValueError("relevance set must be non-empty")
    hits = 0
    total = 0.0
    for rank, rid in enumerate(result_ids, start=1):
        if rid in relevant_ids:
            hits += 1
            total += hits / rank
    return total / len(relevant_ids)


def mean_average_precision(
    per_query_results: list[list[str]], per_query_relevant: list[set[str]]
) -> float:
    if not per_query_results:
        raise ValueError("empty query set")
    if len(per_query_results) != len(per_query_relevant):
        raise ValueError("results/relevance length mismatch")
    return sum(
        average_precision(res, rel)
        for res, rel in zip(per_query_results, per_query_relevant)
    ) / len(per_query_results)


# --------------------------------------------------------------------------
# On-disk persistence (versioned manifest + postings + optional vectors)

INDEX_FORMAT_VERSION = 1


def save_index(index: RuleIndex, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": INDEX_FORMAT_VERSION,
        "medium": index.medium.value,
        "doc_count": index.stats.doc_count,
        "avg_doc_len": index.stats.avg_doc_len,
        "with_embeddings": index.has_embeddings(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    postings = {rid: entry.tokens for rid, entry in index.entries.items()}
    (directory / "postings.json").write_text(json.dumps(postings), encoding="utf-8")
    if index.has_embeddings() and index.entries:
        ids = list(index.entries)
        mat = np.stack([index.entries[rid].embedding.values for rid in ids])
        np.savez_compressed(directory / "vectors.npz", ids=np.array(ids), vectors=mat)
        model_ids = {rid: index.entries[rid].embedding.model_id for rid in ids}
        (directory / "vector_models.json").write_text(json.dumps(model_ids), encoding="utf-8")


def load_index(directory: str | Path) -> RuleIndex:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest["format_version"] != INDEX_FORMAT_VERSION:
        raise RetrievalError(f"unsupported index format version {manifest['format_version']}")
    postings = json.loads((directory / "postings.json").read_text(encoding="utf-8"))
    entries = {
        rid: IndexEntry(tokens=tokens, token_counts=Counter(tokens))
        for rid, tokens in postings.items()
    }
    vectors_path = directory / "vectors.npz"
    if manifest.get("with_embeddings") and vectors_path.exists():
        data = np.load(vectors_path, allow_pickle=False)
        model_ids = json.loads((directory / "vector_models.json").read_text(encoding="utf-8"))
        for rid, row in zip(data["ids"], data["vectors"]):
            rid = str(rid)
            if row.shape != (EMBEDDING_DIM,):
                raise RetrievalError(f"stored vector for {rid} has shape {row.shape}")
            entries[rid].embedding = EmbeddingVector(
                values=row, model_id=model_ids[rid], normalized=False
            )
    return RuleIndex(
        medium=RuleMedium(manifest["medium"]),
        entries=entries,
        stats=compute_stats(entries),
    )
