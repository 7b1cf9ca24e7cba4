from __future__ import annotations

import json
import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from falcon.embeddings import (
    EMBEDDING_DIM,
    Embedder,
    EmbeddingBackend,
    EmbeddingError,
    EmbeddingProviderConfig,
    EmbeddingVector,
    cosine,
    embed_batch,
)


def _vec(values_768) -> EmbeddingVector:
    arr = np.asarray(values_768, dtype=np.float64)
    return EmbeddingVector(values=arr, model_id="test", normalized=False)


def _basis(i: int, scale: float = 1.0) -> EmbeddingVector:
    v = np.zeros(EMBEDDING_DIM)
    v[i] = scale
    return _vec(v)


def test_identical_texts_identical_vectors():
    config = EmbeddingProviderConfig()
    a, b = embed_batch(["abc", "abc"], config)
    assert np.array_equal(a.values, b.values)


def test_determinism_across_calls():
    config = EmbeddingProviderConfig()
    first = embed_batch(["threat beacon dns"], config)[0]
    second = embed_batch(["threat beacon dns"], config)[0]
    assert np.array_equal(first.values, second.values)


def test_seed_changes_vectors():
    base = embed_batch(["abc def"], EmbeddingProviderConfig())[0]
    other = embed_batch(["abc def"], EmbeddingProviderConfig(seed=1))[0]
    assert not np.array_equal(base.values, other.values)


@settings(max_examples=60, deadline=None)
@given(st.text(min_size=1, max_size=80))
def test_unit_norm_for_any_text(text):
    vec = embed_batch([text], EmbeddingProviderConfig())[0]
    assert abs(np.linalg.norm(vec.values) - 1.0) < 1e-6
    assert vec.values.shape == (EMBEDDING_DIM,)


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        embed_batch([], EmbeddingProviderConfig())
    with pytest.raises(ValueError):
        embed_batch(["ok", ""], EmbeddingProviderConfig())


def test_remote_requires_endpoint():
    with pytest.raises(ValueError):
        EmbeddingProviderConfig(backend=EmbeddingBackend.REMOTE)


def test_dimension_invariant():
    with pytest.raises(EmbeddingError):
        EmbeddingVector(values=np.zeros(10), model_id="bad")


def test_normalized_flag_checked():
    with pytest.raises(EmbeddingError):
        EmbeddingVector(values=np.full(EMBEDDING_DIM, 1.0), model_id="bad", normalized=True)


def test_cosine_identity():
    v = embed_batch(["self similarity"], EmbeddingProviderConfig())[0]
    assert abs(cosine(v, v) - 1.0) < 1e-9


def test_cosine_orthogonal():
    assert cosine(_basis(0), _basis(1)) == 0.0


def test_cosine_hand_computed():
    a = np.zeros(EMBEDDING_DIM)
    a[0] = a[1] = 1.0
    b = np.zeros(EMBEDDING_DIM)
    b[0] = 1.0
    assert abs(cosine(_vec(a), _vec(b)) - 1.0 / math.sqrt(2)) < 1e-12


def test_cosine_zero_vector_is_error():
    with pytest.raises(EmbeddingError):
        cosine(_vec(np.zeros(EMBEDDING_DIM)), _basis(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, EMBEDDING_DIM - 1), st.integers(0, EMBEDDING_DIM - 1),
       st.floats(min_value=0.1, max_value=100.0))
def test_cosine_symmetry_and_scale_invariance(i, j, k):
    rng = np.random.default_rng(i * 1000 + j)
    a = _vec(rng.normal(size=EMBEDDING_DIM))
    b = _vec(rng.normal(size=EMBEDDING_DIM))
    assert cosine(a, b) == cosine(b, a)
    scaled = _vec(k * a.values)
    assert abs(cosine(scaled, b) - cosine(a, b)) < 1e-9


def test_embedder_cache_consistency():
    embedder = Embedder()
    first = embedder.embed(["one", "two", "one"])
    assert np.array_equal(first[0].values, first[2].values)
    again = embedder.embed_one("one")
    assert np.array_equal(first[0].values, again.values)


class _FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            import httpx
            raise httpx.HTTPStatusError("boom", request=None, response=None)

    def json(self):
        return self._payload


def test_remote_backend_parses_openai_shape(monkeypatch):
    captured = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        captured["url"] = url
        captured["body"] = json
        vecs = []
        for n, _ in enumerate(json["input"]):
            v = np.zeros(EMBEDDING_DIM)
            v[n] = 1.0
            vexs = {"embedding": v.tolist(), "index": n, "object": "embedding"}
            vecs.append(vexs)
        return _FakeResponse({"object": "list", "data": list(reversed(vecs)),
                              "model": json["model"]})

    monkeypatch.setattr("falcon.embeddings.httpx.post", fake_post)
    config = EmbeddingProviderConfig(
        backend=EmbeddingBackend.REMOTE, endpoint_url="http://fake/v1/embeddings",
        api_key="secret", retries=1,
    )
    out = embed_batch(["a", "b", "c"], config)
    assert captured["url"] == "http://fake/v1/embeddings"
    assert captured["body"]["input"] == ["a", "b", "c"]
    # order restored by index despite reversed wire order
    assert out[0].values[0] == 1.0
    assert out[2].values[2] == 1.0


def test_remote_dimension_mismatch_is_hard_error(monkeypatch):
    def fake_post(url, json=None, headers=None, timeout=None):
        return _FakeResponse({"data": [
            {"embedding": [1.0, 2.0], "index": 0}
        ]})

    monkeypatch.setattr("falcon.embeddings.httpx.post", fake_post)
    config = EmbeddingProviderConfig(
        backend=EmbeddingBackend.REMOTE, endpoint_url="http://fake", retries=1,
    )
    with pytest.raises(EmbeddingError, match="dimension"):
        embed_batch(["a"], config)


def test_remote_retries_then_fails(monkeypatch):
    calls = {"n": 0}

    def fake_post(url, json=None, headers=None, timeout=None):
        calls["n"] += 1
        return _FakeResponse({}, status=500)

    monkeypatch.setattr("falcon.embeddings.httpx.post", fake_post)
    monkeypatch.setattr("falcon.embeddings.time.sleep", lambda s: None)
    config = EmbeddingProviderConfig(
        backend=EmbeddingBackend.REMOTE, endpoint_url="http://fake", retries=3,
    )
    with pytest.raises(EmbeddingError, match="after 3 attempts"):
        embed_batch(["a"], config)
    assert calls["n"] == 3


def test_remote_batching_splits_requests(monkeypatch):
    sizes = []

    def fake_post(url, json=None, headers=None, timeout=None):
        sizes.append(len(json["input"]))
        data = []
        for n, _ in enumerate(json["input"]):
            v = np.zeros(EMBEDDING_DIM)
            v[0] = 1.0
            data.append({"embedding": v.tolist(), "index": n})
        return _FakeResponse({"data": data})

    monkeypatch.setattr("falcon.embeddings.httpx.post", fake_post)
    config = EmbeddingProviderConfig(
        backend=EmbeddingBackend.REMOTE, endpoint_url="http://fake",
        batch_size=2, retries=1,
    )
    out = embed_batch(["a", "b", "c", "d", "e"], config)
    assert sizes == [2, 2, 1]
    assert len(out) == 5
