"""Bi-encoder backbones.

One encoder tower embeds both CTI text and rule text (shared weights);
alignment is trained, not wired in. Two backbones:

  * hashed-bag-encoder: token-hashed ``EmbeddingBag`` with mean pooling
    and L2 normalization. Deterministic init from the config seed, fast
    on CPU, no downloads. The desk-scale default.
  * any sentence-transformers model id (e.g. the full-scale reference
    all-mpnet-base-v2), used when that package and its weights are
    available.
"""
from __future__ import annotations

import hashlib
import re

import torch
from torch import nn

from falcon_trainer.config import EMBEDDING_DIM, HASHED_BAG_MODEL, TrainingConfig

_TOKEN_RE = re.compile(
    r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
    r"|\w+(?:\.\w+)+"
    r"|\w+"
)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


class HashedBagEncoder(nn.Module):
    """Mean-pooled bag of hashed token embeddings, unit-normalized."""

    def __init__(self, buckets: int = 8192, dim: int = EMBEDDING_DIM, seed: int = 0):
        super().__init__()
        self.buckets = buckets
        self.dim = dim
        generator = torch.Generator().manual_seed(seed)
        weight = torch.empty(buckets, dim)
        nn.init.normal_(weight, std=0.05, generator=generator)
        self.embedding = nn.EmbeddingBag(buckets, dim, mode="mean", _weight=weight)

    def _flatten(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            tokens = tokenize(text) or ["<empty>"]
            flat.extend(_bucket(t, self.buckets) for t in tokens)
        return (torch.tensor(flat, dtype=torch.long),
                torch.tensor(offsets, dtype=torch.long))

    def forward(self, texts: list[str]) -> torch.Tensor:
        ids, offsets = self._flatten(texts)
        pooled = self.embedding(ids, offsets)
        return nn.functional.normalize(pooled, dim=1)


class SentenceTransformerEncoder(nn.Module):
    """Wrapper over a sentence-transformers model, normalized output."""

    def __init__(self, model_id: str):
        super().__init__()
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise RuntimeError(
                f"model {model_id!r} needs the sentence-transformers package; "
                f"use {HASHED_BAG_MODEL!r} for the offline encoder"
            ) from exc
        self.model = SentenceTransformer(model_id)
        probe = self.model.get_sentence_embedding_dimension()
        if probe != EMBEDDING_DIM:
            raise RuntimeError(
                f"model {model_id!r} embeds into {probe} dims, expected {EMBEDDING_DIM}"
            )

    def forward(self, texts: list[str]) -> torch.Tensor:
        out = self.model.encode(texts, convert_to_tensor=True, normalize_embeddings=True)
        return out


def build_encoder(config: TrainingConfig) -> nn.Module:
    if config.base_model_id == HASHED_BAG_MODEL:
        return HashedBagEncoder(buckets=config.vocab_buckets, seed=config.seed)
    return SentenceTransformerEncoder(config.base_model_id)
