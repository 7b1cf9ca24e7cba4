"""Softmax contrastive loss over in-batch similarity matrices.

Given the square matrix of cosine similarities for a batch of paired
texts, the loss pushes each row's softmax mass onto its diagonal entry:

    L = -sum_i log( exp(m[i][i] / tau) / sum_j exp(m[i][j] / tau) )

The temperature tau sharpens the distribution; the sum form is the
definition, the mean over rows is what training logs report so runs with
different batch sizes stay comparable.
"""
from __future__ import annotations

import torch


def contrastive_loss(
    similarity_matrix: torch.Tensor,
    temperature: float,
    reduction: str = "sum",
) -> torch.Tensor:
    """Row-wise InfoNCE over a square in-batch cosine matrix."""
    m = similarity_matrix
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {tuple(m.shape)}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = m / temperature
    log_probs = torch.log_softmax(logits, dim=1)
    per_row = -log_probs.diagonal()
    if reduction == "sum":
        return per_row.sum()
    if reduction == "mean":
        return per_row.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def symmetric_contrastive_loss(
    similarity_matrix: torch.Tensor,
    temperature: float,
    reduction: str = "sum",
) -> torch.Tensor:
    """Average of row-wise (text-a -> text-b) and column-wise InfoNCE."""
    forward = contrastive_loss(similarity_matrix, temperature, reduction)
    backward = contrastive_loss(similarity_matrix.T, temperature, reduction)
    return (forward + backward) / 2.0


def diagonal_recall(similarity_matrix: torch.Tensor) -> float:
    """Fraction of rows where the diagonal strictly wins; ties fail."""
    m = similarity_matrix.detach()
    n = m.shape[0]
    if m.ndim != 2 or m.shape[1] != n or n == 0:
        raise ValueError(f"need a non-empty square matrix, got {tuple(m.shape)}")
    hits = 0
    for i in range(n):
        row = m[i]
        best = row.max()
        if row[i] == best and (row == best).sum() == 1:
            hits += 1
    return hits / n
