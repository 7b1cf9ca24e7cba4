"""Training loop: in-batch contrastive optimization with early stopping.

Per epoch, validation logs the full-matrix contrastive loss and diagonal
recall over the held-out pairs. Early stopping watches validation loss;
the best checkpoint (weights + config fingerprint + metrics history)
lands in the output directory. Runs are seeded end to end: identical
configs produce identical loss curves within float tolerance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from falcon_trainer.config import TrainingConfig
from falcon_trainer.data import TextPair
from falcon_trainer.encoder import build_encoder
from falcon_trainer.loss import contrastive_loss, diagonal_recall, symmetric_contrastive_loss

WEIGHTS_FILE = "encoder.pt"
CONFIG_FILE = "config.json"
METRICS_FILE = "metrics.json"


class TrainingError(Exception):
    pass


@dataclass
class EpochMetrics:
    epoch: int
    train_loss_sum: float
    train_loss_mean: float
    validation_loss: float
    validation_diagonal_recall: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class TrainingResult:
    checkpoint_dir: Path
    history: list[EpochMetrics]
    baseline_diagonal_recall: float
    best_epoch: int
    best_validation_loss: float
    final_validation_diagonal_recall: float
    failed: bool = False
    failure_reason: str | None = None


def _similarity(encoder: torch.nn.Module, left: list[str], right: list[str]) -> torch.Tensor:
    return encoder(left) @ encoder(right).T


@torch.no_grad()
def evaluate(encoder: torch.nn.Module, pairs: list[TextPair], temperature: float) -> tuple[float, float]:
    """(contrastive loss mean over rows, diagonal recall) on a pair set."""
    encoder.eval()
    matrix = _similarity(encoder, [p.cti_text for p in pairs], [p.rule_text for p in pairs])
    loss = contrastive_loss(matrix, temperature, reduction="mean").item()
    recall = diagonal_recall(matrix)
    return loss, recall


def train(
    pairs: list[TextPair],
    config: TrainingConfig,
    validation_pairs: list[TextPair],
) -> TrainingResult:
    """Fine-tune the encoder on CTI/rule pairs with in-batch negatives."""
    if len(pairs) < config.batch_size:
        raise TrainingError(
            f"need at least batch_size={config.batch_size} training pairs, got {len(pairs)}"
        )
    if len(validation_pairs) < 2:
        raise TrainingError("validation split needs at least 2 pairs")

    torch.manual_seed(config.seed)
    encoder = build_encoder(config)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.learning_rate)
    loss_fn = symmetric_contrastive_loss if config.symmetric_loss else contrastive_loss

    baseline_loss, baseline_recall = evaluate(encoder, validation_pairs, config.temperature)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history: list[EpochMetrics] = []
    best_loss = float("inf")
    best_epoch = -1
    epochs_since_best = 0
    order_rng = torch.Generator().manual_seed(config.seed + 7)

    for epoch in range(config.max_epochs):
        encoder.train()
        perm = torch.randperm(len(pairs), generator=order_rng).tolist()
        epoch_sum = 0.0
        rows = 0
        for start in range(0, len(perm) - config.batch_size + 1, config.batch_size):
            batch = [pairs[i] for i in perm[start : start + config.batch_size]]
            matrix = _similarity(
                encoder, [p.cti_text for p in batch], [p.rule_text for p in batch]
            )
            loss = loss_fn(matrix, config.temperature, reduction="sum")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_sum += loss.item()
            rows += len(batch)

        val_loss, val_recall = evaluate(encoder, validation_pairs, config.temperature)
        metrics = EpochMetrics(
            epoch=epoch,
            train_loss_sum=epoch_sum,
            train_loss_mean=epoch_sum / max(rows, 1),
            validation_loss=val_loss,
            validation_diagonal_recall=val_recall,
        )
        history.append(metrics)

        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            epochs_since_best = 0
            _save_checkpoint(encoder, config, history, baseline_recall, out_dir)
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.early_stop_patience:
                break

    final_recall = history[best_epoch].validation_diagonal_recall
    failed = final_recall < baseline_recall
    result = TrainingResult(
        checkpoint_dir=out_dir,
        history=history,
        baseline_diagonal_recall=baseline_recall,
        best_epoch=best_epoch,
        best_validation_loss=best_loss,
        final_validation_diagonal_recall=final_recall,
        failed=failed,
        failure_reason=(
            f"validation diagonal recall degraded below the untrained baseline "
            f"({final_recall:.3f} < {baseline_recall:.3f})" if failed else None
        ),
    )
    _write_metrics(result, config, out_dir)
    return result


def _save_checkpoint(encoder, config: TrainingConfig, history, baseline_recall, out_dir: Path) -> None:
    torch.save(encoder.state_dict(), out_dir / WEIGHTS_FILE)
    payload = {
        **config.to_dict(),
        "fingerprint": config.fingerprint(),
        # full-scale reference hyperparameters for the record
        "reference_hyperparameters": {
            "base_model_id": "all-mpnet-base-v2",
            "batch_size": 64,
            "learning_rate": 2e-5,
            "early_stopping": "validation loss",
        },
    }
    (out_dir / CONFIG_FILE).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _write_metrics(result: TrainingResult, config: TrainingConfig, out_dir: Path) -> None:
    payload = {
        "fingerprint": config.fingerprint(),
        "baseline_diagonal_recall": result.baseline_diagonal_recall,
        "best_epoch": result.best_epoch,
        "best_validation_loss": result.best_validation_loss,
        "final_validation_diagonal_recall": result.final_validation_diagonal_recall,
        "failed": result.failed,
        "failure_reason": result.failure_reason,
        "history": [m.to_dict() for m in result.history],
    }
    (out_dir / METRICS_FILE).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_checkpoint(checkpoint_dir: str | Path) -> tuple[torch.nn.Module, TrainingConfig, str]:
    """Rebuild the encoder from a checkpoint; returns (encoder, config, fingerprint)."""
    checkpoint_dir = Path(checkpoint_dir)
    payload = json.loads((checkpoint_dir / CONFIG_FILE).read_text(encoding="utf-8"))
    fingerprint = payload.pop("fingerprint")
    payload.pop("reference_hyperparameters", None)
    config = TrainingConfig.from_dict(payload)
    encoder = build_encoder(config)
    state = torch.load(checkpoint_dir / WEIGHTS_FILE, weights_only=True)
    encoder.load_state_dict(state)
    encoder.eval()
    return encoder, config, fingerprint
