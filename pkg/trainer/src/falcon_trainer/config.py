"""Training configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

# Reference hyperparameters for full-scale runs on the real pair datasets;
# the desk-scale tests override batch size and epochs.
REFERENCE_BASE_MODEL = "all-mpnet-base-v2"
REFERENCE_BATCH_SIZE = 64
REFERENCE_LEARNING_RATE = 2e-5

# Built-in lightweight encoder id: token-hashed embedding bag, CPU-friendly,
# no downloads.
HASHED_BAG_MODEL = "hashed-bag-encoder"

EMBEDDING_DIM = 768


@dataclass
class TrainingConfig:
    base_model_id: str = REFERENCE_BASE_MODEL
    batch_size: int = REFERENCE_BATCH_SIZE
    learning_rate: float = REFERENCE_LEARNING_RATE
    temperature: float = 0.05
    max_epochs: int = 10
    early_stop_patience: int = 3
    seed: int = 0
    output_dir: str = "checkpoints"
    symmetric_loss: bool = False
    vocab_buckets: int = 8192  # hashed-bag encoder only

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2: in-batch negatives need company")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "TrainingConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
