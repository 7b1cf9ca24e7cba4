"""Trainer command line: synthetic data runs and checkpoint serving."""
from __future__ import annotations

import argparse
import sys

from falcon_trainer.config import HASHED_BAG_MODEL, TrainingConfig
from falcon_trainer.data import build_synthetic_pairs, train_validation_split
from falcon_trainer.server import serve_embeddings
from falcon_trainer.train import TrainingError, train


def cmd_train_synthetic(args) -> int:
    config = TrainingConfig(
        base_model_id=args.base_model,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        temperature=args.temperature,
        max_epochs=args.epochs,
        seed=args.seed,
        output_dir=args.output_dir,
    )
    pairs = build_synthetic_pairs(n_pairs=args.pairs, seed=config.seed)
    train_pairs, val_pairs = train_validation_split(pairs, seed=config.seed)
    result = train(train_pairs, config, val_pairs)
    print(f"baseline diagonal recall: {result.baseline_diagonal_recall:.3f}")
    for m in result.history:
        print(f"epoch {m.epoch}: train {m.train_loss_mean:.4f} "
              f"val {m.validation_loss:.4f} recall {m.validation_diagonal_recall:.3f}")
    print(f"best epoch {result.best_epoch}; checkpoint in {result.checkpoint_dir}")
    if result.failed:
        print(f"training marked failed: {result.failure_reason}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    serve_embeddings(args.checkpoint, args.bind)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falcon-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-synthetic", help="desk-scale training on synthetic pairs")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--base-model", default=HASHED_BAG_MODEL)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=5e-3)
    p.add_argument("--temperature", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="checkpoints/synthetic")
    p.set_defaults(func=cmd_train_synthetic)

    p = sub.add_parser("serve", help="serve a checkpoint over the embeddings endpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bind", default="127.0.0.1:8788")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TrainingError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
