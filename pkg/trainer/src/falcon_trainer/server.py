"""Embeddings endpoint over a trained checkpoint.

Speaks the same wire shape as hosted embedding providers (POST
/v1/embeddings with ``model`` and ``input``), returning 768-dim
L2-normalized vectors whose ``model`` field carries the checkpoint
fingerprint. The generation pipeline's remote embedding client points at
this server without modification.
"""
from __future__ import annotations

from pathlib import Path

import torch
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from falcon_trainer.config import EMBEDDING_DIM
from falcon_trainer.train import load_checkpoint


def create_app(checkpoint_dir: str | Path) -> FastAPI:
    encoder, config, fingerprint = load_checkpoint(checkpoint_dir)
    model_id = f"cti-rule-encoder-{fingerprint}"

    with torch.no_grad():
        probe = encoder(["dimension probe"])
    if probe.shape != (1, EMBEDDING_DIM):
        raise RuntimeError(
            f"checkpoint embeds into {tuple(probe.shape[1:])}, refusing to serve "
            f"anything but {EMBEDDING_DIM}-dim vectors"
        )

    app = FastAPI(title="cti-rule-encoder", version="1")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "model": model_id, "dim": EMBEDDING_DIM}

    @app.post("/v1/embeddings")
    def embeddings(body: dict):
        raw_input = body.get("input")
        if isinstance(raw_input, str):
            texts = [raw_input]
        elif isinstance(raw_input, list) and raw_input and all(
            isinstance(t, str) and t for t in raw_input
        ):
            texts = raw_input
        else:
            return JSONResponse(status_code=400, content={
                "error": {"message": "input must be a non-empty string or list of strings"}
            })
        with torch.no_grad():
            vectors = encoder(texts)
        data = [
            {"object": "embedding", "index": n, "embedding": row.tolist()}
            for n, row in enumerate(vectors)
        ]
        return {"object": "list", "model": model_id, "data": data,
                "usage": {"prompt_tokens": 0, "total_tokens": 0}}

    return app


def serve_embeddings(checkpoint_dir: str | Path, bind_addr: str = "127.0.0.1:8788") -> None:
    import uvicorn

    host, _, port = bind_addr.rpartition(":")
    uvicorn.run(create_app(checkpoint_dir), host=host or "127.0.0.1", port=int(port))
