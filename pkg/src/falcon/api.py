"""HTTP service exposing the pipeline to the review UI and automation.

Versioned under /api/v1. Generation is asynchronous: POST /runs answers
202 with a run id and the loop proceeds on a worker thread; clients poll.
Mutating endpoints honor an Idempotency-Key header so a retried request
replays the original response instead of acting twice.
"""
from __future__ import annotations

import os
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse

from falcon.corpus import CorpusError
from falcon.cti import CtiDocument, CtiValidationError
from falcon.embeddings import EmbeddingError
from falcon.orchestrator import (
    AnalystAction,
    Orchestrator,
    OrchestratorError,
    RunState,
    WrongStateError,
)
from falcon.retrieval import RetrievalMethod, retrieve
from falcon.rules.model import CorpusStatus, RuleMedium
from falcon.rules.syntax import parse_rule
from falcon.scorer import score_pair

API_TOKEN_ENV = "FALCON_API_TOKEN"
BIND_ADDR_ENV = "FALCON_BIND_ADDR"
DATA_DIR_ENV = "FALCON_DATA_DIR"

# Closed error-code set; every error body is {"error": {"code", "message"}}.
ERROR_CODES = (
    "invalid_request", "unauthorized", "not_found", "wrong_state", "internal"
)


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        assert code in ERROR_CODES
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message


def _error_response(exc: ApiError) -> JSONResponse:
    return JSONResponse(
        status_code=exc.http_status,
        content={"error": {"code": exc.code, "message": exc.message}},
    )


@dataclass
class _IdempotencyStore:
    """Replays responses for retried mutations with the same key."""

    entries: dict[tuple[str, str], tuple[int, dict]] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, scope: str, key: str | None) -> tuple[int, dict] | None:
        if not key:
            return None
        with self.lock:
            return self.entries.get((scope, key))

    def put(self, scope: str, key: str | None, status: int, body: dict) -> None:
        if not key:
            return
        with self.lock:
            self.entries[(scope, key)] = (status, body)


def run_summary(run) -> dict:
    return {
        "run_id": run.run_id,
        "medium": run.medium.value,
        "state": run.state.value,
        "iterations": len(run.iterations),
        "threat_name": run.cti.threat_name,
        "deployed_rule_id": run.deployed_rule_id,
        "created_at": run.created_at,
        "updated_at": run.updated_at,
    }


def create_app(orchestrator: Orchestrator, api_token: str | None = None) -> FastAPI:
    workers: list[threading.Thread] = []

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        # graceful shutdown: let in-flight runs finish their current iteration
        orchestrator.stop_event.set()
        for thread in workers:
            thread.join(timeout=30)

    app = FastAPI(title="falcon", version="1", lifespan=lifespan)
    token = api_token if api_token is not None else os.environ.get(API_TOKEN_ENV)
    idempotency = _IdempotencyStore()

    def require_auth(authorization: str | None = Header(default=None)) -> None:
        if not token:
            return
        if authorization != f"Bearer {token}":
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc)

    @app.exception_handler(WrongStateError)
    async def handle_wrong_state(request: Request, exc: WrongStateError):
        return _error_response(ApiError(409, "wrong_state", str(exc)))

    @app.exception_handler(OrchestratorError)
    async def handle_orch_error(request: Request, exc: OrchestratorError):
        if "unknown run" in str(exc):
            return _error_response(ApiError(404, "not_found", str(exc)))
        return _error_response(ApiError(400, "invalid_request", str(exc)))

    @app.exception_handler(CorpusError)
    async def handle_corpus_error(request: Request, exc: CorpusError):
        return _error_response(ApiError(400, "invalid_request", str(exc)))

    @app.exception_handler(CtiValidationError)
    async def handle_cti_error(request: Request, exc: CtiValidationError):
        return _error_response(ApiError(400, "invalid_request", str(exc)))

    def _spawn(target, *args) -> None:
        thread = threading.Thread(target=target, args=args, daemon=True)
        workers.append(thread)
        thread.start()

    def _parse_body_cti(body: dict) -> CtiDocument:
        if "cti" not in body:
            raise ApiError(400, "invalid_request", "body requires a 'cti' object")
        try:
            return CtiDocument.from_dict(body["cti"])
        except (KeyError, ValueError) as exc:
            raise ApiError(400, "invalid_request", f"invalid cti: {exc}") from exc

    def _parse_medium(value: str | None) -> RuleMedium:
        try:
            return RuleMedium(value)
        except ValueError:
            raise ApiError(400, "invalid_request", f"medium must be one of: "
                           f"{', '.join(m.value for m in RuleMedium)}") from None

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok", "runs": len(orchestrator.runs)}

    @app.get("/api/v1/schema")
    def schema() -> dict:
        from importlib import resources
        import json as _json
        ref = resources.files("falcon").joinpath("api_schema.json")
        return _json.loads(ref.read_text(encoding="utf-8"))

    @app.post("/api/v1/runs", status_code=202)
    def create_run(
        body: dict,
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
        _: None = Depends(require_auth),
    ):
        cached = idempotency.get("create_run", idempotency_key)
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        cti = _parse_body_cti(body)
        medium = _parse_medium(body.get("medium"))
        run = orchestrator.create_run(cti, medium)
        _spawn(orchestrator.drive_run, run.run_id)
        response = {"run_id": run.run_id, "state": run.state.value}
        idempotency.put("create_run", idempotency_key, 202, response)
        return JSONResponse(status_code=202, content=response)

    @app.get("/api/v1/runs")
    def list_runs(
        state: str | None = None,
        medium: str | None = None,
        _: None = Depends(require_auth),
    ) -> dict:
        state_filter = None
        if state is not None:
            try:
                state_filter = RunState(state)
            except ValueError:
                raise ApiError(400, "invalid_request", f"unknown state {state!r}") from None
        medium_filter = _parse_medium(medium) if medium is not None else None
        runs = orchestrator.list_runs(state=state_filter, medium=medium_filter)
        return {"runs": [run_summary(r) for r in runs]}

    @app.get("/api/v1/runs/{run_id}")
    def get_run(run_id: str, _: None = Depends(require_auth)) -> dict:
        run = orchestrator.get_run(run_id)
        payload = run.to_dict()
        payload["retrieved_rules"] = [
            {"rule_id": rid, "raw_text": orchestrator.services.corpus.get(rid).raw_text}
            for rid in run.retrieved_rule_ids
            if rid in orchestrator.services.corpus
        ]
        return payload

    @app.post("/api/v1/runs/{run_id}/analyst-decision")
    def analyst_decision(
        run_id: str,
        body: dict,
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
        _: None = Depends(require_auth),
    ):
        scope = f"decision:{run_id}"
        cached = idempotency.get(scope, idempotency_key)
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        try:
            action = AnalystAction(body.get("action"))
        except ValueError:
            raise ApiError(400, "invalid_request",
                           "action must be approve, reject, or regenerate") from None
        note = body.get("note", "") or ""
        likert = body.get("likert")
        if likert is not None and (not isinstance(likert, int) or not 0 <= likert <= 3):
            raise ApiError(400, "invalid_request", "likert must be an integer in 0..3")
        if action is AnalystAction.REGENERATE and not note.strip():
            raise ApiError(400, "invalid_request", "regenerate requires a non-empty note")
        run = orchestrator.submit_analyst_decision(
            run_id, action, note=note, likert=likert, drive=False
        )
        if action is AnalystAction.REGENERATE:
            _spawn(orchestrator.drive_run, run.run_id)
        response = run_summary(run)
        idempotency.put(scope, idempotency_key, 200, response)
        return JSONResponse(status_code=200, content=response)

    @app.get("/api/v1/rules")
    def list_rules(
        status: str | None = None,
        medium: str | None = None,
        _: None = Depends(require_auth),
    ) -> dict:
        rules = orchestrator.services.corpus.all_rules()
        if status is not None:
            try:
                status_filter = CorpusStatus(status)
            except ValueError:
                raise ApiError(400, "invalid_request", f"unknown status {status!r}") from None
            rules = [r for r in rules if r.corpus_status is status_filter]
        if medium is not None:
            medium_filter = _parse_medium(medium)
            rules = [r for r in rules if r.medium is medium_filter]
        return {"rules": [
            {
                "rule_id": r.id,
                "medium": r.medium.value,
                "status": r.corpus_status.value,
                "source": r.source.value,
                "raw_text": r.raw_text,
            }
            for r in sorted(rules, key=lambda r: r.id)
        ]}

    @app.post("/api/v1/rules/import")
    def import_rules(
        body: dict,
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
        _: None = Depends(require_auth),
    ):
        cached = idempotency.get("import", idempotency_key)
        if cached:
            return JSONResponse(status_code=cached[0], content=cached[1])
        corpus = orchestrator.services.corpus
        imported, failed = 0, []
        if "directory" in body:
            report = corpus.import_directory(body["directory"])
            imported += report.imported
            failed.extend({"location": loc, "error": err} for loc, err in report.failed)
        for n, entry in enumerate(body.get("rules", [])):
            medium = _parse_medium(entry.get("medium"))
            text = entry.get("text", "")
            result = parse_rule(text, medium)
            if not result.ok:
                first = result.errors[0].render() if result.errors else "parse failed"
                failed.append({"location": f"inline:{n}", "error": first})
                continue
            rule_id = entry.get("rule_id") or f"{medium.value}-import-{n:04d}-{abs(hash(text)) % 10**8:08d}"
            corpus.deploy_generated(rule_id, medium, text)
            imported += 1
        orchestrator.rebuild_indexes()
        response = {"imported": imported, "failed": failed}
        idempotency.put("import", idempotency_key, 200, response)
        return JSONResponse(status_code=200, content=response)

    @app.post("/api/v1/score")
    def score(body: dict, _: None = Depends(require_auth)) -> dict:
        cti = _parse_body_cti(body)
        rule_text = body.get("rule_text", "")
        if not rule_text.strip():
            raise ApiError(400, "invalid_request", "rule_text must be non-empty")
        try:
            pair = score_pair(
                cti, rule_text, orchestrator.services.calibration,
                orchestrator.services.embedder,
            )
        except EmbeddingError as exc:
            raise ApiError(400, "invalid_request", str(exc)) from exc
        return {"raw_cosine": pair.raw_cosine, "scaled": pair.scaled}

    @app.post("/api/v1/retrieve")
    def retrieve_endpoint(body: dict, _: None = Depends(require_auth)) -> dict:
        cti = _parse_body_cti(body)
        medium = _parse_medium(body.get("medium"))
        try:
            method = RetrievalMethod(body.get("method", "bm25"))
        except ValueError:
            raise ApiError(400, "invalid_request",
                           f"method must be one of: {', '.join(m.value for m in RetrievalMethod)}") from None
        k = body.get("k", 10)
        if not isinstance(k, int) or k < 1:
            raise ApiError(400, "invalid_request", "k must be a positive integer")
        result = retrieve(
            cti, orchestrator.index_for(medium), method, k,
            embedder=orchestrator.services.embedder,
        )
        return {
            "method": result.method.value,
            "ranked": [{"rule_id": rid, "score": score} for rid, score in result.ranked],
        }

    return app
