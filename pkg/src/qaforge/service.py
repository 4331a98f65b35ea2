"""HTTP API serving verification tasks to human annotators.

Endpoints (all JSON):

    GET  /api/health           liveness probe
    GET  /api/tasks/next       one pending task for ?annotator=ID, or 204
    POST /api/votes            record {task_id, annotator_id, verdict}
    GET  /api/progress         counts by task status

Duplicate votes answer 409, unknown tasks 404, malformed bodies 400.
When a static directory is configured the annotation console is served
from /.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .verification import (
    DuplicateVoteError,
    TaskResolvedError,
    TaskStore,
    UnknownTaskError,
    VERDICT_INVALID,
    VERDICT_VALID,
)

logger = logging.getLogger(__name__)


def _error(status_code: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status_code)


def create_app(
    store: TaskStore,
    *,
    hide_gold: bool = False,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="annotation service")

    @app.get("/api/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/tasks/next")
    async def next_task(request: Request) -> Response:
        annotator = request.query_params.get("annotator", "").strip()
        if not annotator:
            return _error(400, "missing annotator id")
        task = store.next_for(annotator)
        if task is None:
            return Response(status_code=204)
        payload = {
            "task_id": task.task_id,
            "question": task.question,
            "choices": task.choices,
            "gold_key": None if hide_gold else task.gold_key,
            "progress": store.progress(),
        }
        return JSONResponse(payload)

    @app.post("/api/votes")
    async def submit_vote(request: Request) -> Response:
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _error(400, "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        task_id = body.get("task_id")
        annotator_id = body.get("annotator_id")
        verdict = body.get("verdict")
        if not isinstance(task_id, str) or not task_id:
            return _error(400, "missing task_id")
        if not isinstance(annotator_id, str) or not annotator_id:
            return _error(400, "missing annotator_id")
        if verdict not in (VERDICT_VALID, VERDICT_INVALID):
            return _error(400, "verdict must be 'valid' or 'invalid'")
        try:
            task = store.record_vote(task_id, annotator_id, verdict)
        except UnknownTaskError:
            return _error(404, f"unknown task {task_id}")
        except DuplicateVoteError:
            return _error(409, f"{annotator_id} already voted on {task_id}")
        except TaskResolvedError:
            return _error(409, f"task {task_id} is already resolved")
        return JSONResponse(
            {"task_id": task.task_id, "status": task.status, "votes": len(task.votes)}
        )

    @app.get("/api/progress")
    async def progress() -> dict:
        return store.progress()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    store: TaskStore,
    *,
    host: str = "127.0.0.1",
    port: int = 8000,
    hide_gold: bool = False,
    static_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(store, hide_gold=hide_gold, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
