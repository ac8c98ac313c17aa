"""HTTP service exposing tasks, sessions, prediction, feedback, validation.

Every response body carries ``ok``; failures are error objects
``{ok: false, code, message}`` rather than bare status pages, so clients
can branch on ``code``. A second concurrent request on the same session is
answered with ``busy`` instead of queueing.
"""

from __future__ import annotations

import argparse
import json
import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import task as T
from .session import SessionError, SessionManager

SCHEMA_VERSION = 1


def _error(code, message, status=200):
    return JSONResponse({"ok": False, "code": code, "message": message}, status_code=status)


async def _body(request):
    try:
        body = await request.json()
    except Exception:
        return None
    return body if isinstance(body, dict) else None


def create_app(tasks_dir=None, manager=None, static_dir=None):
    if manager is None:
        tasks = T.load_tasks_dir(tasks_dir) if tasks_dir else {}
        manager = SessionManager(tasks)
    app = FastAPI()
    app.state.manager = manager

    @app.exception_handler(Exception)
    async def unhandled(request, exc):
        return _error("internal_error", str(exc))

    @app.get("/version")
    async def version():
        return {"ok": True, "schema_version": SCHEMA_VERSION}

    @app.get("/tasks")
    async def tasks():
        return {
            "ok": True,
            "tasks": [
                {"id": t.task_id, "name": t.name, "modality": t.modality}
                for t in manager.task_list()
            ],
        }

    def _with_session(body, fn):
        session_id = body.get("session_id")
        try:
            lock = manager.session_lock(session_id)
        except SessionError as exc:
            return _error(exc.code, str(exc))
        if not lock.acquire(blocking=False):
            return _error("busy", f"session {session_id} has a request in flight")
        try:
            return fn(session_id)
        except SessionError as exc:
            return _error(exc.code, str(exc))
        finally:
            lock.release()

    @app.post("/session")
    async def create_session(request: Request):
        body = await _body(request)
        if body is None or "task_id" not in body or "sample_id" not in body:
            return _error("bad_request", "expected {task_id, sample_id}")
        try:
            state = manager.start_session(body["task_id"], body["sample_id"])
        except SessionError as exc:
            return _error(exc.code, str(exc))
        return {
            "ok": True,
            "session_id": state.session_id,
            "source_preview": state.source.preview,
        }

    @app.post("/predict")
    async def predict(request: Request):
        body = await _body(request)
        if body is None or "session_id" not in body:
            return _error("bad_request", "expected {session_id}")

        def run(session_id):
            hyp = manager.initial_prediction(session_id)
            return {"ok": True, "hypothesis": hyp.surface, "spliced": hyp.spliced}

        return _with_session(body, run)

    @app.post("/feedback")
    async def feedback(request: Request):
        body = await _body(request)
        if body is None or "session_id" not in body or "prefix" not in body:
            return _error("bad_request", "expected {session_id, prefix, typed_len, moved_pointer}")

        def run(session_id):
            hyp = manager.apply_feedback(
                session_id,
                body["prefix"],
                typed_len=int(body.get("typed_len", 0)),
                moved_pointer=bool(body.get("moved_pointer", False)),
            )
            return {"ok": True, "hypothesis": hyp.surface, "spliced": hyp.spliced}

        return _with_session(body, run)

    @app.post("/validate")
    async def validate(request: Request):
        body = await _body(request)
        if body is None or "session_id" not in body:
            return _error("bad_request", "expected {session_id, learn}")

        def run(session_id):
            report = manager.validate(session_id, learn=bool(body.get("learn", False)))
            return {
                "ok": True,
                "final_text": report.final_text,
                "keystrokes": report.effort.keystrokes,
                "mouse_actions": report.effort.mouse_actions,
                "iterations": report.effort.iterations,
                "ksmr": report.ksmr,
            }

        return _with_session(body, run)

    @app.get("/media/{task_id}/{filename}")
    async def media(task_id: str, filename: str):
        t = manager.tasks.get(task_id)
        if t is None or t.media_dir is None:
            return _error("unknown_task", f"no media for task {task_id}")
        path = Path(t.media_dir) / filename
        if not path.is_file() or path.parent != Path(t.media_dir):
            return _error("unknown_sample", f"no media file {filename}")
        return FileResponse(path)

    if static_dir:
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def main(argv=None):
    parser = argparse.ArgumentParser(description="interactive seq2seq prediction server")
    parser.add_argument("--host", default=os.environ.get("IPSEQ_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("IPSEQ_PORT", "8000")))
    parser.add_argument("--tasks-dir", default=os.environ.get("IPSEQ_TASKS_DIR"))
    parser.add_argument("--static-dir", default=os.environ.get("IPSEQ_STATIC_DIR"))
    args = parser.parse_args(argv)
    if not args.tasks_dir:
        parser.error("--tasks-dir (or IPSEQ_TASKS_DIR) is required")

    import uvicorn

    app = create_app(tasks_dir=args.tasks_dir, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
