"""Loopback JSON API over the engine.

Every error response carries a structured body {"kind": ..., "message": ...};
driver credentials never appear in any response (configs only reference the
environment variable name).
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .config import EngineConfig
from .engine import CommentActionRequest, Engine, GatewayError, UnknownIdError
from .registry import RegistryError
from .tasks import CodeSelection, run_task


class ApiError(Exception):
    def __init__(self, status: int, kind: str, message: str):
        super().__init__(message)
        self.status = status
        self.kind = kind
        self.message = message


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"kind": kind, "message": message})


async def _body(request: Request) -> dict:
    try:
        data = json.loads(await request.body() or b"{}")
    except json.JSONDecodeError as exc:
        raise ApiError(422, "invalid_json", f"request body is not valid JSON: {exc.msg}")
    if not isinstance(data, dict):
        raise ApiError(422, "invalid_request", "request body must be a JSON object")
    return data


def _require(data: dict, field: str, kind=str):
    if field not in data:
        raise ApiError(422, "invalid_request", f"missing required field {field!r}")
    value = data[field]
    if kind is not None and not isinstance(value, kind):
        raise ApiError(
            422, "invalid_request", f"field {field!r} must be {kind.__name__}"
        )
    return value


def _parse_selection(data: dict) -> CodeSelection:
    raw = _require(data, "selection", dict)
    try:
        return CodeSelection(
            file_path=raw["file_path"],
            language_id=raw["language_id"],
            start_line=int(raw["start_line"]),
            end_line=int(raw["end_line"]),
            text=raw["text"],
        )
    except KeyError as exc:
        raise ApiError(422, "invalid_request", f"selection missing field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        raise ApiError(422, "invalid_request", f"invalid selection: {exc}")


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="multimind", docs_url=None, redoc_url=None)
    token = engine.config.auth_token

    @app.middleware("http")
    async def check_auth(request: Request, call_next):
        if token:
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return _error(401, "unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    @app.exception_handler(ApiError)
    async def on_api_error(request, exc: ApiError):
        return _error(exc.status, exc.kind, exc.message)

    @app.exception_handler(UnknownIdError)
    async def on_unknown_id(request, exc: UnknownIdError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(GatewayError)
    async def on_gateway_error(request, exc: GatewayError):
        return _error(422, "invalid_request", str(exc))

    @app.exception_handler(RegistryError)
    async def on_registry_error(request, exc: RegistryError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request, exc):
        return _error(422, "invalid_request", str(exc))

    @app.exception_handler(Exception)
    async def on_unexpected(request, exc):
        return _error(500, "internal", f"{type(exc).__name__}: {exc}")

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.get("/v1/drivers")
    async def list_drivers():
        return {
            "drivers": [
                {
                    "id": c.id,
                    "provider": c.provider,
                    "endpoint": c.endpoint,
                    "model": c.model,
                    "credential_env": c.credential_env,
                    "timeout_ms": c.timeout_ms,
                    "temperature": c.temperature,
                    "max_output_tokens": c.max_output_tokens,
                }
                for c in engine.registry.configs()
            ]
        }

    @app.get("/v1/drivers/{driver_id}/activity")
    async def driver_activity(driver_id: str):
        return engine.registry.activity(driver_id).to_dict()

    @app.post("/v1/actions/comment")
    async def comment_action(request: Request):
        data = await _body(request)
        selection = _parse_selection(data)
        req = CommentActionRequest(
            selection=selection,
            workflow=data.get("workflow"),
            apply=bool(data.get("apply", False)),
            max_iterations=data.get("max_iterations"),
        )
        result = await engine.comment_action(req)
        return result.to_dict()

    @app.post("/v1/tasks/{task_id}/run")
    async def run_task_endpoint(task_id: str, request: Request):
        data = await _body(request)
        if task_id not in engine.task_specs:
            raise ApiError(404, "not_found", f"unknown task {task_id!r}")
        bindings = data.get("bindings", {})
        if not isinstance(bindings, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in bindings.items()
        ):
            raise ApiError(422, "invalid_request", "bindings must map strings to strings")
        spec = engine.task_specs[task_id]
        try:
            result = await run_task(engine.registry, spec, bindings)
        except ValueError as exc:
            raise ApiError(422, "invalid_request", str(exc))
        return result.to_dict()

    @app.post("/v1/workflows/{workflow_id}/run")
    async def run_workflow_endpoint(workflow_id: str, request: Request):
        data = await _body(request)
        if workflow_id not in engine.workflows:
            raise ApiError(404, "not_found", f"unknown workflow {workflow_id!r}")
        spec = engine.workflows[workflow_id]
        if spec.strategy == "iterative_refine":
            selection = _parse_selection(data)
            req = CommentActionRequest(selection=selection, workflow=workflow_id)
            result = await engine.comment_action(req)
            return result.to_dict()
        input_text = _require(data, "input")
        result = await engine.run_workflow(spec, input_text)
        return result.to_dict()

    @app.post("/v1/chat/sessions")
    async def create_session():
        return {"session_id": engine.create_session()}

    @app.get("/v1/chat/sessions/{session_id}")
    async def get_session(session_id: str):
        return engine.get_session(session_id).to_dict()

    @app.post("/v1/chat/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request):
        data = await _body(request)
        text = _require(data, "text")
        if not text:
            raise ApiError(422, "invalid_request", "text must be non-empty")
        targets = data.get("targets")
        if targets is not None and (
            not isinstance(targets, list)
            or not all(isinstance(t, str) for t in targets)
        ):
            raise ApiError(422, "invalid_request", "targets must be a list of driver ids")
        turn_index, outcome = await engine.post_message(session_id, text, targets)
        return {"turn_index": turn_index, "candidates": outcome.to_dict()}

    @app.post("/v1/chat/sessions/{session_id}/select")
    async def select_response(session_id: str, request: Request):
        data = await _body(request)
        turn_index = _require(data, "turn_index", int)
        driver_id = _require(data, "driver_id")
        session = engine.select_response(session_id, turn_index, driver_id)
        return session.to_dict()

    return app


def serve(config: EngineConfig) -> None:
    """Run the gateway on loopback; blocks until interrupted."""
    import uvicorn

    engine = Engine(config)
    app = create_app(engine)
    uvicorn.run(app, host="127.0.0.1", port=config.listen_port, log_level="warning")
