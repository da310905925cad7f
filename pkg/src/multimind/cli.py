"""Command-line surface over the engine.

Every command can either embed the engine directly (default) or proxy to a
running daemon via --connect; behavior is identical either way.

Exit codes: 0 ok, 1 task failed or needs manual review, 2 usage/config
error, 3 network/driver error.
"""

from __future__ import annotations

import asyncio
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import click
import httpx

from .api import serve as serve_gateway
from .config import EngineConfig, load_config
from .driver import ConfigError
from .engine import CommentActionRequest, Engine, GatewayError
from .tasks import (
    CodeSelection,
    run_code_generation_task,
    run_doc_review_task,
    strip_fences,
)

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_USAGE = 2
EXIT_DRIVER = 3

COMMENT_LINE_MARKERS = ("#", "//", "/*", "*", '"""', "'''", "--", "<!--")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _find_config(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("MULTIMIND_CONFIG")
    if env:
        return Path(env)
    default = Path("multimind.json")
    if default.exists():
        return default
    _fail(EXIT_USAGE, "no config found (use --config, MULTIMIND_CONFIG, or ./multimind.json)")


def _load(explicit: str | None) -> EngineConfig:
    try:
        return load_config(_find_config(explicit))
    except ConfigError as exc:
        _fail(EXIT_USAGE, str(exc))


def _parse_lines(spec: str) -> tuple[int, int]:
    try:
        start, end = spec.split(":")
        return int(start), int(end)
    except ValueError:
        _fail(EXIT_USAGE, f"--lines must be A:B, got {spec!r}")


def _read_selection(file: str, lines: str, lang: str) -> CodeSelection:
    start, end = _parse_lines(lines)
    try:
        content = Path(file).read_text("utf-8")
    except OSError as exc:
        _fail(EXIT_USAGE, f"cannot read {file}: {exc}")
    file_lines = content.splitlines()
    if not 1 <= start <= end <= len(file_lines):
        _fail(EXIT_USAGE, f"--lines {lines} out of range for {file} ({len(file_lines)} lines)")
    return CodeSelection(
        file_path=str(Path(file).resolve()),
        language_id=lang,
        start_line=start,
        end_line=end,
        text="\n".join(file_lines[start - 1 : end]),
    )


def _atomic_write(path: Path, content: str) -> None:
    """Backup to .bak, then write temp + rename so failures never corrupt."""
    shutil.copy2(path, path.with_suffix(path.suffix + ".bak"))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


class Backend:
    """Shared command surface for embedded and daemon-proxied operation."""

    def comment(self, selection: CodeSelection, apply: bool, max_iter: int | None) -> dict:
        raise NotImplementedError

    def drivers(self) -> list[dict]:
        raise NotImplementedError

    def activity(self, driver_id: str) -> dict:
        raise NotImplementedError

    def generate(self, spec_text: str, lang: str) -> dict:
        raise NotImplementedError

    def review(self, selection: CodeSelection, current_doc: str) -> dict:
        raise NotImplementedError

    def run_workflow(self, workflow_id: str, input_text: str) -> dict:
        raise NotImplementedError

    def create_session(self) -> str:
        raise NotImplementedError

    def chat_turn(self, session_id: str, text: str, targets: list[str] | None) -> dict:
        raise NotImplementedError

    def select(self, session_id: str, turn_index: int, driver_id: str) -> None:
        raise NotImplementedError


class EmbeddedBackend(Backend):
    def __init__(self, config: EngineConfig):
        self.engine = Engine(config)

    def comment(self, selection, apply, max_iter):
        req = CommentActionRequest(
            selection=selection, apply=apply, max_iterations=max_iter
        )
        return asyncio.run(self.engine.comment_action(req)).to_dict()

    def drivers(self):
        return [
            {"id": c.id, "provider": c.provider, "model": c.model, "endpoint": c.endpoint}
            for c in self.engine.registry.configs()
        ]

    def activity(self, driver_id):
        return self.engine.registry.activity(driver_id).to_dict()

    def generate(self, spec_text, lang):
        result = asyncio.run(
            run_code_generation_task(
                self.engine.registry, spec_text, lang,
                spec=self.engine.task_specs["generate"],
            )
        )
        return result.to_dict()

    def review(self, selection, current_doc):
        result = asyncio.run(
            run_doc_review_task(
                self.engine.registry, selection, current_doc,
                spec=self.engine.task_specs["review"],
            )
        )
        return result.to_dict()

    def run_workflow(self, workflow_id, input_text):
        if workflow_id not in self.engine.workflows:
            _fail(EXIT_USAGE, f"unknown workflow {workflow_id!r}")
        spec = self.engine.workflows[workflow_id]
        return asyncio.run(self.engine.run_workflow(spec, input_text)).to_dict()

    def create_session(self):
        return self.engine.create_session()

    def chat_turn(self, session_id, text, targets):
        turn_index, outcome = asyncio.run(
            self.engine.post_message(session_id, text, targets)
        )
        return {"turn_index": turn_index, "candidates": outcome.to_dict()}

    def select(self, session_id, turn_index, driver_id):
        self.engine.select_response(session_id, turn_index, driver_id)


class RemoteBackend(Backend):
    def __init__(self, address: str, token: str | None = None):
        headers = {"authorization": f"Bearer {token}"} if token else {}
        self.client = httpx.Client(
            base_url=f"http://{address}", headers=headers, timeout=120.0
        )

    def _call(self, method: str, path: str, body: dict | None = None) -> dict:
        try:
            resp = self.client.request(method, path, json=body)
        except httpx.HTTPError as exc:
            _fail(EXIT_DRIVER, f"cannot reach daemon: {exc}")
        data = resp.json()
        if resp.status_code >= 400:
            code = EXIT_USAGE if resp.status_code in (401, 404, 422) else EXIT_DRIVER
            _fail(code, f"daemon: {data.get('message', resp.text)}")
        return data

    @staticmethod
    def _selection_body(selection: CodeSelection) -> dict:
        return {
            "file_path": selection.file_path,
            "language_id": selection.language_id,
            "start_line": selection.start_line,
            "end_line": selection.end_line,
            "text": selection.text,
        }

    def comment(self, selection, apply, max_iter):
        body = {"selection": self._selection_body(selection), "apply": apply}
        if max_iter is not None:
            body["max_iterations"] = max_iter
        return self._call("POST", "/v1/actions/comment", body)

    def drivers(self):
        return self._call("GET", "/v1/drivers")["drivers"]

    def activity(self, driver_id):
        return self._call("GET", f"/v1/drivers/{driver_id}/activity")

    def generate(self, spec_text, lang):
        result = self._call(
            "POST", "/v1/tasks/generate/run",
            {"bindings": {"lang": lang, "spec": spec_text}},
        )
        if result.get("selected"):
            result["selected"]["content"] = strip_fences(result["selected"]["content"])
        return result

    def review(self, selection, current_doc):
        return self._call(
            "POST", "/v1/tasks/review/run",
            {"bindings": {
                "lang": selection.language_id,
                "code": selection.text,
                "current_doc": current_doc,
            }},
        )

    def run_workflow(self, workflow_id, input_text):
        return self._call(
            "POST", f"/v1/workflows/{workflow_id}/run", {"input": input_text}
        )

    def create_session(self):
        return self._call("POST", "/v1/chat/sessions", {})["session_id"]

    def chat_turn(self, session_id, text, targets):
        body = {"text": text}
        if targets is not None:
            body["targets"] = targets
        return self._call("POST", f"/v1/chat/sessions/{session_id}/messages", body)

    def select(self, session_id, turn_index, driver_id):
        self._call(
            "POST", f"/v1/chat/sessions/{session_id}/select",
            {"turn_index": turn_index, "driver_id": driver_id},
        )


def _backend(config: str | None, connect: str | None, token: str | None = None) -> Backend:
    if connect:
        return RemoteBackend(connect, token)
    return EmbeddedBackend(_load(config))


@click.group()
def main():
    """Multi-assistant orchestration engine."""


@main.command()
@click.option("--config", default=None, help="Path to the engine config file.")
def serve(config):
    """Run the gateway daemon on loopback."""
    serve_gateway(_load(config))


@main.group()
def drivers():
    """Inspect the driver registry."""


@drivers.command("list")
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def drivers_list(config, connect, token):
    """Print registered drivers (credentials are never stored or shown)."""
    for d in _backend(config, connect, token).drivers():
        click.echo(f"{d['id']}\t{d['provider']}\t{d.get('model', '')}")


@drivers.command("activity")
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def drivers_activity(config, connect, token):
    """Print per-driver activity counters."""
    backend = _backend(config, connect, token)
    for d in backend.drivers():
        counters = backend.activity(d["id"])
        click.echo(
            f"{d['id']}\trequests={counters['requests']} "
            f"successes={counters['successes']} errors={counters['errors']}"
        )


@main.command()
@click.option("--file", "file_", required=True, help="Source file to comment.")
@click.option("--lines", required=True, metavar="A:B", help="1-based inclusive line range.")
@click.option("--lang", required=True, help="Language id, e.g. java or python.")
@click.option("--apply", is_flag=True, help="Rewrite the file in place (backup .bak).")
@click.option("--max-iter", type=int, default=None, help="Refinement iteration cap.")
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def comment(file_, lines, lang, apply, max_iter, config, connect, token):
    """Generate a verified documentation comment for a code selection."""
    selection = _read_selection(file_, lines, lang)
    backend = _backend(config, connect, token)
    try:
        result = backend.comment(selection, apply, max_iter)
    except GatewayError as exc:
        _fail(EXIT_USAGE, str(exc))
    status = result["status"]
    if status == "failed":
        _fail(EXIT_DRIVER, "comment workflow failed: all drivers errored")
    if status == "needs_manual_review":
        click.echo(result["comment"] or "")
        click.echo(
            f"needs manual review after {result['iterations']} iterations: "
            f"{result.get('feedback', '')}",
            err=True,
        )
        sys.exit(EXIT_TASK_FAILED)
    click.echo(result["comment"])
    if apply:
        if not result.get("annotated_file"):
            _fail(EXIT_DRIVER, "engine returned no annotated content")
        _atomic_write(Path(file_), result["annotated_file"])
        click.echo(f"applied to {file_} (backup at {file_}.bak)", err=True)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--spec-file", required=True, help="File describing what to implement.")
@click.option("--lang", required=True)
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def generate(spec_file, lang, config, connect, token):
    """Generate code from a textual description."""
    try:
        spec_text = Path(spec_file).read_text("utf-8")
    except OSError as exc:
        _fail(EXIT_USAGE, f"cannot read {spec_file}: {exc}")
    result = _backend(config, connect, token).generate(spec_text, lang)
    if result["status"] != "ok" or not result.get("selected"):
        _fail(EXIT_DRIVER, "code generation failed: all drivers errored")
    click.echo(result["selected"]["content"])
    sys.exit(EXIT_OK)


@main.command()
@click.option("--file", "file_", required=True)
@click.option("--lines", required=True, metavar="A:B")
@click.option("--lang", default="text")
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def review(file_, lines, lang, config, connect, token):
    """Improve the documentation comment leading a code selection."""
    selection = _read_selection(file_, lines, lang)
    current_doc = _leading_comment(selection.text)
    if not current_doc:
        _fail(EXIT_USAGE, "selection does not start with a documentation comment")
    result = _backend(config, connect, token).review(selection, current_doc)
    if result["status"] != "ok" or not result.get("selected"):
        _fail(EXIT_DRIVER, "documentation review failed: all drivers errored")
    click.echo(result["selected"]["content"])
    sys.exit(EXIT_OK)


def _leading_comment(text: str) -> str:
    lines = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and any(stripped.startswith(m) for m in COMMENT_LINE_MARKERS):
            lines.append(line)
        elif lines or stripped:
            break
    return "\n".join(lines)


@main.command()
@click.option("--drivers", "driver_list", default=None, help="Comma-separated driver ids.")
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def chat(driver_list, config, connect, token):
    """Interactive loop: candidates per driver, pick one by number, /quit exits."""
    targets = driver_list.split(",") if driver_list else None
    backend = _backend(config, connect, token)
    session_id = backend.create_session()
    click.echo(f"session {session_id} — /quit to exit", err=True)
    while True:
        try:
            text = click.prompt("you", prompt_suffix="> ", err=True)
        except (click.Abort, EOFError):
            break
        if text.strip() == "/quit":
            break
        if not text.strip():
            continue
        turn = backend.chat_turn(session_id, text, targets)
        candidates = turn["candidates"]["results"]
        numbered = list(candidates.items())
        for i, (driver_id, entry) in enumerate(numbered, start=1):
            if "response" in entry:
                click.echo(f"[{i}] {driver_id}: {entry['response']['content']}")
            else:
                click.echo(f"[{i}] {driver_id}: <error: {entry['error']['kind']}>")
        selectable = [i for i, (_, e) in enumerate(numbered, start=1) if "response" in e]
        if not selectable:
            click.echo("all drivers errored for this turn", err=True)
            continue
        while True:
            pick = click.prompt("pick", prompt_suffix="> ", err=True)
            if pick.strip() == "/quit":
                return
            try:
                n = int(pick)
            except ValueError:
                n = -1
            if n in selectable:
                backend.select(session_id, turn["turn_index"], numbered[n - 1][0])
                break
            click.echo(f"pick one of {selectable}", err=True)


@main.group()
def workflow():
    """Run configured workflows."""


@workflow.command("run")
@click.argument("workflow_id")
@click.option("--input-file", required=True)
@click.option("--config", default=None)
@click.option("--connect", default=None, metavar="HOST:PORT")
@click.option("--token", default=None)
def workflow_run(workflow_id, input_file, config, connect, token):
    """Run a workflow over the file's text and print the result trace as JSON."""
    try:
        input_text = Path(input_file).read_text("utf-8")
    except OSError as exc:
        _fail(EXIT_USAGE, f"cannot read {input_file}: {exc}")
    result = _backend(config, connect, token).run_workflow(workflow_id, input_text)
    click.echo(json.dumps(result, indent=2))
    if result["status"] == "failed":
        sys.exit(EXIT_DRIVER)
    if result["status"] == "needs_manual_review":
        sys.exit(EXIT_TASK_FAILED)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
