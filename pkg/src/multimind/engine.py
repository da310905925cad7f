"""Engine core: registry wiring, the comment action, and chat sessions.

This is the layer both the HTTP API and the CLI sit on. File mutation is
never performed here; the comment action returns the annotated content and
the caller decides whether and how to write it.
"""

from __future__ import annotations

import asyncio
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .config import EngineConfig
from .driver import Message
from .registry import ANY, DriverRegistry, FanoutOutcome, TargetSelector
from .tasks import (
    CodeSelection,
    DEFINED_TASK_NAMES,
    TaskSpec,
    default_task_spec,
    run_open_task,
)
from .workflows import (
    ITERATIVE_REFINE,
    WorkflowResult,
    WorkflowSpec,
    run_iterative_refine,
    run_parallel,
    run_sequential,
)

HISTORY_TURN_LIMIT = 20

# When a defined task runs as a generic workflow step, the piped text lands
# in its main content placeholder; auxiliary placeholders default to empty.
_PRIMARY_PLACEHOLDER = {
    "comment": "code",
    "doc_quality": "comment",
    "generate": "spec",
    "review": "code",
}


def _generic_bindings(spec: TaskSpec, text: str) -> dict[str, str]:
    bindings = {name: "" for name in spec.template.required}
    bindings[_PRIMARY_PLACEHOLDER.get(spec.id, "input")] = text
    return bindings


class GatewayError(ValueError):
    """Request rejected before any driver call."""


class UnknownIdError(GatewayError):
    """Request names a session, turn, or workflow that does not exist."""


@dataclass
class ChatTurn:
    user_text: str
    candidates: FanoutOutcome
    selected_driver: str | None = None
    timestamp: float = field(default_factory=time.time)


@dataclass
class ChatSession:
    session_id: str
    turns: list[ChatTurn] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    def history(self, limit: int = HISTORY_TURN_LIMIT) -> list[Message]:
        """User texts plus selected assistant replies only, most recent turns."""
        messages: list[Message] = []
        for turn in self.turns[-limit:]:
            messages.append(Message(role="user", content=turn.user_text))
            if turn.selected_driver is not None:
                selected = turn.candidates.results[turn.selected_driver]
                messages.append(Message(role="assistant", content=selected.content))
        return messages

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "turns": [
                {
                    "user_text": t.user_text,
                    "candidates": t.candidates.to_dict(),
                    "selected_driver": t.selected_driver,
                    "timestamp": t.timestamp,
                }
                for t in self.turns
            ],
        }


@dataclass
class CommentActionRequest:
    selection: CodeSelection
    workflow: str | None = None
    apply: bool = False
    max_iterations: int | None = None


@dataclass
class CommentActionResult:
    status: str  # accepted | needs_manual_review | failed
    comment: str | None = None
    feedback: str | None = None
    annotated_file: str | None = None
    iterations: int = 0
    workflow: WorkflowResult | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "comment": self.comment,
            "feedback": self.feedback,
            "annotated_file": self.annotated_file,
            "iterations": self.iterations,
            "trace": [t.to_dict() for t in self.workflow.trace] if self.workflow else [],
        }


def insert_comment(original: str, comment: str, start_line: int) -> str:
    """Insert the comment block immediately above start_line (1-based),
    re-indented to match that line's leading whitespace. All other lines
    stay byte-identical."""
    lines = original.splitlines(keepends=True)
    if not 1 <= start_line <= len(lines):
        raise GatewayError(f"start_line {start_line} out of range")
    target = lines[start_line - 1]
    indent = target[: len(target) - len(target.lstrip())].rstrip("\n\r")
    block = "".join(
        f"{indent}{line}\n" if line.strip() else "\n"
        for line in comment.splitlines()
    )
    return "".join(lines[: start_line - 1]) + block + "".join(lines[start_line - 1 :])


class Engine:
    """One configured engine: singleton registry, task specs, workflows,
    and in-memory chat sessions (optionally journaled)."""

    def __init__(self, config: EngineConfig):
        self.config = config
        DriverRegistry.reset()
        self.registry = DriverRegistry.instance()
        for driver_config in config.drivers:
            self.registry.register(driver_config)

        prompts_dir = Path(config.prompts_dir) if config.prompts_dir else None
        overrides = {t.id: t for t in config.tasks}
        self.task_specs: dict[str, TaskSpec] = {}
        for name in DEFINED_TASK_NAMES:
            override = overrides.get(name)
            self.task_specs[name] = default_task_spec(
                name,
                targets=override.targets if override else ANY,
                mode=override.mode if override else None,
                temperature=override.temperature if override else None,
                prompts_dir=prompts_dir,
            )
        self.workflows: dict[str, WorkflowSpec] = {w.id: w for w in config.workflows}
        self.sessions: dict[str, ChatSession] = {}

    # -- workflows ---------------------------------------------------------

    def _default_refine_workflow(self) -> WorkflowSpec:
        for w in self.workflows.values():
            if w.strategy == ITERATIVE_REFINE:
                return w
        return WorkflowSpec(
            id="comment-refine",
            strategy=ITERATIVE_REFINE,
            generator="comment",
            verifier="doc_quality",
        )

    async def run_workflow(self, spec: WorkflowSpec, input_text: str) -> WorkflowResult:
        steps = [self.task_specs[s] for s in spec.steps]
        if spec.strategy == "sequential":
            return await run_sequential(
                self.registry, steps, input_text, make_bindings=_generic_bindings
            )
        if spec.strategy == "parallel":
            return await run_parallel(
                self.registry, steps, input_text, make_bindings=_generic_bindings
            )
        raise GatewayError(
            f"workflow {spec.id!r} needs a code selection; use the comment action"
        )

    # -- comment action ----------------------------------------------------

    def _check_selection_against_file(self, selection: CodeSelection) -> str | None:
        path = Path(selection.file_path)
        try:
            content = path.read_text("utf-8")
        except OSError:
            return None  # file not reachable from the engine; skip the check
        lines = content.splitlines()
        if selection.end_line > len(lines):
            raise GatewayError(
                f"selection lines {selection.start_line}:{selection.end_line} "
                f"out of range for {selection.file_path} ({len(lines)} lines)"
            )
        on_disk = "\n".join(lines[selection.start_line - 1 : selection.end_line])
        if on_disk.strip() != selection.text.strip():
            raise GatewayError(
                "selection text does not match the file content at those lines"
            )
        return content

    async def comment_action(self, req: CommentActionRequest) -> CommentActionResult:
        file_content = self._check_selection_against_file(req.selection)
        if req.workflow is not None:
            if req.workflow not in self.workflows:
                raise UnknownIdError(f"unknown workflow {req.workflow!r}")
            workflow = self.workflows[req.workflow]
            if workflow.strategy != ITERATIVE_REFINE:
                raise GatewayError(
                    f"workflow {req.workflow!r} is not an iterative refine workflow"
                )
        else:
            workflow = self._default_refine_workflow()
        max_iterations = req.max_iterations or workflow.max_iterations
        result = await run_iterative_refine(
            self.registry,
            self.task_specs[workflow.generator],
            self.task_specs[workflow.verifier],
            req.selection,
            max_iterations=max_iterations,
        )
        iterations = max(
            (t.iteration for t in result.trace), default=0
        )
        action = CommentActionResult(
            status=result.status,
            comment=result.final_output,
            feedback=result.last_feedback,
            iterations=iterations,
            workflow=result,
        )
        if result.status == "accepted" and req.apply:
            if file_content is None:
                raise GatewayError(
                    f"cannot apply: file {req.selection.file_path} is not readable"
                )
            action.annotated_file = insert_comment(
                file_content, result.final_output, req.selection.start_line
            )
        return action

    # -- chat sessions -----------------------------------------------------

    def create_session(self) -> str:
        session_id = uuid.uuid4().hex
        self.sessions[session_id] = ChatSession(session_id=session_id)
        self._journal({"event": "session_created", "session_id": session_id})
        return session_id

    def get_session(self, session_id: str) -> ChatSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownIdError(f"unknown session {session_id!r}") from None

    async def post_message(
        self, session_id: str, user_text: str, targets: TargetSelector = ANY
    ) -> tuple[int, FanoutOutcome]:
        session = self.get_session(session_id)
        async with session.lock:
            history = session.history()
            outcome = await run_open_task(self.registry, user_text, history, targets)
            session.turns.append(ChatTurn(user_text=user_text, candidates=outcome))
            turn_index = len(session.turns) - 1
        self._journal(
            {
                "event": "turn",
                "session_id": session_id,
                "turn_index": turn_index,
                "user_text": user_text,
                "candidates": outcome.to_dict(),
            }
        )
        return turn_index, outcome

    def select_response(
        self, session_id: str, turn_index: int, driver_id: str
    ) -> ChatSession:
        session = self.get_session(session_id)
        if not 0 <= turn_index < len(session.turns):
            raise UnknownIdError(f"unknown turn index {turn_index}")
        turn = session.turns[turn_index]
        if driver_id not in turn.candidates.results:
            raise GatewayError(f"driver {driver_id!r} is not a candidate for this turn")
        if driver_id not in turn.candidates.responses():
            raise GatewayError(
                f"candidate from driver {driver_id!r} errored and cannot be selected"
            )
        if turn.selected_driver != driver_id:
            turn.selected_driver = driver_id
            self._journal(
                {
                    "event": "select",
                    "session_id": session_id,
                    "turn_index": turn_index,
                    "driver_id": driver_id,
                }
            )
        return session

    def _journal(self, record: dict) -> None:
        if not self.config.journal_path:
            return
        with open(self.config.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
