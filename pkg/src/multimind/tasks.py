"""Concrete AI jobs: prompt construction, dispatch mode, result shaping.

Defined tasks (comment, doc-quality verdict, code generation, doc review)
own a template and structured post-processing; the open-ended chat task
passes free text through with conversation history.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .driver import AssistantRequest, AssistantResponse, Message
from .registry import ANY, DriverRegistry, FanoutOutcome, TargetSelector

PLACEHOLDER = re.compile(r"\{\{([a-zA-Z0-9_]+)\}\}")

CONTINUE_AFTER_FIRST = "continue_after_first"
CONTINUE_AFTER_LAST = "continue_after_last"


class TemplateError(ValueError):
    """Missing placeholder binding or malformed template."""


class TaskExecutionError(RuntimeError):
    """Fan-out produced no usable response; distinct from a FAIL verdict."""

    def __init__(self, message: str, outcome: FanoutOutcome | None = None):
        super().__init__(message)
        self.outcome = outcome


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    user_text: str

    @property
    def required(self) -> frozenset[str]:
        return frozenset(
            PLACEHOLDER.findall(self.system_text) + PLACEHOLDER.findall(self.user_text)
        )


def render_text(text: str, bindings: dict[str, str]) -> str:
    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise TemplateError(f"missing binding for placeholder {name!r}")
        return bindings[name]

    # Single pass: inserted values are never re-expanded.
    return PLACEHOLDER.sub(substitute, text)


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> list[Message]:
    """Render system+user messages with placeholders substituted verbatim."""
    messages = []
    system = render_text(template.system_text, bindings)
    if system.strip():
        messages.append(Message(role="system", content=system))
    messages.append(Message(role="user", content=render_text(template.user_text, bindings)))
    return messages


def load_template(name: str, prompts_dir: Path | None = None) -> PromptTemplate:
    """Load `<name>_system.txt` / `<name>_user.txt`, packaged or overridden."""
    if prompts_dir is not None:
        system = (prompts_dir / f"{name}_system.txt").read_text("utf-8")
        user = (prompts_dir / f"{name}_user.txt").read_text("utf-8")
    else:
        pkg = resources.files("multimind") / "prompts"
        system = (pkg / f"{name}_system.txt").read_text("utf-8")
        user = (pkg / f"{name}_user.txt").read_text("utf-8")
    return PromptTemplate(system_text=system, user_text=user)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: str = "defined"  # defined | open_ended
    mode: str = CONTINUE_AFTER_FIRST
    targets: tuple[str, ...] | None = None  # None = any registered driver
    template: PromptTemplate | None = None
    temperature: float = 0.2

    def __post_init__(self):
        if self.kind not in ("defined", "open_ended"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.mode not in (CONTINUE_AFTER_FIRST, CONTINUE_AFTER_LAST):
            raise ValueError(f"unknown task mode {self.mode!r}")
        if self.kind == "defined" and self.template is None:
            raise ValueError(f"defined task {self.id!r} requires a template")


@dataclass(frozen=True)
class CodeSelection:
    file_path: str
    language_id: str
    start_line: int
    end_line: int
    text: str

    def __post_init__(self):
        if self.start_line < 1 or self.start_line > self.end_line:
            raise ValueError("require 1 <= start_line <= end_line")
        if not self.text:
            raise ValueError("selection text must be non-empty")


@dataclass(frozen=True)
class Verdict:
    passed: bool
    feedback: str
    raw: str


VERDICT_LINE = re.compile(r"^[ \t]*verdict:\s*(pass|fail)\s*$", re.IGNORECASE)


def parse_verdict(raw: str) -> Verdict:
    """Total parser: any reply without a well-formed first verdict line fails
    conservatively with the raw text as feedback."""
    lines = raw.split("\n", 1)
    match = VERDICT_LINE.match(lines[0]) if lines else None
    if match is None:
        return Verdict(passed=False, feedback=raw or "empty reply", raw=raw)
    passed = match.group(1).lower() == "pass"
    feedback = lines[1].strip() if len(lines) > 1 else ""
    if not passed and not feedback:
        feedback = raw
    return Verdict(passed=passed, feedback=feedback, raw=raw)


@dataclass
class TaskResult:
    task_id: str
    outcome: FanoutOutcome
    selected: AssistantResponse | None
    status: str  # ok | failed

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "selected": self.selected.to_dict() if self.selected else None,
            "outcome": self.outcome.to_dict(),
        }


def strip_echo(content: str, selection_text: str) -> str:
    """Drop any verbatim echo of the input selection from a reply."""
    if selection_text in content:
        content = content.replace(selection_text, "")
    # Tidy fence pairs left empty by the removal.
    content = re.sub(r"```[a-zA-Z0-9_+-]*\s*```", "", content)
    return content.strip()


FENCED = re.compile(r"^```[a-zA-Z0-9_+-]*\n(.*?)\n?```\s*$", re.DOTALL)


def strip_fences(content: str) -> str:
    match = FENCED.match(content.strip())
    return match.group(1) if match else content


async def run_task(
    registry: DriverRegistry, spec: TaskSpec, bindings: dict[str, str]
) -> TaskResult:
    """Render the task's template and dispatch under its fan-out mode."""
    messages = render_prompt(spec.template, bindings)
    request = AssistantRequest(
        messages=tuple(messages), temperature_override=spec.temperature
    )
    if spec.mode == CONTINUE_AFTER_FIRST:
        outcome = await registry.call_back(request, spec.targets)
        selected = outcome.winner_response
        status = "ok" if selected is not None else "failed"
    else:
        outcome = await registry.fetch_all(request, spec.targets)
        selected = None
        status = "ok" if outcome.responses() else "failed"
    return TaskResult(task_id=spec.id, outcome=outcome, selected=selected, status=status)


def comment_bindings(selection: CodeSelection, feedback: str = "") -> dict[str, str]:
    return {
        "lang": selection.language_id,
        "code": selection.text,
        "feedback": feedback,
    }


async def run_comment_task(
    registry: DriverRegistry,
    selection: CodeSelection,
    targets: TargetSelector = ANY,
    feedback: str = "",
    spec: TaskSpec | None = None,
) -> TaskResult:
    """Generate a documentation comment for the selection.

    The selected content is the comment block only: any verbatim echo of the
    input code is stripped from the reply.
    """
    if spec is None:
        spec = default_task_spec("comment", targets)
    result = await run_task(registry, spec, comment_bindings(selection, feedback))
    if result.selected is not None:
        cleaned = strip_echo(result.selected.content, selection.text)
        result.selected = AssistantResponse(
            driver_id=result.selected.driver_id,
            content=cleaned,
            latency_ms=result.selected.latency_ms,
            finish_reason=result.selected.finish_reason if cleaned else "other",
            token_usage=result.selected.token_usage,
        )
    return result


async def run_doc_quality_task(
    registry: DriverRegistry,
    selection: CodeSelection,
    comment: str,
    targets: TargetSelector = ANY,
    spec: TaskSpec | None = None,
) -> Verdict:
    """Judge comment quality; the model answers with a structured verdict line."""
    if not comment:
        raise ValueError("comment must be non-empty")
    if spec is None:
        spec = default_task_spec("doc_quality", targets)
    bindings = {
        "lang": selection.language_id,
        "code": selection.text,
        "comment": comment,
    }
    result = await run_task(registry, spec, bindings)
    if result.status != "ok" or result.selected is None:
        raise TaskExecutionError(
            "doc-quality fan-out produced no response", result.outcome
        )
    return parse_verdict(result.selected.content)


async def run_code_generation_task(
    registry: DriverRegistry,
    spec_text: str,
    language_id: str,
    targets: TargetSelector = ANY,
    spec: TaskSpec | None = None,
) -> TaskResult:
    """Generate code from a textual description; fences are stripped."""
    if not spec_text:
        raise ValueError("spec_text must be non-empty")
    if spec is None:
        spec = default_task_spec("generate", targets)
    result = await run_task(registry, spec, {"lang": language_id, "spec": spec_text})
    if result.selected is not None:
        result.selected = AssistantResponse(
            driver_id=result.selected.driver_id,
            content=strip_fences(result.selected.content),
            latency_ms=result.selected.latency_ms,
            finish_reason=result.selected.finish_reason,
            token_usage=result.selected.token_usage,
        )
    return result


async def run_doc_review_task(
    registry: DriverRegistry,
    selection: CodeSelection,
    existing_comment: str,
    targets: TargetSelector = ANY,
    spec: TaskSpec | None = None,
) -> TaskResult:
    """Improve an existing comment for the selection."""
    if not existing_comment:
        raise ValueError("existing_comment must be non-empty")
    if spec is None:
        spec = default_task_spec("review", targets)
    bindings = {
        "lang": selection.language_id,
        "code": selection.text,
        "current_doc": existing_comment,
    }
    result = await run_task(registry, spec, bindings)
    if result.selected is not None:
        result.selected = AssistantResponse(
            driver_id=result.selected.driver_id,
            content=strip_echo(result.selected.content, selection.text),
            latency_ms=result.selected.latency_ms,
            finish_reason=result.selected.finish_reason,
            token_usage=result.selected.token_usage,
        )
    return result


async def run_open_task(
    registry: DriverRegistry,
    user_text: str,
    history: list[Message],
    targets: TargetSelector = ANY,
) -> FanoutOutcome:
    """Context-free chat turn: every targeted assistant answers independently
    and all candidates come back unranked for human selection."""
    if not user_text:
        raise ValueError("user_text must be non-empty")
    messages = tuple(history) + (Message(role="user", content=user_text),)
    request = AssistantRequest(messages=messages)
    return await registry.fetch_all(request, targets)


# Verdicts want determinism; generation tolerates mild sampling.
_DEFAULT_TEMPERATURES = {
    "comment": 0.2,
    "doc_quality": 0.0,
    "generate": 0.2,
    "review": 0.2,
}

_DEFAULT_MODES = {
    "comment": CONTINUE_AFTER_FIRST,
    "doc_quality": CONTINUE_AFTER_FIRST,
    "generate": CONTINUE_AFTER_FIRST,
    "review": CONTINUE_AFTER_FIRST,
}

DEFINED_TASK_NAMES = tuple(_DEFAULT_TEMPERATURES)


def default_task_spec(
    name: str,
    targets: TargetSelector = ANY,
    mode: str | None = None,
    temperature: float | None = None,
    prompts_dir: Path | None = None,
) -> TaskSpec:
    if name not in DEFINED_TASK_NAMES:
        raise ValueError(f"unknown defined task {name!r}")
    return TaskSpec(
        id=name,
        kind="defined",
        mode=mode or _DEFAULT_MODES[name],
        targets=tuple(targets) if targets is not None else None,
        template=load_template(name, prompts_dir),
        temperature=_DEFAULT_TEMPERATURES[name] if temperature is None else temperature,
    )
