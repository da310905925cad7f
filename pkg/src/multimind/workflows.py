"""Orchestration strategies over tasks: sequential piping, parallel
fan-out over steps, and the bounded generate-verify refinement loop."""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field
from typing import Callable

from .registry import DriverRegistry
from .tasks import (
    CodeSelection,
    TaskExecutionError,
    TaskResult,
    TaskSpec,
    Verdict,
    comment_bindings,
    run_comment_task,
    run_doc_quality_task,
    run_task,
)

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
ITERATIVE_REFINE = "iterative_refine"

DEFAULT_MAX_ITERATIONS = 3


@dataclass(frozen=True)
class WorkflowSpec:
    id: str
    strategy: str
    steps: tuple[str, ...] = ()
    generator: str = ""
    verifier: str = ""
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.strategy in (SEQUENTIAL, PARALLEL):
            if not self.steps:
                raise ValueError(f"{self.strategy} workflow needs at least one step")
        elif self.strategy == ITERATIVE_REFINE:
            if not self.generator or not self.verifier:
                raise ValueError("iterative_refine needs generator and verifier tasks")
            if self.generator == self.verifier:
                raise ValueError("generator and verifier must be distinct tasks")
            if self.max_iterations < 1:
                raise ValueError("max_iterations must be at least 1")
        else:
            raise ValueError(f"unknown workflow strategy {self.strategy!r}")


@dataclass
class TraceEntry:
    iteration: int
    task_id: str
    detail: TaskResult | Verdict
    wall_ms: float

    def to_dict(self) -> dict:
        if isinstance(self.detail, Verdict):
            detail = {
                "verdict": {
                    "pass": self.detail.passed,
                    "feedback": self.detail.feedback,
                }
            }
        else:
            detail = {"task_result": self.detail.to_dict()}
        return {
            "iteration": self.iteration,
            "task_id": self.task_id,
            "wall_ms": self.wall_ms,
            **detail,
        }


@dataclass
class WorkflowResult:
    status: str  # accepted | needs_manual_review | failed
    final_output: str | None = None
    last_feedback: str | None = None
    trace: list[TraceEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "final_output": self.final_output,
            "last_feedback": self.last_feedback,
            "trace": [t.to_dict() for t in self.trace],
        }


def _primary_text(result: TaskResult) -> str:
    if result.selected is not None:
        return result.selected.content
    return next(iter(result.outcome.responses().values())).content


async def _timed(coro):
    start = time.perf_counter()
    result = await coro
    return result, (time.perf_counter() - start) * 1000.0


def _input_bindings(spec: TaskSpec, text: str) -> dict[str, str]:
    return {"input": text}


BindingsFactory = Callable[[TaskSpec, str], dict[str, str]]


async def run_sequential(
    registry: DriverRegistry,
    steps: list[TaskSpec],
    initial_input: str,
    make_bindings: BindingsFactory = _input_bindings,
) -> WorkflowResult:
    """Pipe each step's selected output into the next step's input binding.

    The first failed step aborts: later steps are never dispatched.
    """
    if not steps:
        raise ValueError("sequential workflow needs at least one step")
    trace: list[TraceEntry] = []
    current = initial_input
    for i, spec in enumerate(steps, start=1):
        result, wall_ms = await _timed(
            run_task(registry, spec, make_bindings(spec, current))
        )
        trace.append(TraceEntry(i, spec.id, result, wall_ms))
        if result.status != "ok" or result.selected is None:
            return WorkflowResult(status="failed", trace=trace)
        current = result.selected.content
    return WorkflowResult(status="accepted", final_output=current, trace=trace)


async def run_parallel(
    registry: DriverRegistry,
    steps: list[TaskSpec],
    shared_input: str,
    make_bindings: BindingsFactory = _input_bindings,
) -> WorkflowResult:
    """Run every step concurrently over the same input and aggregate.

    Failed only when every step fails; selection among outputs is the
    caller's concern.
    """
    if not steps:
        raise ValueError("parallel workflow needs at least one step")
    timed = await asyncio.gather(
        *(
            _timed(run_task(registry, spec, make_bindings(spec, shared_input)))
            for spec in steps
        )
    )
    trace = [
        TraceEntry(i, spec.id, result, wall_ms)
        for i, (spec, (result, wall_ms)) in enumerate(zip(steps, timed), start=1)
    ]
    ok = [e.detail for e in trace if e.detail.status == "ok"]
    if not ok:
        return WorkflowResult(status="failed", trace=trace)
    return WorkflowResult(
        status="accepted", final_output=_primary_text(ok[0]), trace=trace
    )


async def run_iterative_refine(
    registry: DriverRegistry,
    generator: TaskSpec,
    verifier: TaskSpec,
    selection: CodeSelection,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> WorkflowResult:
    """Generate a comment, verify it, and regenerate with feedback until the
    verdict passes or the iteration budget runs out.

    Exhausting the budget yields needs_manual_review carrying the last
    generated comment and the last feedback; a fan-out failure in either
    task yields failed instead.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    trace: list[TraceEntry] = []
    feedback = ""
    comment: str | None = None
    for iteration in range(1, max_iterations + 1):
        gen_result, wall_ms = await _timed(
            run_comment_task(registry, selection, feedback=feedback, spec=generator)
        )
        trace.append(TraceEntry(iteration, generator.id, gen_result, wall_ms))
        if gen_result.status != "ok" or gen_result.selected is None:
            return WorkflowResult(status="failed", trace=trace)
        comment = gen_result.selected.content
        try:
            verdict, wall_ms = await _timed(
                run_doc_quality_task(registry, selection, comment, spec=verifier)
            )
        except TaskExecutionError:
            return WorkflowResult(status="failed", trace=trace)
        trace.append(TraceEntry(iteration, verifier.id, verdict, wall_ms))
        if verdict.passed:
            return WorkflowResult(
                status="accepted", final_output=comment, trace=trace
            )
        feedback = verdict.feedback
    return WorkflowResult(
        status="needs_manual_review",
        final_output=comment,
        last_feedback=feedback,
        trace=trace,
    )
