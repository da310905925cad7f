"""Engine configuration: a JSON document naming drivers, task overrides,
and workflow definitions. Credentials are referenced by environment
variable name and resolved only at send time."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .driver import ConfigError, DriverConfig, ErrorKind, ScriptedBehavior, ScriptedStep
from .tasks import CONTINUE_AFTER_FIRST, CONTINUE_AFTER_LAST, DEFINED_TASK_NAMES
from .workflows import WorkflowSpec

DEFAULT_PORT = 7640


@dataclass(frozen=True)
class TaskOverride:
    id: str
    targets: tuple[str, ...] | None = None
    mode: str | None = None
    temperature: float | None = None


@dataclass
class EngineConfig:
    drivers: list[DriverConfig]
    tasks: list[TaskOverride] = field(default_factory=list)
    workflows: list[WorkflowSpec] = field(default_factory=list)
    listen_port: int = DEFAULT_PORT
    auth_token: str | None = None
    journal_path: str | None = None
    prompts_dir: str | None = None

    def __post_init__(self):
        if not self.drivers:
            raise ConfigError("config must declare at least one driver")
        ids = [d.id for d in self.drivers]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ConfigError(f"duplicate driver ids: {sorted(dupes)}")
        if not 1024 <= self.listen_port <= 65535:
            raise ConfigError("listen_port must be in [1024, 65535]")
        known_tasks = set(DEFINED_TASK_NAMES)
        for t in self.tasks:
            if t.id not in known_tasks:
                raise ConfigError(f"task override references unknown task {t.id!r}")
            for target in t.targets or ():
                if target not in ids:
                    raise ConfigError(
                        f"task {t.id!r} targets unknown driver {target!r}"
                    )
        for w in self.workflows:
            refs = list(w.steps) or [w.generator, w.verifier]
            for ref in refs:
                if ref not in known_tasks:
                    raise ConfigError(
                        f"workflow {w.id!r} references unknown task {ref!r}"
                    )


def _parse_script(raw: dict) -> ScriptedBehavior:
    steps = []
    for s in raw.get("steps", []):
        error = ErrorKind(s["error"]) if "error" in s else None
        steps.append(
            ScriptedStep(
                delay_ms=float(s.get("delay_ms", 0)),
                content=s.get("content"),
                error=error,
            )
        )
    return ScriptedBehavior(
        steps=tuple(steps), exhaustion=raw.get("exhaustion", "repeat_last")
    )


def _parse_driver(raw: dict) -> DriverConfig:
    return DriverConfig(
        id=raw["id"],
        provider=raw["provider"],
        endpoint=raw.get("endpoint", ""),
        model=raw.get("model", ""),
        credential_env=raw.get("credential_env"),
        timeout_ms=float(raw.get("timeout_ms", 30000)),
        temperature=float(raw.get("temperature", 0.2)),
        max_output_tokens=int(raw.get("max_output_tokens", 1024)),
        script=_parse_script(raw["script"]) if "script" in raw else None,
    )


def _parse_task(raw: dict) -> TaskOverride:
    mode = raw.get("mode")
    if mode is not None and mode not in (CONTINUE_AFTER_FIRST, CONTINUE_AFTER_LAST):
        raise ConfigError(f"task {raw.get('id')!r}: unknown mode {mode!r}")
    targets = raw.get("targets")
    return TaskOverride(
        id=raw["id"],
        targets=tuple(targets) if targets is not None else None,
        mode=mode,
        temperature=raw.get("temperature"),
    )


def _parse_workflow(raw: dict) -> WorkflowSpec:
    return WorkflowSpec(
        id=raw["id"],
        strategy=raw["strategy"],
        steps=tuple(raw.get("steps", ())),
        generator=raw.get("generator", ""),
        verifier=raw.get("verifier", ""),
        max_iterations=int(raw.get("max_iterations", 3)),
    )


def parse_config(data: dict, base_dir: Path | None = None) -> EngineConfig:
    try:
        drivers = [_parse_driver(d) for d in data.get("drivers", [])]
        tasks = [_parse_task(t) for t in data.get("tasks", [])]
        workflows = [_parse_workflow(w) for w in data.get("workflows", [])]
    except KeyError as exc:
        raise ConfigError(f"missing required config field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    prompts_dir = data.get("prompts_dir")
    journal_path = data.get("journal_path")
    if base_dir is not None:
        if prompts_dir is not None:
            prompts_dir = str((base_dir / prompts_dir).resolve())
        if journal_path is not None:
            journal_path = str((base_dir / journal_path).resolve())
    return EngineConfig(
        drivers=drivers,
        tasks=tasks,
        workflows=workflows,
        listen_port=int(data.get("listen_port", DEFAULT_PORT)),
        auth_token=data.get("auth_token"),
        journal_path=journal_path,
        prompts_dir=prompts_dir,
    )


def load_config(path: str | Path) -> EngineConfig:
    """Load and validate a config file; parse errors carry line info."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): "
            f"{exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return parse_config(data, base_dir=path.parent)
