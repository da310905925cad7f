"""Local multi-assistant orchestration engine.

Fans requests out to multiple AI assistants under first-response or
all-responses semantics, runs bounded generate-verify workflows, and
exposes the results through a CLI and a localhost JSON API.
"""

from .config import EngineConfig, load_config
from .driver import (
    AssistantRequest,
    AssistantResponse,
    DriverConfig,
    DriverError,
    ErrorKind,
    Message,
    ScriptedBehavior,
    ScriptedStep,
)
from .engine import CommentActionRequest, CommentActionResult, Engine
from .registry import ANY, DriverRegistry, FanoutOutcome
from .tasks import CodeSelection, PromptTemplate, TaskSpec, Verdict
from .workflows import WorkflowResult, WorkflowSpec

__all__ = [
    "ANY",
    "AssistantRequest",
    "AssistantResponse",
    "CodeSelection",
    "CommentActionRequest",
    "CommentActionResult",
    "DriverConfig",
    "DriverError",
    "DriverRegistry",
    "Engine",
    "EngineConfig",
    "ErrorKind",
    "FanoutOutcome",
    "Message",
    "PromptTemplate",
    "ScriptedBehavior",
    "ScriptedStep",
    "TaskSpec",
    "Verdict",
    "WorkflowResult",
    "WorkflowSpec",
    "load_config",
]

__version__ = "0.1.0"
