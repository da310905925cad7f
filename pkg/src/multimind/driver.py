"""Provider adapters: normalized requests in, provider wire exchanges out.

Each driver instance is bound to one assistant configuration. Network
drivers speak either the OpenAI-compatible chat-completions shape or the
Gemini-compatible generate-content shape; the scripted driver replays a
configured step list without touching the network.
"""

from __future__ import annotations

import asyncio
import json
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum

import httpx

DRIVER_ID_PATTERN = re.compile(r"^[a-z0-9-]{1,64}$")

OPENAI = "openai-compatible"
GEMINI = "gemini-compatible"
SCRIPTED = "scripted"

PROVIDERS = (OPENAI, GEMINI, SCRIPTED)
NETWORK_PROVIDERS = (OPENAI, GEMINI)

RETRY_BACKOFF_S = 0.25


class ConfigError(ValueError):
    """Invalid driver or engine configuration."""


class ErrorKind(str, Enum):
    AUTH = "auth"
    NETWORK = "network"
    TIMEOUT = "timeout"
    RATE_LIMIT = "rate_limit"
    MALFORMED_RESPONSE = "malformed_response"
    CANCELLED = "cancelled"
    SCRIPT_EXHAUSTED = "script_exhausted"


# Kinds worth a second attempt; auth and malformed replies never recover
# on retry, and cancellation is caller-initiated.
_RETRYABLE_KINDS = frozenset(
    {ErrorKind.NETWORK, ErrorKind.TIMEOUT, ErrorKind.RATE_LIMIT}
)


@dataclass(frozen=True)
class DriverError:
    driver_id: str
    kind: ErrorKind
    message: str
    retryable: bool

    def to_dict(self) -> dict:
        return {
            "driver_id": self.driver_id,
            "kind": self.kind.value,
            "message": self.message,
            "retryable": self.retryable,
        }


def driver_error(driver_id: str, kind: ErrorKind, message: str) -> DriverError:
    """Build a DriverError with retryability derived from the kind."""
    return DriverError(
        driver_id=driver_id,
        kind=kind,
        message=message,
        retryable=kind in _RETRYABLE_KINDS,
    )


class DriverCallError(Exception):
    """Internal carrier for a DriverError raised mid-pipeline."""

    def __init__(self, error: DriverError):
        super().__init__(error.message)
        self.error = error


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class AssistantRequest:
    messages: tuple[Message, ...]
    temperature_override: float | None = None
    max_tokens_override: int | None = None
    correlation_id: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must carry at least one message")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown message role: {m.role!r}")
            if not m.content:
                raise ValueError("message content must be non-empty")
        if self.messages[-1].role != "user":
            raise ValueError("last message must have role 'user'")


@dataclass(frozen=True)
class TokenUsage:
    prompt: int
    completion: int


@dataclass(frozen=True)
class AssistantResponse:
    driver_id: str
    content: str
    latency_ms: float
    finish_reason: str  # stop | length | other
    token_usage: TokenUsage | None = None

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")
        if not self.content and self.finish_reason != "other":
            raise ValueError("empty content only allowed with finish_reason=other")

    def to_dict(self) -> dict:
        d = {
            "driver_id": self.driver_id,
            "content": self.content,
            "latency_ms": self.latency_ms,
            "finish_reason": self.finish_reason,
        }
        if self.token_usage is not None:
            d["token_usage"] = {
                "prompt": self.token_usage.prompt,
                "completion": self.token_usage.completion,
            }
        return d


@dataclass(frozen=True)
class ScriptedStep:
    """One scripted outcome: either reply content or an error kind."""

    delay_ms: float = 0.0
    content: str | None = None
    error: ErrorKind | None = None

    def __post_init__(self):
        if self.delay_ms < 0:
            raise ValueError("scripted delay must be non-negative")
        if (self.content is None) == (self.error is None):
            raise ValueError("scripted step needs exactly one of content or error")


@dataclass(frozen=True)
class ScriptedBehavior:
    steps: tuple[ScriptedStep, ...]
    exhaustion: str = "repeat_last"  # repeat_last | error

    def __post_init__(self):
        if not self.steps:
            raise ValueError("scripted behavior needs at least one step")
        if self.exhaustion not in ("repeat_last", "error"):
            raise ValueError(f"unknown exhaustion policy: {self.exhaustion!r}")


@dataclass(frozen=True)
class DriverConfig:
    id: str
    provider: str
    endpoint: str = ""
    model: str = ""
    credential_env: str | None = None
    timeout_ms: float = 30000.0
    temperature: float = 0.2
    max_output_tokens: int = 1024
    script: ScriptedBehavior | None = None

    def __post_init__(self):
        if not DRIVER_ID_PATTERN.match(self.id):
            raise ConfigError(f"driver id {self.id!r} must match [a-z0-9-]{{1,64}}")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider in NETWORK_PROVIDERS:
            if not re.match(r"^https?://", self.endpoint):
                raise ConfigError(
                    f"driver {self.id!r}: endpoint must be an absolute http(s) URL"
                )
        if self.provider == SCRIPTED:
            if self.script is None:
                raise ConfigError(f"scripted driver {self.id!r} requires a script")
            if self.endpoint:
                raise ConfigError(f"scripted driver {self.id!r} takes no endpoint")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout must be positive")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ConfigError("max_output_tokens must be positive")


@dataclass(frozen=True)
class WirePayload:
    method: str
    url: str
    headers: dict[str, str]
    body: bytes


def _resolve_credential(config: DriverConfig) -> str:
    if not config.credential_env:
        raise DriverCallError(
            driver_error(config.id, ErrorKind.AUTH, "no credential_env configured")
        )
    value = os.environ.get(config.credential_env)
    if not value:
        raise DriverCallError(
            driver_error(
                config.id,
                ErrorKind.AUTH,
                f"environment variable {config.credential_env} is not set",
            )
        )
    return value


def _encode_body(body: dict) -> bytes:
    # Sorted keys + fixed separators keep identical inputs byte-identical.
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def format_request(config: DriverConfig, request: AssistantRequest) -> WirePayload:
    """Translate a normalized request into the provider's wire shape.

    The credential travels only in headers (OpenAI-compatible bearer token)
    or in the URL query (Gemini-compatible key parameter), never in the body.
    """
    if config.provider not in NETWORK_PROVIDERS:
        raise ConfigError(f"provider {config.provider!r} has no wire format")

    temperature = (
        request.temperature_override
        if request.temperature_override is not None
        else config.temperature
    )
    max_tokens = (
        request.max_tokens_override
        if request.max_tokens_override is not None
        else config.max_output_tokens
    )
    key = _resolve_credential(config)

    if config.provider == OPENAI:
        body = {
            "model": config.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        return WirePayload(
            method="POST",
            url=config.endpoint,
            headers={
                "authorization": f"Bearer {key}",
                "content-type": "application/json",
            },
            body=_encode_body(body),
        )

    # Gemini-compatible: system text is carried separately, assistant turns
    # use the "model" role.
    system_parts = [m.content for m in request.messages if m.role == "system"]
    contents = [
        {
            "role": "model" if m.role == "assistant" else "user",
            "parts": [{"text": m.content}],
        }
        for m in request.messages
        if m.role != "system"
    ]
    body = {
        "contents": contents,
        "generationConfig": {
            "temperature": temperature,
            "maxOutputTokens": max_tokens,
        },
    }
    if system_parts:
        body["systemInstruction"] = {"parts": [{"text": "\n".join(system_parts)}]}
    sep = "&" if "?" in config.endpoint else "?"
    return WirePayload(
        method="POST",
        url=f"{config.endpoint}{sep}key={key}",
        headers={"content-type": "application/json"},
        body=_encode_body(body),
    )


def _normalized_response(
    config: DriverConfig,
    content: str,
    finish_reason: str,
    elapsed_ms: float,
    usage: TokenUsage | None,
) -> AssistantResponse:
    if not content:
        finish_reason = "other"
    return AssistantResponse(
        driver_id=config.id,
        content=content,
        latency_ms=elapsed_ms,
        finish_reason=finish_reason,
        token_usage=usage,
    )


def _parse_openai_body(config: DriverConfig, data: dict, elapsed_ms: float) -> AssistantResponse:
    choice = data["choices"][0]
    content = choice["message"]["content"] or ""
    reason = {"stop": "stop", "length": "length"}.get(choice.get("finish_reason"), "other")
    usage = None
    if isinstance(data.get("usage"), dict):
        u = data["usage"]
        if "prompt_tokens" in u and "completion_tokens" in u:
            usage = TokenUsage(int(u["prompt_tokens"]), int(u["completion_tokens"]))
    return _normalized_response(config, content, reason, elapsed_ms, usage)


def _parse_gemini_body(config: DriverConfig, data: dict, elapsed_ms: float) -> AssistantResponse:
    candidate = data["candidates"][0]
    parts = candidate["content"]["parts"]
    content = "".join(p.get("text", "") for p in parts)
    reason = {"STOP": "stop", "MAX_TOKENS": "length"}.get(
        candidate.get("finishReason"), "other"
    )
    usage = None
    meta = data.get("usageMetadata")
    if isinstance(meta, dict) and "promptTokenCount" in meta:
        usage = TokenUsage(
            int(meta["promptTokenCount"]), int(meta.get("candidatesTokenCount", 0))
        )
    return _normalized_response(config, content, reason, elapsed_ms, usage)


def parse_response(
    config: DriverConfig, status: int, body: bytes, elapsed_ms: float
) -> AssistantResponse | DriverError:
    """Normalize a raw provider reply. Total: never raises on arbitrary bytes."""
    if status in (401, 403):
        return driver_error(config.id, ErrorKind.AUTH, f"provider returned {status}")
    if status == 429:
        return driver_error(config.id, ErrorKind.RATE_LIMIT, "provider returned 429")
    if status >= 500:
        return driver_error(config.id, ErrorKind.NETWORK, f"provider returned {status}")
    if not 200 <= status < 300:
        return driver_error(
            config.id,
            ErrorKind.MALFORMED_RESPONSE,
            f"unexpected provider status {status}",
        )
    try:
        data = json.loads(body.decode("utf-8"))
        if config.provider == GEMINI:
            return _parse_gemini_body(config, data, elapsed_ms)
        return _parse_openai_body(config, data, elapsed_ms)
    except Exception as exc:  # arbitrary bytes must map to the taxonomy
        return driver_error(
            config.id, ErrorKind.MALFORMED_RESPONSE, f"unparseable reply body: {exc}"
        )


class Driver:
    """Base driver: immutable config, concurrent-safe send."""

    def __init__(self, config: DriverConfig):
        self.config = config

    @property
    def id(self) -> str:
        return self.config.id

    async def send(self, request: AssistantRequest) -> AssistantResponse | DriverError:
        raise NotImplementedError


class HttpDriver(Driver):
    """Driver for the OpenAI- and Gemini-compatible network providers."""

    async def send(self, request: AssistantRequest) -> AssistantResponse | DriverError:
        try:
            payload = format_request(self.config, request)
        except DriverCallError as exc:
            return exc.error

        result = await self._exchange(payload)
        if (
            isinstance(result, DriverError)
            and result.retryable
            and result.kind != ErrorKind.TIMEOUT
        ):
            await asyncio.sleep(RETRY_BACKOFF_S)
            result = await self._exchange(payload)
        return result

    async def _exchange(self, payload: WirePayload) -> AssistantResponse | DriverError:
        start = time.perf_counter()
        timeout = self.config.timeout_ms / 1000.0
        try:
            async with httpx.AsyncClient(timeout=timeout) as client:
                resp = await client.request(
                    payload.method,
                    payload.url,
                    headers=payload.headers,
                    content=payload.body,
                )
        except httpx.TimeoutException:
            return driver_error(
                self.config.id,
                ErrorKind.TIMEOUT,
                f"no reply within {self.config.timeout_ms:.0f} ms",
            )
        except asyncio.CancelledError:
            raise
        except httpx.HTTPError as exc:
            return driver_error(
                self.config.id, ErrorKind.NETWORK, f"transport failure: {type(exc).__name__}"
            )
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        return parse_response(self.config, resp.status_code, resp.content, elapsed_ms)


class ScriptedDriver(Driver):
    """Deterministic test double replaying configured steps in order.

    The step cursor is serialized; delays are slept outside the lock so
    concurrent calls do not queue behind each other. Requests received are
    logged for inspection by tests and workflow audits.
    """

    def __init__(self, config: DriverConfig):
        super().__init__(config)
        self._cursor = 0
        self._lock = asyncio.Lock()
        self.request_log: list[AssistantRequest] = []

    async def send(self, request: AssistantRequest) -> AssistantResponse | DriverError:
        self.request_log.append(request)
        script = self.config.script
        async with self._lock:
            if self._cursor >= len(script.steps):
                if script.exhaustion == "error":
                    return driver_error(
                        self.config.id,
                        ErrorKind.SCRIPT_EXHAUSTED,
                        f"script exhausted after {len(script.steps)} steps",
                    )
                step = script.steps[-1]
            else:
                step = script.steps[self._cursor]
            self._cursor += 1
        if step.delay_ms:
            await asyncio.sleep(step.delay_ms / 1000.0)
        if step.error is not None:
            return driver_error(
                self.config.id, step.error, f"scripted {step.error.value} outcome"
            )
        return AssistantResponse(
            driver_id=self.config.id,
            content=step.content,
            latency_ms=step.delay_ms,
            finish_reason="stop" if step.content else "other",
        )


def build_driver(config: DriverConfig) -> Driver:
    if config.provider == SCRIPTED:
        return ScriptedDriver(config)
    return HttpDriver(config)
