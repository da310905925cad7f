"""Process-wide driver registry with the two fan-out primitives.

`call_back` races the targeted drivers and keeps the first successful
response, cancelling the rest; `fetch_all` waits for one outcome per
target. Result maps always iterate in registration order.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass
from typing import Sequence

from .driver import (
    AssistantRequest,
    AssistantResponse,
    Driver,
    DriverConfig,
    DriverError,
    ErrorKind,
    build_driver,
    driver_error,
)

# Target selector: an explicit id list, or ANY for every registered driver.
ANY = None
TargetSelector = Sequence[str] | None


class RegistryError(ValueError):
    """Registration or lookup failure."""


@dataclass
class ActivitySnapshot:
    requests: int = 0
    successes: int = 0
    errors: int = 0
    latency_ms_total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "successes": self.successes,
            "errors": self.errors,
            "latency_ms_total": self.latency_ms_total,
        }


@dataclass
class FanoutOutcome:
    mode: str  # first | all
    results: dict[str, AssistantResponse | DriverError]
    winner: str | None = None

    @property
    def winner_response(self) -> AssistantResponse | None:
        if self.winner is None:
            return None
        entry = self.results[self.winner]
        assert isinstance(entry, AssistantResponse)
        return entry

    def responses(self) -> dict[str, AssistantResponse]:
        return {
            k: v for k, v in self.results.items() if isinstance(v, AssistantResponse)
        }

    def errors(self) -> dict[str, DriverError]:
        return {k: v for k, v in self.results.items() if isinstance(v, DriverError)}

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "winner": self.winner,
            "results": {
                k: {"response": v.to_dict()}
                if isinstance(v, AssistantResponse)
                else {"error": v.to_dict()}
                for k, v in self.results.items()
            },
        }


class DriverRegistry:
    """Singleton registry; one instance per engine process.

    Registration happens during startup/config reload only; fan-out calls
    may run concurrently and never serialize the underlying driver calls.
    """

    _instance: "DriverRegistry | None" = None

    def __init__(self):
        if DriverRegistry._instance is not None:
            raise RegistryError(
                "a DriverRegistry already exists; use DriverRegistry.instance()"
            )
        self._drivers: dict[str, Driver] = {}
        self._counters: dict[str, ActivitySnapshot] = {}
        DriverRegistry._instance = self

    @classmethod
    def instance(cls) -> "DriverRegistry":
        if cls._instance is None:
            cls._instance = cls.__new__(cls)
            cls._instance._drivers = {}
            cls._instance._counters = {}
        return cls._instance

    @classmethod
    def reset(cls) -> None:
        cls._instance = None

    def register(self, config: DriverConfig) -> str:
        if config.id in self._drivers:
            raise RegistryError(f"driver id {config.id!r} is already registered")
        self._drivers[config.id] = build_driver(config)
        self._counters[config.id] = ActivitySnapshot()
        return config.id

    def lookup(self, driver_id: str) -> Driver:
        try:
            return self._drivers[driver_id]
        except KeyError:
            raise RegistryError(f"unknown driver id {driver_id!r}") from None

    def list_ids(self) -> list[str]:
        return list(self._drivers)

    def configs(self) -> list[DriverConfig]:
        return [d.config for d in self._drivers.values()]

    def activity(self, driver_id: str) -> ActivitySnapshot:
        if driver_id not in self._counters:
            raise RegistryError(f"unknown driver id {driver_id!r}")
        c = self._counters[driver_id]
        return ActivitySnapshot(c.requests, c.successes, c.errors, c.latency_ms_total)

    def resolve(self, targets: TargetSelector) -> list[str]:
        if targets is ANY:
            ids = self.list_ids()
        else:
            ids = list(targets)
            if not ids:
                raise RegistryError("explicit target list must be non-empty")
            for t in ids:
                if t not in self._drivers:
                    raise RegistryError(f"unknown driver id {t!r}")
        if not ids:
            raise RegistryError("no drivers registered")
        return ids

    async def _call(
        self, driver_id: str, request: AssistantRequest
    ) -> AssistantResponse | DriverError:
        counters = self._counters[driver_id]
        counters.requests += 1
        try:
            result = await self._drivers[driver_id].send(request)
        except asyncio.CancelledError:
            counters.errors += 1
            raise
        if isinstance(result, AssistantResponse):
            counters.successes += 1
            counters.latency_ms_total += result.latency_ms
        else:
            counters.errors += 1
        return result

    async def call_back(
        self, request: AssistantRequest, targets: TargetSelector = ANY
    ) -> FanoutOutcome:
        """Race the targets; the first successful response wins.

        Errors never win. Outstanding calls are cancelled best-effort once a
        winner exists and surface as cancelled errors. If every target errs,
        the outcome has no winner and carries all errors.
        """
        ids = self.resolve(targets)
        tasks = {
            driver_id: asyncio.create_task(self._call(driver_id, request))
            for driver_id in ids
        }
        by_task = {task: driver_id for driver_id, task in tasks.items()}
        collected: dict[str, AssistantResponse | DriverError] = {}
        winner: str | None = None
        pending = set(tasks.values())
        while pending and winner is None:
            done, pending = await asyncio.wait(
                pending, return_when=asyncio.FIRST_COMPLETED
            )
            for task in done:
                result = task.result()
                driver_id = by_task[task]
                collected[driver_id] = result
                if winner is None and isinstance(result, AssistantResponse):
                    winner = driver_id
        for task in pending:
            task.cancel()
        for task in pending:
            driver_id = by_task[task]
            try:
                collected[driver_id] = await task
            except asyncio.CancelledError:
                collected[driver_id] = driver_error(
                    driver_id, ErrorKind.CANCELLED, "lost the first-response race"
                )
        return FanoutOutcome(
            mode="first",
            results={driver_id: collected[driver_id] for driver_id in ids},
            winner=winner,
        )

    async def fetch_all(
        self, request: AssistantRequest, targets: TargetSelector = ANY
    ) -> FanoutOutcome:
        """Invoke every target concurrently and wait for all outcomes."""
        ids = self.resolve(targets)
        results = await asyncio.gather(*(self._call(i, request) for i in ids))
        return FanoutOutcome(
            mode="all", results=dict(zip(ids, results)), winner=None
        )
