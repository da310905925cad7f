import asyncio

import pytest

from multimind.driver import (
    DriverConfig,
    ErrorKind,
    ScriptedBehavior,
    ScriptedStep,
)
from multimind.registry import DriverRegistry


@pytest.fixture(autouse=True)
def registry():
    """Fresh process singleton per test."""
    DriverRegistry.reset()
    yield DriverRegistry.instance()
    DriverRegistry.reset()


def run(coro):
    return asyncio.run(coro)


def scripted(driver_id, *steps, exhaustion="repeat_last"):
    """Build a scripted DriverConfig from (delay_ms, outcome) pairs where the
    outcome is reply text or an ErrorKind."""
    built = []
    for delay_ms, outcome in steps:
        if isinstance(outcome, ErrorKind):
            built.append(ScriptedStep(delay_ms=delay_ms, error=outcome))
        else:
            built.append(ScriptedStep(delay_ms=delay_ms, content=outcome))
    return DriverConfig(
        id=driver_id,
        provider="scripted",
        model="scripted",
        script=ScriptedBehavior(steps=tuple(built), exhaustion=exhaustion),
    )
