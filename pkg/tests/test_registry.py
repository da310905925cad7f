import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multimind.driver import AssistantRequest, AssistantResponse, ErrorKind, Message
from multimind.registry import ANY, DriverRegistry, RegistryError

from conftest import run, scripted


def hi():
    return AssistantRequest(messages=(Message("user", "hi"),))


class TestRegistration:
    def test_register_and_lookup(self, registry):
        registry.register(scripted("gen", (0, "x")))
        assert registry.lookup("gen").config.id == "gen"

    def test_duplicate_id_rejected(self, registry):
        registry.register(scripted("gen", (0, "x")))
        with pytest.raises(RegistryError, match="gen"):
            registry.register(scripted("gen", (0, "y")))

    def test_insertion_order_preserved(self, registry):
        for driver_id in ("a", "b", "c"):
            registry.register(scripted(driver_id, (0, driver_id)))
        assert registry.list_ids() == ["a", "b", "c"]

    def test_singleton_identity(self):
        first = DriverRegistry.instance()
        assert DriverRegistry.instance() is first

    def test_second_construction_rejected(self):
        DriverRegistry.instance()
        with pytest.raises(RegistryError):
            DriverRegistry()

    def test_unknown_target_rejected(self, registry):
        registry.register(scripted("a", (0, "x")))
        with pytest.raises(RegistryError):
            registry.resolve(["a", "ghost"])

    def test_empty_explicit_targets_rejected(self, registry):
        registry.register(scripted("a", (0, "x")))
        with pytest.raises(RegistryError):
            registry.resolve([])


class TestCallBack:
    def test_fastest_success_wins(self, registry):
        registry.register(scripted("a", (50, "alpha")))
        registry.register(scripted("b", (200, "beta")))
        outcome = run(registry.call_back(hi()))
        assert outcome.winner == "a"
        assert outcome.winner_response.content == "alpha"
        assert outcome.results["b"].kind == ErrorKind.CANCELLED

    def test_errors_are_skipped(self, registry):
        registry.register(scripted("a", (10, ErrorKind.NETWORK)))
        registry.register(scripted("b", (100, "beta")))
        outcome = run(registry.call_back(hi()))
        assert outcome.winner == "b"
        assert outcome.results["a"].kind == ErrorKind.NETWORK

    def test_all_errors_no_winner(self, registry):
        registry.register(scripted("a", (0, ErrorKind.NETWORK)))
        registry.register(scripted("b", (0, ErrorKind.RATE_LIMIT)))
        outcome = run(registry.call_back(hi()))
        assert outcome.winner is None
        assert len(outcome.errors()) == 2

    def test_does_not_wait_for_laggard(self, registry):
        registry.register(scripted("fast", (20, "quick")))
        registry.register(scripted("slow", (800, "late")))
        start = time.perf_counter()
        outcome = run(registry.call_back(hi()))
        wall_ms = (time.perf_counter() - start) * 1000
        assert outcome.winner == "fast"
        assert wall_ms < 400


class TestFetchAll:
    def test_all_entries_in_registration_order(self, registry):
        registry.register(scripted("a", (60, "alpha")))
        registry.register(scripted("b", (10, "beta")))
        outcome = run(registry.fetch_all(hi()))
        assert list(outcome.results) == ["a", "b"]
        assert outcome.results["a"].content == "alpha"
        assert outcome.results["b"].content == "beta"

    def test_concurrent_not_serial(self, registry):
        registry.register(scripted("a", (200, "alpha")))
        registry.register(scripted("b", (50, "beta")))
        start = time.perf_counter()
        run(registry.fetch_all(hi()))
        wall_ms = (time.perf_counter() - start) * 1000
        assert wall_ms < 300  # max, not sum

    def test_error_and_response_both_present(self, registry):
        registry.register(scripted("a", (0, ErrorKind.NETWORK)))
        registry.register(scripted("b", (0, "beta")))
        outcome = run(registry.fetch_all(hi()))
        assert len(outcome.errors()) == 1
        assert len(outcome.responses()) == 1

    def test_single_target_degenerate(self, registry):
        registry.register(scripted("a", (0, "alpha")))
        registry.register(scripted("b", (0, "beta")))
        outcome = run(registry.fetch_all(hi(), targets=["a"]))
        assert list(outcome.results) == ["a"]


class TestActivity:
    def test_fresh_counters_zero(self, registry):
        registry.register(scripted("a", (0, "x")))
        snapshot = registry.activity("a")
        assert (snapshot.requests, snapshot.successes, snapshot.errors) == (0, 0, 0)

    def test_call_back_counts_winner_and_cancelled(self, registry):
        registry.register(scripted("win", (10, "x")))
        registry.register(scripted("lose", (500, "y")))
        run(registry.call_back(hi()))
        assert registry.activity("win").successes == 1
        assert registry.activity("lose").errors >= 1

    def test_fetch_all_counts_one_request_each(self, registry):
        for driver_id in ("a", "b", "c"):
            registry.register(scripted(driver_id, (0, driver_id)))
        run(registry.fetch_all(hi()))
        for driver_id in ("a", "b", "c"):
            assert registry.activity(driver_id).requests == 1

    def test_unknown_id_rejected(self, registry):
        with pytest.raises(RegistryError):
            registry.activity("ghost")


class TestFanoutProperties:
    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(
            st.tuples(st.integers(0, 30), st.booleans()), min_size=1, max_size=5
        )
    )
    def test_fetch_all_completeness(self, outcomes):
        DriverRegistry.reset()
        registry = DriverRegistry.instance()
        for i, (delay, ok) in enumerate(outcomes):
            payload = f"r{i}" if ok else ErrorKind.NETWORK
            registry.register(scripted(f"d{i}", (delay, payload)))
        outcome = run(registry.fetch_all(hi()))
        assert len(outcome.results) == len(outcomes)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=2, max_size=5, unique=True))
    def test_call_back_winner_is_minimum_delay(self, slots):
        # Slots spaced 40 ms apart so scheduling jitter cannot reorder them.
        delays = [slot * 40 for slot in slots]
        DriverRegistry.reset()
        registry = DriverRegistry.instance()
        for i, delay in enumerate(delays):
            registry.register(scripted(f"d{i}", (delay, f"r{i}")))
        outcome = run(registry.call_back(hi()))
        assert outcome.winner == f"d{delays.index(min(delays))}"
