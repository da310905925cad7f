import json
import shutil
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from multimind.api import create_app
from multimind.config import load_config, parse_config
from multimind.driver import ConfigError
from multimind.engine import (
    CommentActionRequest,
    Engine,
    GatewayError,
    UnknownIdError,
    insert_comment,
)
from multimind.registry import DriverRegistry
from multimind.tasks import CodeSelection

from conftest import run

FIXTURES = Path(__file__).parent / "fixtures"

GOOD_COMMENT = "/**\n * Adds two ints and records the result.\n */"


def scripted_driver_json(driver_id, steps, exhaustion="repeat_last"):
    return {
        "id": driver_id,
        "provider": "scripted",
        "model": "scripted",
        "script": {"steps": steps, "exhaustion": exhaustion},
    }


def engine_config_json(tmp_path, drivers, tasks=None, workflows=None, **extra):
    data = {"drivers": drivers}
    if tasks:
        data["tasks"] = tasks
    if workflows:
        data["workflows"] = workflows
    data.update(extra)
    path = tmp_path / "multimind.json"
    path.write_text(json.dumps(data))
    return path


def comment_engine(tmp_path, verdicts=("PASS",), comment=GOOD_COMMENT):
    """Engine with a scripted generator/verifier pair for the comment flow."""
    gen_steps = [{"delay_ms": 0, "content": comment}] * max(len(verdicts), 1)
    ver_steps = [
        {"delay_ms": 0, "content": f"VERDICT: {v}" + ("\nweak" if v == "FAIL" else "")}
        for v in verdicts
    ]
    path = engine_config_json(
        tmp_path,
        drivers=[
            scripted_driver_json("gen", gen_steps),
            scripted_driver_json("ver", ver_steps),
        ],
        tasks=[
            {"id": "comment", "targets": ["gen"]},
            {"id": "doc_quality", "targets": ["ver"]},
        ],
    )
    return Engine(load_config(path))


def java_selection(start=13, end=17):
    path = FIXTURES / "Calculator.java"
    lines = path.read_text().splitlines()
    return CodeSelection(
        file_path=str(path),
        language_id="java",
        start_line=start,
        end_line=end,
        text="\n".join(lines[start - 1 : end]),
    )


class TestLoadConfig:
    def test_minimal_scripted_config(self, tmp_path):
        path = engine_config_json(
            tmp_path, [scripted_driver_json("s", [{"content": "x"}])]
        )
        config = load_config(path)
        assert len(config.drivers) == 1
        assert config.listen_port == 7640

    def test_workflow_unknown_task_named(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [scripted_driver_json("s", [{"content": "x"}])],
            workflows=[{"id": "w", "strategy": "sequential", "steps": ["nope"]}],
        )
        with pytest.raises(ConfigError, match="nope"):
            load_config(path)

    def test_privileged_port_rejected(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [scripted_driver_json("s", [{"content": "x"}])],
            listen_port=80,
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_duplicate_driver_ids_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(
                {
                    "drivers": [
                        scripted_driver_json("s", [{"content": "x"}]),
                        scripted_driver_json("s", [{"content": "y"}]),
                    ]
                }
            )

    def test_parse_error_carries_line_info(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "drivers": [}\n}')
        with pytest.raises(ConfigError, match="line 2"):
            load_config(path)

    def test_task_targeting_unknown_driver(self):
        with pytest.raises(ConfigError, match="ghost"):
            parse_config(
                {
                    "drivers": [scripted_driver_json("s", [{"content": "x"}])],
                    "tasks": [{"id": "comment", "targets": ["ghost"]}],
                }
            )


class TestInsertComment:
    def test_indentation_matches_target_line(self):
        original = "class A {\n    int f() {\n        return 0;\n    }\n}\n"
        annotated = insert_comment(original, "/** Doc. */", 2)
        assert annotated.splitlines()[1] == "    /** Doc. */"

    def test_non_inserted_lines_unchanged(self):
        original = (FIXTURES / "Calculator.java").read_text()
        annotated = insert_comment(original, GOOD_COMMENT, 13)
        original_lines = original.splitlines()
        annotated_lines = annotated.splitlines()
        inserted = len(GOOD_COMMENT.splitlines())
        assert annotated_lines[:12] == original_lines[:12]
        assert annotated_lines[12 + inserted :] == original_lines[12:]

    def test_out_of_range_rejected(self):
        with pytest.raises(GatewayError):
            insert_comment("one\n", "/** x */", 5)


class TestCommentAction:
    def test_accepted_with_apply(self, tmp_path):
        engine = comment_engine(tmp_path, verdicts=("PASS",))
        result = run(
            engine.comment_action(
                CommentActionRequest(selection=java_selection(), apply=True)
            )
        )
        assert result.status == "accepted"
        assert result.comment == GOOD_COMMENT
        assert result.annotated_file is not None
        assert GOOD_COMMENT.splitlines()[0].strip() in result.annotated_file
        # original lines intact
        original = (FIXTURES / "Calculator.java").read_text()
        for line in original.splitlines():
            assert line in result.annotated_file

    def test_needs_manual_review_returns_no_file(self, tmp_path):
        engine = comment_engine(tmp_path, verdicts=("FAIL", "FAIL", "FAIL"))
        result = run(
            engine.comment_action(
                CommentActionRequest(selection=java_selection(), apply=True)
            )
        )
        assert result.status == "needs_manual_review"
        assert result.annotated_file is None
        assert result.feedback == "weak"
        assert result.iterations == 3

    def test_selection_out_of_range_before_any_driver_call(self, tmp_path):
        engine = comment_engine(tmp_path)
        selection = CodeSelection(
            file_path=str(FIXTURES / "Calculator.java"),
            language_id="java",
            start_line=100,
            end_line=200,
            text="nothing",
        )
        with pytest.raises(GatewayError):
            run(engine.comment_action(CommentActionRequest(selection=selection)))
        assert engine.registry.activity("gen").requests == 0


class TestChatSessions:
    def make_engine(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [
                scripted_driver_json("a", [{"content": f"a{i}"} for i in range(9)]),
                scripted_driver_json("b", [{"content": f"b{i}"} for i in range(9)]),
            ],
        )
        return Engine(load_config(path))

    def test_post_and_select(self, tmp_path):
        engine = self.make_engine(tmp_path)
        session_id = engine.create_session()
        turn_index, outcome = run(engine.post_message(session_id, "hello"))
        assert turn_index == 0
        assert set(outcome.results) == {"a", "b"}
        engine.select_response(session_id, 0, "b")
        assert engine.get_session(session_id).turns[0].selected_driver == "b"

    def test_history_contains_only_selected(self, tmp_path):
        engine = self.make_engine(tmp_path)
        session_id = engine.create_session()
        run(engine.post_message(session_id, "one"))
        engine.select_response(session_id, 0, "a")
        run(engine.post_message(session_id, "two"))
        sent = engine.registry.lookup("a").request_log[1].messages
        assert [(m.role, m.content) for m in sent] == [
            ("user", "one"),
            ("assistant", "a0"),
            ("user", "two"),
        ]

    def test_selecting_error_candidate_rejected(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [
                scripted_driver_json("a", [{"content": "ok"}]),
                scripted_driver_json("b", [{"error": "network", "delay_ms": 0}]),
            ],
        )
        engine = Engine(load_config(path))
        session_id = engine.create_session()
        run(engine.post_message(session_id, "hi"))
        with pytest.raises(GatewayError):
            engine.select_response(session_id, 0, "b")

    def test_idempotent_selection(self, tmp_path):
        engine = self.make_engine(tmp_path)
        session_id = engine.create_session()
        run(engine.post_message(session_id, "hi"))
        engine.select_response(session_id, 0, "a")
        before = engine.get_session(session_id).to_dict()
        engine.select_response(session_id, 0, "a")
        assert engine.get_session(session_id).to_dict() == before

    def test_unknown_session(self, tmp_path):
        engine = self.make_engine(tmp_path)
        with pytest.raises(UnknownIdError):
            engine.get_session("ghost")


class TestHttpApi:
    @pytest.fixture
    def client(self, tmp_path):
        engine = comment_engine(tmp_path)
        return TestClient(create_app(engine), raise_server_exceptions=False)

    def test_health(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_drivers_listed_without_credentials(self, client, monkeypatch):
        monkeypatch.setenv("SENTINEL_ENV", "sk-super-secret")
        response = client.get("/v1/drivers")
        assert response.status_code == 200
        assert "sk-super-secret" not in response.text
        assert {d["id"] for d in response.json()["drivers"]} == {"gen", "ver"}

    def test_activity_endpoint(self, client):
        response = client.get("/v1/drivers/gen/activity")
        assert response.status_code == 200
        assert response.json()["requests"] == 0

    def test_unknown_driver_404(self, client):
        response = client.get("/v1/drivers/ghost/activity")
        assert response.status_code == 404
        assert response.json()["kind"] == "not_found"

    def test_comment_action_end_to_end(self, client):
        selection = java_selection()
        response = client.post(
            "/v1/actions/comment",
            json={
                "selection": {
                    "file_path": selection.file_path,
                    "language_id": selection.language_id,
                    "start_line": selection.start_line,
                    "end_line": selection.end_line,
                    "text": selection.text,
                },
                "apply": False,
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "accepted"
        assert body["comment"] == GOOD_COMMENT

    def test_malformed_json_structured_error(self, client):
        response = client.post(
            "/v1/actions/comment",
            content=b"{not json",
            headers={"content-type": "application/json"},
        )
        assert response.status_code == 422
        body = response.json()
        assert set(body) == {"kind", "message"}

    def test_chat_flow(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [
                scripted_driver_json("a", [{"content": "alpha"}]),
                scripted_driver_json("b", [{"content": "beta"}]),
            ],
        )
        client = TestClient(create_app(Engine(load_config(path))))
        session_id = client.post("/v1/chat/sessions").json()["session_id"]
        turn = client.post(
            f"/v1/chat/sessions/{session_id}/messages", json={"text": "hi"}
        ).json()
        assert turn["turn_index"] == 0
        assert set(turn["candidates"]["results"]) == {"a", "b"}
        session = client.post(
            f"/v1/chat/sessions/{session_id}/select",
            json={"turn_index": 0, "driver_id": "a"},
        ).json()
        assert session["turns"][0]["selected_driver"] == "a"
        fetched = client.get(f"/v1/chat/sessions/{session_id}").json()
        assert fetched == session

    def test_auth_token_enforced(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [scripted_driver_json("a", [{"content": "x"}])],
            auth_token="topsecret",
        )
        client = TestClient(create_app(Engine(load_config(path))))
        assert client.get("/v1/health").status_code == 401
        ok = client.get(
            "/v1/health", headers={"authorization": "Bearer topsecret"}
        )
        assert ok.status_code == 200

    def test_workflow_run_endpoint(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [scripted_driver_json("gen", [{"content": "```java\nint f(){}\n```"}])],
            workflows=[{"id": "w", "strategy": "sequential", "steps": ["generate"]}],
        )
        client = TestClient(create_app(Engine(load_config(path))))
        response = client.post("/v1/workflows/w/run", json={"input": "a function"})
        assert response.status_code == 200
        assert response.json()["status"] == "accepted"

    def test_journal_written(self, tmp_path):
        path = engine_config_json(
            tmp_path,
            [scripted_driver_json("a", [{"content": "x"}])],
            journal_path="journal.jsonl",
        )
        engine = Engine(load_config(path))
        session_id = engine.create_session()
        run(engine.post_message(session_id, "hi"))
        engine.select_response(session_id, 0, "a")
        records = [
            json.loads(line)
            for line in (tmp_path / "journal.jsonl").read_text().splitlines()
        ]
        assert [r["event"] for r in records] == ["session_created", "turn", "select"]
