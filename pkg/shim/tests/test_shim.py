"""Shim tests: wire-protocol conformance against a running server.

The server under test is a real uvicorn instance on a free port,
serving tiny random-weight models built offline. The conformance test
runs the primary package's contract fixtures unchanged.
"""

from __future__ import annotations

import json
import socket
import threading
import time

import pytest
import requests
import uvicorn

from qgforge_shim.config import ConfigError, ShimConfig, load_config
from qgforge_shim.models import AN_TOKEN, QU_TOKEN, ModelLoadError
from qgforge_shim.service import create_app, ensure_sentinel_format

qgforge_genclient = pytest.importorskip(
    "qgforge.genclient", reason="primary package needed for the contract fixtures"
)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def shim_config() -> ShimConfig:
    return ShimConfig(
        generation_model="tiny-random:1",
        respondents={"alpha": "tiny-random:2", "beta": "tiny-random:3"},
        max_new_tokens=24,
        min_new_tokens=6,
    )


@pytest.fixture(scope="module")
def shim_server(shim_config):
    app = create_app(shim_config)
    port = _free_port()
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    for _ in range(100):
        try:
            if requests.get(f"{base}/health", timeout=1).status_code == 200:
                break
        except requests.RequestException:
            time.sleep(0.1)
    else:
        raise RuntimeError("shim server did not come up")
    yield base
    server.should_exit = True
    thread.join(timeout=5)


class TestContractConformance:
    def test_primary_contract_fixtures_pass_unchanged(self, shim_server):
        failures = qgforge_genclient.verify_wire_contract(shim_server)
        assert failures == []

    def test_contract_also_holds_per_respondent_route(self, shim_server):
        failures = qgforge_genclient.verify_wire_contract(
            f"{shim_server}/respondents/beta", check_generate=False
        )
        assert failures == []


class TestGenerateRoute:
    def test_returns_parseable_raw(self, shim_server):
        reply = requests.post(
            f"{shim_server}/generate",
            json={
                "prompt": "Generate a easy question-answer pair considering the "
                "following text: Once there were a hare and a turtle.",
                "sampling": {"top_k": 50, "top_p": 0.9, "temperature": 1.2},
            },
            timeout=30,
        )
        assert reply.status_code == 200
        raw = reply.json()["raw"]
        question, answer = qgforge_genclient.parse_generated(raw)
        assert question and answer

    @pytest.mark.parametrize(
        "sampling",
        [
            {"top_k": 0, "top_p": 0.9, "temperature": 1.0},
            {"top_k": 50, "top_p": 1.5, "temperature": 1.0},
            {"top_k": 50, "top_p": 0.9, "temperature": 0.0},
        ],
    )
    def test_bad_sampling_is_4xx(self, shim_server, sampling):
        reply = requests.post(
            f"{shim_server}/generate",
            json={"prompt": "x", "sampling": sampling},
            timeout=30,
        )
        assert 400 <= reply.status_code < 500
        assert "error" in reply.json()

    def test_malformed_body_is_4xx(self, shim_server):
        reply = requests.post(f"{shim_server}/generate", json={"nonsense": 1}, timeout=30)
        assert 400 <= reply.status_code < 500
        assert "error" in reply.json()


class TestAnswerRoute:
    CONTEXT = "Once there were a hare and a turtle. The hare was proud of his speed."

    def test_answer_is_a_context_span(self, shim_server):
        reply = requests.post(
            f"{shim_server}/answer",
            json={"context": self.CONTEXT, "question": "Who raced the turtle?"},
            timeout=30,
        )
        assert reply.status_code == 200
        answer = reply.json()["answer"]
        assert answer
        assert answer in self.CONTEXT

    def test_respondents_answer_independently(self, shim_server):
        replies = {}
        for name in ("alpha", "beta"):
            reply = requests.post(
                f"{shim_server}/respondents/{name}/answer",
                json={"context": self.CONTEXT, "question": "Who won?"},
                timeout=30,
            )
            assert reply.status_code == 200
            replies[name] = reply.json()["answer"]
        assert all(answer in self.CONTEXT for answer in replies.values())

    def test_unknown_respondent_404(self, shim_server):
        reply = requests.post(
            f"{shim_server}/respondents/ghost/answer",
            json={"context": "x y", "question": "q?"},
            timeout=30,
        )
        assert reply.status_code == 404
        assert "error" in reply.json()

    def test_missing_field_is_4xx(self, shim_server):
        reply = requests.post(f"{shim_server}/answer", json={"context": "x"}, timeout=30)
        assert 400 <= reply.status_code < 500
        assert "error" in reply.json()


class TestHealth:
    def test_health_lists_served_models(self, shim_server):
        body = requests.get(f"{shim_server}/health", timeout=10).json()
        assert body["status"] == "ok"
        assert body["generation"] is True
        assert body["respondents"] == ["alpha", "beta"]


class TestFormatGuard:
    def test_passthrough_when_sentinels_present(self):
        raw = f"{QU_TOKEN} Who ran? {AN_TOKEN} The hare"
        assert ensure_sentinel_format(raw) == raw

    def test_wraps_plain_text(self):
        wrapped = ensure_sentinel_format("the hare ran over the road")
        question, answer = qgforge_genclient.parse_generated(wrapped)
        assert question == "the hare ran?"
        assert answer == "over the road"

    def test_degenerate_output_rejected(self):
        with pytest.raises(ValueError, match="no usable text"):
            ensure_sentinel_format("word")


class TestConfig:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "shim.json"
        path.write_text(
            json.dumps(
                {
                    "generation_model": "tiny-random:5",
                    "respondents": {"r1": "tiny-random:6"},
                    "port": 9000,
                }
            )
        )
        config = load_config(path)
        assert config.port == 9000
        assert config.respondents == {"r1": "tiny-random:6"}
        assert config.format_guard is True

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "shim.json"
        path.write_text(json.dumps({"model": "x"}))
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(path)

    def test_empty_config_rejected(self):
        with pytest.raises(ConfigError, match="serves nothing"):
            ShimConfig()


class TestModelLoadFailure:
    def test_startup_error_for_missing_model(self):
        config = ShimConfig(respondents={"r": "does-not-exist/nowhere"})
        with pytest.raises(ModelLoadError, match="cannot load"):
            create_app(config)
