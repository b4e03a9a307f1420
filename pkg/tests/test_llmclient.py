import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from molcorr import transport
from molcorr.ingest import CLASSIFICATION, REGRESSION
from molcorr.llmclient import (
    AuditLog,
    LlmError,
    MockEcho,
    MockNoisyOracle,
    MockPerfectOracle,
    MockScripted,
    QueryMeta,
    RemoteChatConfig,
    ScriptedResponseMissing,
    complete,
)
from molcorr.prompt import PromptBundle, PromptKind

PROMPT = PromptBundle(kind=PromptKind.CORRECTOR, text="stub prompt", token_estimate=3)


class TestMocks:
    def test_echo_regression(self):
        ex = complete(MockEcho(), PROMPT, QueryMeta(id="a", primary=2.5), REGRESSION)
        assert "Prediction: 2.5000" in ex.response_text
        assert ex.attempts == 1

    def test_echo_classification(self):
        ex = complete(MockEcho(), PROMPT, QueryMeta(id="a", primary=0.8), CLASSIFICATION)
        assert "Prediction: 1" in ex.response_text
        assert "Probability: 0.8000" in ex.response_text

    def test_perfect_oracle_classification(self):
        ex = complete(
            MockPerfectOracle(), PROMPT,
            QueryMeta(id="a", primary=0.2, true_label=1.0), CLASSIFICATION,
        )
        assert "Prediction: 1" in ex.response_text
        assert "Probability: 1.0000" in ex.response_text

    def test_perfect_oracle_needs_truth(self):
        with pytest.raises(LlmError):
            complete(MockPerfectOracle(), PROMPT, QueryMeta(id="a", primary=0.2), REGRESSION)

    def test_noisy_p_zero_equals_echo(self):
        meta = QueryMeta(id="x9", primary=1.25, true_label=3.5)
        noisy = complete(MockNoisyOracle(p=0.0, seed=4), PROMPT, meta, REGRESSION)
        echo = complete(MockEcho(), PROMPT, meta, REGRESSION)
        assert noisy.response_text == echo.response_text

    def test_noisy_p_one_equals_oracle(self):
        meta = QueryMeta(id="x9", primary=1.25, true_label=3.5)
        noisy = complete(MockNoisyOracle(p=1.0, seed=4), PROMPT, meta, REGRESSION)
        oracle = complete(MockPerfectOracle(), PROMPT, meta, REGRESSION)
        assert noisy.response_text == oracle.response_text

    def test_mock_determinism_by_id(self):
        cfg = MockNoisyOracle(p=0.5, seed=99)
        meta = QueryMeta(id="mol-7", primary=1.0, true_label=2.0)
        first = complete(cfg, PROMPT, meta, REGRESSION).response_text
        for _ in range(5):
            assert complete(cfg, PROMPT, meta, REGRESSION).response_text == first

    def test_noisy_empirical_rate(self):
        cfg = MockNoisyOracle(p=0.3, seed=2024)
        hits = 0
        n = 10000
        for i in range(n):
            meta = QueryMeta(id=f"q{i}", primary=0.0, true_label=1.0)
            ex = complete(cfg, PROMPT, meta, REGRESSION)
            if "Prediction: 1.0000" in ex.response_text:
                hits += 1
        assert abs(hits / n - 0.3) < 0.02

    def test_scripted(self):
        cfg = MockScripted(responses={"a": "Prediction: 9.0"})
        ex = complete(cfg, PROMPT, QueryMeta(id="a"), REGRESSION)
        assert ex.response_text == "Prediction: 9.0"
        with pytest.raises(ScriptedResponseMissing):
            complete(cfg, PROMPT, QueryMeta(id="b"), REGRESSION)

    def test_invalid_p(self):
        with pytest.raises(LlmError):
            MockNoisyOracle(p=1.5)


class TestRetryPolicy:
    def test_backoff_schedule(self):
        assert transport.backoff_delays() == [0.5, 1.0, 2.0, 4.0]

    def test_retries_exhausted_after_five_attempts(self):
        sleeps = []
        calls = []

        class Resp:
            status_code = 503
            text = "unavailable"

        def fake_post(url, **kwargs):
            calls.append(url)
            return Resp()

        with pytest.raises(transport.TransportError) as err:
            transport.post_json(
                "http://example.invalid/chat", {},
                sleep=sleeps.append, post=fake_post,
            )
        assert len(calls) == 5
        assert err.value.attempts == 5
        assert sleeps == [0.5, 1.0, 2.0, 4.0]

    def test_recovers_midway(self):
        outcomes = [503, 429, 200]

        class Resp:
            def __init__(self, status):
                self.status_code = status
                self.text = ""

            def json(self):
                return {"ok": True}

        def fake_post(url, **kwargs):
            return Resp(outcomes.pop(0))

        body, attempts = transport.post_json(
            "http://example.invalid/chat", {}, sleep=lambda s: None, post=fake_post
        )
        assert body == {"ok": True}
        assert attempts == 3

    def test_4xx_fails_immediately(self):
        class Resp:
            status_code = 400
            text = "bad request"

        with pytest.raises(transport.TransportError) as err:
            transport.post_json(
                "http://example.invalid/chat", {},
                sleep=lambda s: None, post=lambda *a, **k: Resp(),
            )
        assert err.value.attempts == 1


class _StubChatHandler(BaseHTTPRequestHandler):
    seen_headers = []
    reply = "Prediction: 4.2000"

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen_headers.append(dict(self.headers))
        type(self).last_body = body
        payload = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": type(self).reply}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_chat_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubChatHandler.seen_headers = []
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()


class TestRemoteChat:
    def test_wire_shape_and_response(self, stub_chat_server, monkeypatch):
        monkeypatch.setenv("STUB_LLM_KEY", "sk-super-secret-value")
        cfg = RemoteChatConfig(
            endpoint=stub_chat_server, model="stub-model", key_env="STUB_LLM_KEY"
        )
        ex = complete(cfg, PROMPT, QueryMeta(id="a", primary=1.0), REGRESSION)
        assert ex.response_text == "Prediction: 4.2000"
        body = _StubChatHandler.last_body
        assert body["model"] == "stub-model"
        assert body["messages"] == [{"role": "user", "content": "stub prompt"}]
        assert body["temperature"] == 0.0

    def test_key_sent_as_bearer_never_logged(self, stub_chat_server, monkeypatch, tmp_path):
        monkeypatch.setenv("STUB_LLM_KEY", "sk-super-secret-value")
        cfg = RemoteChatConfig(
            endpoint=stub_chat_server, model="stub-model", key_env="STUB_LLM_KEY"
        )
        ex = complete(cfg, PROMPT, QueryMeta(id="a", primary=1.0), REGRESSION)
        assert _StubChatHandler.seen_headers[-1]["Authorization"] == (
            "Bearer sk-super-secret-value"
        )
        assert "sk-super-secret-value" not in ex.response_text
        assert "sk-super-secret-value" not in ex.prompt.text
        log_path = tmp_path / "audit.jsonl"
        audit = AuditLog(log_path)
        audit.append("a", ex)
        assert "sk-super-secret-value" not in log_path.read_text()

    def test_missing_key_env(self, stub_chat_server, monkeypatch):
        monkeypatch.delenv("NOPE_KEY", raising=False)
        cfg = RemoteChatConfig(
            endpoint=stub_chat_server, model="stub-model", key_env="NOPE_KEY"
        )
        with pytest.raises(transport.MissingApiKey):
            complete(cfg, PROMPT, QueryMeta(id="a"), REGRESSION)


def test_audit_log_fields(tmp_path):
    log_path = tmp_path / "audit.jsonl"
    audit = AuditLog(log_path)
    ex = complete(MockEcho(), PROMPT, QueryMeta(id="mol-1", primary=2.0), REGRESSION)
    audit.append("mol-1", ex)
    row = json.loads(log_path.read_text().strip())
    assert row["id"] == "mol-1"
    assert row["kind"] == "corrector"
    assert row["attempts"] == 1
    assert "latency_ms" in row
    assert "Prediction: 2.0000" in row["response"]
