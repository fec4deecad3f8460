from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from biaslens.backends import (
    ChatCompletionBackend,
    HashChunkBackend,
    HttpChunkBackend,
    HttpEmotionBackend,
    LexiconChunkBackend,
    ScriptedChunkBackend,
    ScriptedTextBackend,
)
from biaslens.classify import BackendRequest, PoliticalLabel
from biaslens.errors import AuthError, BackendError, MockMiss, SchemaError
from biaslens.sentiment import Emotion
from biaslens.transport import RatePolicy

FAST = RatePolicy(max_retries=1, base_backoff_ms=1, max_backoff_ms=2)


@pytest.fixture
def json_server():
    """Answers POSTs from ``routes`` (path -> (status, payload)) and logs requests."""
    routes: dict[str, tuple[int, object]] = {}
    seen: list[dict] = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            seen.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
            status, payload = routes.get(self.path, (404, {"error": "no route"}))
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, args=(0.05,), daemon=True).start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", routes, seen
    finally:
        server.shutdown()
        server.server_close()


def test_chat_backend_sends_deterministic_request(json_server, monkeypatch):
    base, routes, seen = json_server
    monkeypatch.setenv("BIASLENS_LLM_API_KEY", "sk-test")
    routes["/v1/chat/completions"] = (200, {"choices": [{"message": {"content": "Right"}}]})
    backend = ChatCompletionBackend(base + "/v1", "some-model", policy=FAST)
    assert backend.complete(BackendRequest("classify this")) == "Right"
    body = seen[0]["body"]
    assert body["temperature"] == 0.0 and body["model"] == "some-model"
    assert body["messages"] == [{"role": "user", "content": "classify this"}]
    assert seen[0]["auth"] == "Bearer sk-test"


def test_completion_style_and_schema_errors(json_server, monkeypatch):
    base, routes, seen = json_server
    monkeypatch.setenv("BIASLENS_LLM_API_KEY", "k")
    routes["/completions"] = (200, {"choices": [{"text": "Left"}]})
    assert ChatCompletionBackend(base, "m", style="completion", policy=FAST).complete(BackendRequest("p")) == "Left"
    assert seen[0]["body"]["prompt"] == "p"
    routes["/chat/completions"] = (200, {"nothing": []})
    with pytest.raises(SchemaError):
        ChatCompletionBackend(base, "m", policy=FAST).complete(BackendRequest("p"))


def test_missing_key_and_rejected_key_are_auth_errors(json_server, monkeypatch):
    base, routes, seen = json_server
    monkeypatch.delenv("BIASLENS_LLM_API_KEY", raising=False)
    with pytest.raises(AuthError):
        ChatCompletionBackend(base, "m", policy=FAST).complete(BackendRequest("p"))
    assert seen == []
    monkeypatch.setenv("BIASLENS_LLM_API_KEY", "wrong")
    routes["/chat/completions"] = (401, {"error": "bad key"})
    with pytest.raises(AuthError):
        ChatCompletionBackend(base, "m", policy=FAST).complete(BackendRequest("p"))
    assert len(seen) == 1


def test_http_chunk_backend_maps_labels(json_server):
    base, routes, seen = json_server
    routes["/clf"] = (200, [[{"label": "LABEL_0", "score": 0.2}, {"label": "LABEL_2", "score": 0.7}]])
    backend = HttpChunkBackend(base + "/clf", policy=FAST)
    assert backend.predict(["a", "b"]) is PoliticalLabel.RIGHT
    assert seen[0]["body"] == {"inputs": "a b"}
    routes["/clf"] = (200, [{"label": "LABEL_9", "score": 1.0}])
    with pytest.raises(BackendError):
        backend.predict(["a"])


def test_http_emotion_backend_normalizes_scores(json_server):
    base, routes, _ = json_server
    routes["/emo"] = (200, [[{"label": "Fear", "score": 3.0}, {"label": "joy", "score": 1.0}]])
    dist = HttpEmotionBackend(base + "/emo", policy=FAST).score(["x"])
    assert dist[Emotion.FEAR] == 0.75 and dist[Emotion.NEUTRAL] == 0.0
    routes["/emo"] = (200, {"label": "fear"})
    with pytest.raises(SchemaError):
        HttpEmotionBackend(base + "/emo", policy=FAST).score(["x"])


def test_offline_chunk_backends_are_deterministic():
    lex = LexiconChunkBackend()
    assert lex.predict(["refugees", "aid", "troops"]) is PoliticalLabel.LEFT
    assert lex.predict(["troops", "border"]) is PoliticalLabel.RIGHT
    assert lex.predict(["weather"]) is PoliticalLabel.CENTRE
    assert HashChunkBackend().predict(["a", "b"]) is HashChunkBackend().predict(["a", "b"])
    with pytest.raises(MockMiss):
        ScriptedChunkBackend({}).predict(["a"])


def test_scripted_text_backend_walks_script_then_repeats():
    req = BackendRequest("p")
    backend = ScriptedTextBackend({req.digest(): ["Left", "Right"]})
    assert [backend.complete(req) for _ in range(3)] == ["Left", "Right", "Right"]
    with pytest.raises(MockMiss):
        backend.complete(BackendRequest("other"))
    with pytest.raises(AuthError):
        ScriptedTextBackend({}, default={"status": 403}).complete(req)
