import json

import httpx
import numpy as np
import pytest

from culgen.clients import (FixtureVLMClient, JudgeRequest, OpenAIChatClient, RecordingVLMClient, image_digest,
                            sha256_text, with_retries)
from culgen.errors import NotFoundError, TransportError


def _client(handler, **kw):
    return OpenAIChatClient("m", base_url="http://test/v1", api_key="k", transport=httpx.MockTransport(handler), **kw)


def test_chat_request_shape(tmp_path):
    seen = []

    def handler(request):
        seen.append((request.url.path, request.headers["authorization"], json.loads(request.content)))
        return httpx.Response(200, json={"choices": [{"message": {"content": "1. France"}}]})

    img = tmp_path / "a.png"
    img.write_bytes(b"\x89PNG")
    c = _client(handler)
    assert c.complete("hi") == "1. France"
    assert c.query(img, "where?") == "1. France"
    c.judge(JudgeRequest("p", "MLLM", images=[img, img]))
    c.judge(JudgeRequest("p", "LLM"))
    path, auth, body = seen[0]
    assert path == "/v1/chat/completions" and auth == "Bearer k" and body["temperature"] == 0
    parts = seen[1][2]["messages"][0]["content"]
    assert parts[0] == {"type": "text", "text": "where?"}
    assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")
    assert len(seen[2][2]["messages"][0]["content"]) == 3
    assert seen[3][2]["messages"][0]["content"] == "p"


@pytest.mark.parametrize("status", [429, 500, 503, 401])
def test_http_errors_become_transport_errors(status):
    c = _client(lambda r: httpx.Response(status, text="nope"))
    with pytest.raises(TransportError, match=str(status)):
        c.complete("x")


def test_network_and_payload_errors():
    def boom(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError, match="refused"):
        _client(boom).complete("x")
    with pytest.raises(TransportError, match="malformed"):
        _client(lambda r: httpx.Response(200, json={"choices": []})).complete("x")


def test_credentials_from_environment(monkeypatch):
    monkeypatch.setenv("CULGEN_API_KEY", "env-key")
    monkeypatch.setenv("CULGEN_API_BASE", "http://elsewhere/v2/")
    got = []

    def handler(request):
        got.append((str(request.url), request.headers.get("authorization")))
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    OpenAIChatClient("m", transport=httpx.MockTransport(handler)).complete("x")
    assert got == [("http://elsewhere/v2/chat/completions", "Bearer env-key")]


def test_retries(monkeypatch):
    sleeps = []
    monkeypatch.setattr("time.sleep", sleeps.append)
    calls = iter([TransportError("a"), TransportError("b"), "done"])

    def fn():
        v = next(calls)
        if isinstance(v, Exception):
            raise v
        return v

    assert with_retries(fn, attempts=3, backoff=0.5) == "done"
    assert sleeps == [0.5, 1.0]
    with pytest.raises(ValueError):
        with_retries(lambda: (_ for _ in ()).throw(ValueError("not retried")))


def test_fixture_replay_and_recording(tmp_path):
    img = tmp_path / "x.png"
    img.write_bytes(b"abc")

    class Live:
        def query(self, image, instruction):
            return "1. Japan"

    rec = RecordingVLMClient(Live(), tmp_path / "fx.jsonl")
    assert rec.query(img, "where?") == "1. Japan"
    replay = FixtureVLMClient.load(tmp_path / "fx.jsonl")
    assert replay.query(img, "where?") == "1. Japan"
    with pytest.raises(NotFoundError):
        replay.query(img, "other instruction")


def test_digests():
    assert sha256_text("a") == image_digest("a")
    assert image_digest(np.zeros(3)) == image_digest(np.zeros(3))
    assert image_digest(np.zeros(3)) != image_digest(np.ones(3))
