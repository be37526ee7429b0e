import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest

from strictagent.provider import (
    ExpectationFailed,
    FixtureExhausted,
    FixtureRecord,
    HttpProvider,
    HttpProviderConfig,
    MalformedResponse,
    ProviderError,
    ProviderHTTPError,
    ScriptedProvider,
    http_complete,
    load_fixture,
    save_fixture,
)


def test_scripted_returns_in_order():
    p = ScriptedProvider([{"response": "hi"}, "there"])
    assert p.complete("s", "u") == "hi"
    assert p.complete("s", "u") == "there"
    assert [e.response for e in p.transcript] == ["hi", "there"]


def test_scripted_expectation():
    p = ScriptedProvider([FixtureRecord("x", expect_substring="Current Subtask")])
    with pytest.raises(ExpectationFailed) as info:
        p.complete("s", "no marker here")
    assert info.value.index == 0
    assert info.value.missing == "Current Subtask"


def test_scripted_exhaustion():
    p = ScriptedProvider(["a", "b"])
    p.complete("s", "u")
    p.complete("s", "u")
    with pytest.raises(FixtureExhausted):
        p.complete("s", "u")


def test_replay_is_deterministic():
    recs = ["one", "two"]
    runs = []
    for _ in range(2):
        p = ScriptedProvider(recs)
        p.complete("sys", "first")
        p.complete("sys", "second")
        runs.append(p.transcript)
    assert runs[0] == runs[1]


def test_fixture_file_roundtrip(tmp_path):
    path = tmp_path / "f.json"
    save_fixture([FixtureRecord("a", "needle"), FixtureRecord("b")], path)
    assert load_fixture(path) == [FixtureRecord("a", "needle"), FixtureRecord("b")]
    path.write_text(json.dumps({"records": [{"response": "c"}]}))
    assert ScriptedProvider.from_file(path).complete("s", "u") == "c"


def test_bad_fixture(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps([{"nope": 1}]))
    with pytest.raises(ValueError):
        load_fixture(path)


def _mock(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_http_wire_format():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    cfg = HttpProviderConfig(base_url="http://llm.test/v1/", model="m1", api_key="sk-test")
    provider = HttpProvider(cfg, transport=httpx.MockTransport(handler))
    assert provider.complete("SYS", "USER") == "ok"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["body"] == {
        "model": "m1",
        "temperature": 0.0,
        "messages": [{"role": "system", "content": "SYS"}, {"role": "user", "content": "USER"}],
    }
    assert seen["auth"] == "Bearer sk-test"


def test_http_401():
    cfg = HttpProviderConfig(base_url="http://llm.test", model="m")
    with pytest.raises(ProviderHTTPError) as info:
        http_complete(cfg, "s", "u", client=_mock(lambda r: httpx.Response(401, text="bad key")))
    assert info.value.status == 401
    assert "bad key" in info.value.body


def test_http_malformed():
    cfg = HttpProviderConfig(base_url="http://llm.test", model="m")
    with pytest.raises(MalformedResponse):
        http_complete(cfg, "s", "u", client=_mock(lambda r: httpx.Response(200, json={"id": 1})))


def test_http_transport_error():
    def handler(request):
        raise httpx.ConnectError("refused")

    cfg = HttpProviderConfig(base_url="http://llm.test", model="m")
    with pytest.raises(ProviderError):
        http_complete(cfg, "s", "u", client=_mock(handler))


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("LLM_BASE_URL", "http://env.test/v1")
    monkeypatch.setenv("LLM_MODEL", "env-model")
    monkeypatch.setenv("LLM_API_KEY", "k")
    cfg = HttpProviderConfig.from_env()
    assert (cfg.base_url, cfg.model, cfg.api_key, cfg.temperature) == ("http://env.test/v1", "env-model", "k", 0.0)
    assert "k" not in repr(cfg)


def test_empty_base_url_rejected():
    with pytest.raises(ValueError):
        HttpProviderConfig(base_url="", model="m")


class _Echo(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        content = body["messages"][1]["content"].upper()
        payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def test_http_loopback_server():
    server = HTTPServer(("127.0.0.1", 0), _Echo)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        cfg = HttpProviderConfig(base_url=f"http://127.0.0.1:{server.server_port}/v1", model="m", timeout=5)
        assert http_complete(cfg, "s", "ok") == "OK"
    finally:
        server.shutdown()
        server.server_close()
