import json

import httpx
import pytest

from depfix.errors import BackendConfigError, ScriptedMiss, StrategyUnsupported, TransportError
from depfix.gateway import (
    API_KEY_ENV,
    BackendDescriptor,
    DecodingParams,
    HttpBackend,
    ScriptedBackend,
    complete,
    continue_from,
    first_line,
    load_backend_config,
    load_scripted_backend,
    map_ordered,
    prompt_hash,
)

PMPT = "def f(A, B):\n    A = A.float()"


def recording_transport(responses):
    """MockTransport that replays ``responses`` (status, json) and keeps the requests."""
    seen = []
    queue = list(responses)

    def handler(request):
        seen.append(request)
        status, doc = queue.pop(0) if len(queue) > 1 else queue[0]
        return httpx.Response(status, json=doc)

    return httpx.MockTransport(handler), seen


def chat(text, finish="stop"):
    return {"choices": [{"message": {"content": text}, "finish_reason": finish}]}


def raw(text, finish="stop"):
    return {"choices": [{"text": text, "finish_reason": finish}]}


def test_decoding_defaults():
    p = DecodingParams()
    assert (p.max_new_tokens, p.strategy, p.temperature) == (50, "greedy", 0.0)


def test_temperature_is_forced_to_zero():
    assert DecodingParams(temperature=0.7).temperature == 0.0


def test_rejects_non_greedy():
    with pytest.raises(ValueError):
        DecodingParams(strategy="sample")


def test_descriptor_invariants():
    with pytest.raises(BackendConfigError):
        BackendDescriptor("x", "http-instruct", True)
    with pytest.raises(BackendConfigError):
        BackendDescriptor("x", "scripted", False)
    with pytest.raises(BackendConfigError):
        BackendDescriptor("x", "grpc", False)


@pytest.mark.parametrize(
    "raw_text, expected",
    [
        ("    X = g(A)\n    return X\n", "    X = g(A)"),
        ("\n\n    X = g(A)", "    X = g(A)"),
        ("```python\n    X = g(A)\n```", "    X = g(A)"),
        ("", ""),
        ("   \n", ""),
        ("x = 1\r\ny = 2", "x = 1"),
    ],
)
def test_first_line(raw_text, expected):
    assert first_line(raw_text) == expected


def test_scripted_is_deterministic_and_logs():
    b = ScriptedBackend({"s1": "    X = torch.linalg.lstsq(A, B)\n    return X"})
    a = complete(PMPT, b, key="s1")
    c = complete(PMPT, b, key="s1")
    assert a == c
    assert a.text == "    X = torch.linalg.lstsq(A, B)"
    assert [r[0] for r in b.requests] == ["complete", "complete"]


def test_scripted_lookup_by_hash_and_text():
    b = ScriptedBackend({prompt_hash(PMPT): "by hash", "other": "x"})
    assert complete(PMPT, b).text == "by hash"
    b = ScriptedBackend({PMPT: "by text"})
    assert complete(PMPT, b, key="nope").text == "by text"


def test_scripted_miss_is_an_error():
    with pytest.raises(ScriptedMiss):
        complete(PMPT, ScriptedBackend({}), key="s1")


def test_scripted_continuation_lookup():
    b = ScriptedBackend({}, {"X = torch.linalg.lstsq": "(A, B)\nreturn X"})
    assert continue_from(PMPT, "    X = torch.linalg.lstsq", b) == "(A, B)"


def test_load_scripted_forms(tmp_path):
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({"s1": "x = 1"}))
    assert complete(PMPT, load_scripted_backend(flat), key="s1").text == "x = 1"
    full = tmp_path / "full.json"
    full.write_text(json.dumps({"name": "rec", "completions": {"s1": "y"}, "continuations": {"p": "q"}}))
    b = load_scripted_backend(full)
    assert b.name == "rec"
    assert continue_from(PMPT, "p", b) == "q"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"s1": 3}))
    with pytest.raises(BackendConfigError):
        load_scripted_backend(bad)


def test_instruct_request_bytes(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sekrit")
    transport, seen = recording_transport([(200, chat("    X = torch.linalg.lstsq(A, B)"))])
    b = HttpBackend("gpt", "http-instruct", "http://llm.test/v1", "gpt-3.5-turbo", transport=transport)
    out = complete(PMPT, b)
    assert out.text == "    X = torch.linalg.lstsq(A, B)"
    (req,) = seen
    body = json.loads(req.content)
    assert str(req.url) == "http://llm.test/v1/chat/completions"
    assert body["messages"] == [
        {"role": "user", "content": "Complete and output the next line for the following Python function: " + PMPT}
    ]
    assert body["temperature"] == 0.0
    assert body["max_tokens"] == 50
    assert req.headers["authorization"] == "Bearer sekrit"


def test_raw_request_sends_prompt_verbatim(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    transport, seen = recording_transport([(200, raw("    X = 1\n"))])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "codegen", transport=transport)
    complete(PMPT, b, DecodingParams(max_new_tokens=7))
    body = json.loads(seen[0].content)
    assert body["prompt"] == PMPT and body["max_tokens"] == 7
    assert "authorization" not in seen[0].headers


def test_raw_continuation_appends_prefix():
    transport, seen = recording_transport([(200, raw("(A, B)\n    return X"))])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "codegen", transport=transport)
    assert continue_from(PMPT, "    X = torch.linalg.lstsq", b) == "(A, B)"
    assert json.loads(seen[0].content)["prompt"] == PMPT + "\n    X = torch.linalg.lstsq"


def test_field_map_overrides():
    transport, seen = recording_transport([(200, {"out": [{"gen": "z = 2"}]})])
    b = HttpBackend(
        "tgi", "http-raw", "http://llm.test", "m",
        {"path": "/generate", "prompt": "inputs", "max_tokens": "max_new_tokens", "text": "out.0.gen"},
        transport=transport,
    )
    assert complete(PMPT, b).text == "z = 2"
    body = json.loads(seen[0].content)
    assert str(seen[0].url).endswith("/generate")
    assert body["inputs"] == PMPT and body["max_new_tokens"] == 50


def test_truncation_flag():
    transport, _ = recording_transport([(200, raw("    X = torch.linalg.lst", "length"))])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "m", transport=transport)
    assert complete(PMPT, b).truncated
    transport, _ = recording_transport([(200, raw("    X = 1\n    Y = torch.linalg", "length"))])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "m", transport=transport)
    assert not complete(PMPT, b).truncated


def test_retries_then_succeeds():
    transport, seen = recording_transport([(429, {}), (503, {}), (200, raw("ok"))])
    sleeps = []
    b = HttpBackend("cg", "http-raw", "http://llm.test", "m", transport=transport, sleep=sleeps.append, backoff=0.5)
    assert complete(PMPT, b).text == "ok"
    assert len(seen) == 3
    assert sleeps == [0.5, 1.0]


def test_retries_exhausted():
    transport, seen = recording_transport([(500, {})])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "m", transport=transport, sleep=lambda s: None, max_retries=2)
    with pytest.raises(TransportError):
        complete(PMPT, b)
    assert len(seen) == 3


def test_client_error_not_retried():
    transport, seen = recording_transport([(400, {"error": "context length exceeded"})])
    b = HttpBackend("cg", "http-raw", "http://llm.test", "m", transport=transport, sleep=lambda s: None)
    with pytest.raises(Exception, match="context length"):
        complete(PMPT, b)
    assert len(seen) == 1


def test_instruct_backend_cannot_continue():
    transport, seen = recording_transport([(200, chat("x"))])
    b = HttpBackend("gpt", "http-instruct", "http://llm.test", "m", transport=transport)
    with pytest.raises(StrategyUnsupported):
        continue_from(PMPT, "X = ", b)
    assert seen == []


def test_backend_config_loading(e2e_dir):
    b = load_backend_config(e2e_dir / "backends.json", "scripted-e2e")
    assert b.kind == "scripted" and b.supports_continuation
    g = load_backend_config(e2e_dir / "backends.json", "gpt-instruct")
    assert g.kind == "http-instruct" and not g.supports_continuation
    with pytest.raises(BackendConfigError):
        load_backend_config(e2e_dir / "backends.json")
    with pytest.raises(BackendConfigError):
        load_backend_config(e2e_dir / "backends.json", "missing")


def test_map_ordered_keeps_order_and_errors():
    def fn(i):
        if i == 3:
            raise ValueError("three")
        return i * 2

    out = map_ordered(fn, range(6), concurrency=3)
    assert out[:3] == [0, 2, 4] and out[4:] == [8, 10]
    assert isinstance(out[3], ValueError)
