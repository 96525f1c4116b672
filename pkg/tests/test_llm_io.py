import json
import threading
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arsic.errors import (
    CaptionParseError,
    EmptyList,
    HttpStatusError,
    LlmTransportError,
    MalformedResponse,
    NoListFound,
    NonStringElement,
    UnterminatedString,
)
from arsic.llm_io import ChatClient, LlmConfig, complete, parse_caption_list
from arsic.prompt import ChatMessage, PromptBundle


def _bundle(text="hello", image_id="img"):
    return PromptBundle((ChatMessage("system", "sys"), ChatMessage("user", text)), image_id)


def _ok(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _cfg(**kw):
    kw.setdefault("endpoint", "http://llm.test/v1/chat/completions")
    kw.setdefault("api_key", "k")
    return LlmConfig(**kw)


def _client(handler, **kw):
    return ChatClient(_cfg(**kw), transport=httpx.MockTransport(handler), sleep=lambda s: None)


def test_echo_double_and_wire_format():
    seen = {}

    def echo(request):
        body = json.loads(request.content)
        seen.update(body=body, auth=request.headers.get("authorization"))
        return _ok(body["messages"][-1]["content"])

    resp = _client(echo, temperature=0.2, model="m").complete(_bundle("last user message"))
    assert resp.text == "last user message"
    assert resp.attempt_count == 1
    assert seen["body"] == {
        "model": "m",
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "last user message"}],
        "temperature": 0.2,
    }
    assert seen["auth"] == "Bearer k"


def test_retries_on_429_then_succeeds():
    calls = []

    def flaky(request):
        calls.append(1)
        if len(calls) <= 2:
            return httpx.Response(429, text="slow down")
        return _ok('["x"]')

    resp = _client(flaky, max_retries=3).complete(_bundle())
    assert resp.attempt_count == 3 == len(calls)


def test_retry_after_is_honoured():
    delays = []
    calls = []

    def limited(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429, headers={"Retry-After": "7"})
        return _ok("ok")

    client = ChatClient(_cfg(), transport=httpx.MockTransport(limited), sleep=delays.append)
    client.complete(_bundle())
    assert delays == [7.0]


def test_timeout_without_retries():
    def slow(request):
        raise httpx.ReadTimeout("timed out", request=request)

    with pytest.raises(LlmTransportError) as info:
        _client(slow, max_retries=0).complete(_bundle())
    assert info.value.attempts == 1


def test_never_exceeds_retry_budget():
    calls = []

    def down(request):
        calls.append(1)
        return httpx.Response(503)

    with pytest.raises(LlmTransportError):
        _client(down, max_retries=4).complete(_bundle())
    assert len(calls) == 5


def test_backoff_grows():
    delays = []

    def down(request):
        raise httpx.ConnectError("refused", request=request)

    client = ChatClient(_cfg(max_retries=3, backoff_base=1.0, seed=1),
                        transport=httpx.MockTransport(down), sleep=delays.append)
    with pytest.raises(LlmTransportError):
        client.complete(_bundle())
    assert len(delays) == 3
    for attempt, d in enumerate(delays):
        assert 2**attempt <= d <= 2**attempt + 1.0


def test_non_retryable_status():
    calls = []

    def bad(request):
        calls.append(1)
        return httpx.Response(401, text="no key")

    with pytest.raises(HttpStatusError) as info:
        _client(bad, max_retries=5).complete(_bundle())
    assert info.value.code == 401 and len(calls) == 1


def test_malformed_response():
    with pytest.raises(MalformedResponse):
        _client(lambda r: httpx.Response(200, json={"choices": []})).complete(_bundle())
    with pytest.raises(MalformedResponse):
        _client(lambda r: httpx.Response(200, text="not json")).complete(_bundle())


def test_concurrency_bound():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return _ok("[]")

    client = _client(handler, max_concurrency=2)
    threads = [threading.Thread(target=client.complete, args=(_bundle(),)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] == 2


def test_mock_endpoint(tmp_path):
    table = tmp_path / "mock.json"
    table.write_text(json.dumps({"img": ["first", "second"]}))
    cfg = LlmConfig(endpoint=f"mock:{table}")
    client = ChatClient(cfg)
    assert [client.complete(_bundle()).text for _ in range(3)] == ["first", "second", "second"]
    with pytest.raises(LlmTransportError):
        client.complete(_bundle(image_id="other"))
    assert complete(_bundle(), cfg).text == "first"


def test_config_validation():
    with pytest.raises(ValueError):
        LlmConfig(endpoint="")
    with pytest.raises(ValueError):
        LlmConfig(timeout=0)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("[\"two ships near a dock\", 'a ship stands alone']", ["two ships near a dock", "a ship stands alone"]),
        ("Here are the captions:\n```\n[\"a row of buildings\"]\n```", ["a row of buildings"]),
        ("['it\\'s a road',]", ["it's a road"]),
        ("```python\n[\n  \"a [bracketed] word\",\n  \"tab\\there\"\n]\n```", ["a [bracketed] word", "tab\there"]),
        ('["back\\\\slash", "new\\nline", "keep \\q"]', ["back\\slash", "new\nline", "keep \\q"]),
    ],
)
def test_parse_caption_list(raw, expected):
    assert parse_caption_list(raw) == expected


@pytest.mark.parametrize(
    "raw, exc",
    [
        ("no list here", NoListFound),
        ("[1, \"a\"]", NonStringElement),
        ("[]", EmptyList),
        ("[ ]", EmptyList),
        ("[\"abc", UnterminatedString),
        ("[\"abc\", ", NoListFound),
        ("[\"abc\\", UnterminatedString),
    ],
)
def test_parse_caption_list_errors(raw, exc):
    with pytest.raises(exc):
        parse_caption_list(raw)


def test_parse_error_details():
    with pytest.raises(NonStringElement) as info:
        parse_caption_list('[1, "a"]')
    assert info.value.index == 0
    with pytest.raises(NonStringElement) as info:
        parse_caption_list('["a", None]')
    assert info.value.index == 1
    with pytest.raises(UnterminatedString) as info:
        parse_caption_list('xx ["abc')
    assert info.value.offset == 4


@settings(max_examples=500)
@given(st.binary(max_size=200))
def test_parse_never_crashes_on_bytes(raw):
    try:
        out = parse_caption_list(raw)
    except CaptionParseError:
        return
    assert isinstance(out, list) and out and all(isinstance(c, str) for c in out)
