"""Chat-completion client and the bracketed-list caption parser."""
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from email.utils import parsedate_to_datetime
from pathlib import Path
from typing import Optional

import httpx

from .errors import (
    EmptyList,
    HttpStatusError,
    LlmTransportError,
    MalformedResponse,
    NoListFound,
    NonStringElement,
    UnterminatedString,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "ARSIC_API_KEY"
MOCK_PREFIX = "mock:"


@dataclass
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_retries: int = 3
    timeout: float = 60.0
    max_concurrency: int = 4
    api_key: Optional[str] = None
    seed: Optional[int] = None
    backoff_base: float = 1.0
    backoff_max: float = 30.0

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("llm endpoint must be non-empty")
        if self.timeout <= 0:
            raise ValueError("llm timeout must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)

    @property
    def is_mock(self):
        return self.endpoint.startswith(MOCK_PREFIX)


@dataclass(frozen=True)
class RawResponse:
    text: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    attempt_count: int = 1


def _retry_after(resp):
    value = resp.headers.get("retry-after")
    if not value:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        pass
    try:
        return max(0.0, parsedate_to_datetime(value).timestamp() - time.time())
    except (TypeError, ValueError):
        return None


class MockResponses:
    """Canned responses keyed by image id.

    A value may be a string or a list of strings; successive calls for the
    same image walk the list and then keep returning its last entry.
    """

    def __init__(self, table):
        self._table = {k: ([v] if isinstance(v, str) else list(v)) for k, v in table.items()}
        self._calls = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path):
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def reply(self, image_id):
        with self._lock:
            seq = self._table.get(image_id)
            if not seq:
                raise LlmTransportError(f"no canned response for image {image_id!r}", attempts=1)
            i = self._calls.get(image_id, 0)
            self._calls[image_id] = i + 1
            return seq[min(i, len(seq) - 1)]


class ChatClient:
    """Thread-safe chat-completion client with bounded in-flight requests."""

    def __init__(self, cfg, transport=None, sleep=time.sleep, rng=None):
        self.cfg = cfg
        self._sleep = sleep
        self._rng = rng or random.Random(cfg.seed)
        self._slots = threading.BoundedSemaphore(cfg.max_concurrency)
        self._mock = None
        self._http = None
        if cfg.is_mock:
            self._mock = MockResponses.load(cfg.endpoint[len(MOCK_PREFIX):])
        else:
            self._http = httpx.Client(timeout=cfg.timeout, transport=transport)

    def _payload(self, bundle):
        body = {
            "model": self.cfg.model,
            "messages": [m.to_dict() for m in bundle.messages],
            "temperature": self.cfg.temperature,
        }
        if self.cfg.seed is not None:
            body["seed"] = self.cfg.seed
        return body

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        return headers

    def _backoff(self, attempt):
        delay = min(self.cfg.backoff_max, self.cfg.backoff_base * 2**attempt)
        return delay + self._rng.uniform(0, self.cfg.backoff_base)

    def complete(self, bundle):
        if not bundle.messages:
            raise ValueError("prompt bundle has no messages")
        if self._mock is not None:
            return RawResponse(self._mock.reply(bundle.target_image_id))

        payload = self._payload(bundle)
        last = "no attempt made"
        attempts = self.cfg.max_retries + 1
        for attempt in range(attempts):
            wait = None
            with self._slots:
                try:
                    resp = self._http.post(self.cfg.endpoint, json=payload, headers=self._headers())
                except (httpx.TimeoutException, httpx.TransportError) as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    resp = None
            if resp is not None:
                code = resp.status_code
                if code < 300:
                    return _parse_completion(resp, attempt + 1)
                if code != 429 and code < 500:
                    raise HttpStatusError(code, resp.text)
                last = f"HTTP {code}"
                if code == 429:
                    wait = _retry_after(resp)
            if attempt + 1 < attempts:
                delay = self._backoff(attempt) if wait is None else wait
                logger.warning("LLM request failed (%s); retry %d in %.2fs", last, attempt + 1, delay)
                self._sleep(delay)
        raise LlmTransportError(last, attempts=attempts)

    def close(self):
        if self._http is not None:
            self._http.close()


def _parse_completion(resp, attempts):
    try:
        doc = resp.json()
        text = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"response lacks choices[0].message.content: {exc}") from None
    if not isinstance(text, str):
        raise MalformedResponse("choices[0].message.content is not a string")
    usage = doc.get("usage") or {}
    return RawResponse(text, usage.get("prompt_tokens"), usage.get("completion_tokens"), attempts)


def complete(bundle, cfg, client=None):
    own = client is None
    client = client or ChatClient(cfg)
    try:
        return client.complete(bundle)
    finally:
        if own:
            client.close()


_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t"}
_WS = " \t\r\n\f\v"


def _skip_ws(text, i):
    while i < len(text) and text[i] in _WS:
        i += 1
    return i


def _read_string(text, i):
    quote = text[i]
    start = i
    i += 1
    out = []
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                break
            nxt = text[i + 1]
            # unknown escapes keep their backslash
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
        elif ch == quote:
            return "".join(out), i + 1
        else:
            out.append(ch)
            i += 1
    raise UnterminatedString(start)


def parse_caption_list(raw):
    """Extract the first bracketed list of string literals from an LLM reply.

    Prose and code fences around the list are ignored; elements may use
    single or double quotes and a trailing comma is accepted.
    """
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, (bytes, bytearray)) else str(raw)
    start = text.find("[")
    if start < 0:
        raise NoListFound("reply contains no '['")
    i = _skip_ws(text, start + 1)
    if i < len(text) and text[i] == "]":
        raise EmptyList("reply list is empty")
    captions = []
    while True:
        if i >= len(text):
            raise NoListFound("list is never closed")
        if text[i] not in "'\"":
            raise NonStringElement(len(captions))
        value, i = _read_string(text, i)
        captions.append(value)
        i = _skip_ws(text, i)
        if i >= len(text):
            raise NoListFound("list is never closed")
        if text[i] == "]":
            return captions
        if text[i] != ",":
            raise NonStringElement(len(captions))
        i = _skip_ws(text, i + 1)
        if i < len(text) and text[i] == "]":
            return captions
