"""Chat-completion transport, response extraction, and call accounting."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .prompts import PromptRequest

log = logging.getLogger(__name__)


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class AuthError(GatewayError):
    pass


class RateLimited(TransportError):
    pass


class MalformedResponse(GatewayError):
    pass


@dataclass(frozen=True)
class Extraction:
    code: Optional[str]
    rationale: Optional[str]
    ignored_blocks: int = 0


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_RATIONALE = re.compile(r"^[ \t]*RATIONALE[ \t]*:[ \t]*", re.MULTILINE | re.IGNORECASE)


def extract(raw_text) -> Extraction:
    """Code is the first fenced block; rationale follows a ``RATIONALE:`` header.

    Absent parts come back as ``None``; nothing is ever synthesized.
    """
    if isinstance(raw_text, (bytes, bytearray)):
        raw_text = bytes(raw_text).decode("utf-8", errors="replace")
    if not isinstance(raw_text, str):
        return Extraction(None, None)
    blocks = _FENCE.findall(raw_text)
    code = blocks[0] if blocks else None
    if len(blocks) > 1:
        log.info("ignoring %d extra fenced block(s) in response", len(blocks) - 1)
    rationale = None
    m = _RATIONALE.search(raw_text)
    if m:
        rest = raw_text[m.end():]
        fence = rest.find("```")
        text = (rest if fence < 0 else rest[:fence]).strip()
        rationale = text or None
    return Extraction(code, rationale, max(len(blocks) - 1, 0))


@dataclass
class LlmResponse:
    raw_text: str
    extracted_code: Optional[str]
    extracted_rationale: Optional[str]
    token_counts: dict = field(default_factory=dict)
    latency: float = 0.0
    attempts: int = 1


def response_from_text(raw_text: str, **kw) -> LlmResponse:
    ex = extract(raw_text)
    return LlmResponse(raw_text, ex.code, ex.rationale, **kw)


class Backend(Protocol):
    """Anything that answers prompt requests and counts dispatched calls."""

    calls: int

    def complete(self, request: PromptRequest) -> LlmResponse: ...


# transport(url, headers, payload, timeout) -> (status_code, body_text)
Transport = Callable[[str, dict, dict, float], tuple]


def httpx_transport(url: str, headers: dict, payload: dict, timeout: float) -> tuple:
    import httpx

    try:
        r = httpx.post(url, headers=headers, json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        raise TransportError(f"{type(exc).__name__}: {exc}") from None
    return r.status_code, r.text


@dataclass
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    path: str = "/chat/completions"
    # name of the environment variable holding the bearer token, never the token
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    max_concurrency: int = 4

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/" + self.path.lstrip("/")

    def credential(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        return key


def build_payload(request: PromptRequest) -> dict:
    return {
        "model": request.model_name,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_response_tokens,
    }


def parse_completion(body: str) -> tuple[str, dict]:
    try:
        data = json.loads(body)
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise MalformedResponse("response is not a chat completion") from None
    if not isinstance(content, str):
        raise MalformedResponse("completion content is not text")
    usage = data.get("usage") or {}
    tokens = {
        "prompt": int(usage.get("prompt_tokens", 0) or 0),
        "completion": int(usage.get("completion_tokens", 0) or 0),
    }
    return content, tokens


class LlmGateway:
    """Live chat-completion backend.

    ``calls`` counts logical requests: a request is counted once when it is
    dispatched, however many transport attempts it takes and whether or not
    it finally succeeds.
    """

    def __init__(
        self,
        endpoint: EndpointConfig | None = None,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint or EndpointConfig()
        self.transport = transport or httpx_transport
        self.sleep = sleep
        self.calls = 0
        self.attempts = 0
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, self.endpoint.max_concurrency))

    def check_credentials(self) -> None:
        self.endpoint.credential()

    def _count(self, attempts: int = 0, call: bool = False) -> None:
        with self._lock:
            self.attempts += attempts
            if call:
                self.calls += 1

    def complete(self, request: PromptRequest) -> LlmResponse:
        ep = self.endpoint
        key = ep.credential()
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        payload = build_payload(request)
        self._count(call=True)
        start = time.monotonic()
        last: Exception | None = None
        with self._slots:
            for attempt in range(ep.max_retries + 1):
                if attempt:
                    self.sleep(min(ep.backoff_cap, ep.backoff_base * 2 ** (attempt - 1)))
                self._count(attempts=1)
                try:
                    status, body = self.transport(ep.url, headers, payload, ep.timeout)
                except TransportError as exc:
                    last = exc
                    log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                    continue
                if status in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {status})")
                if status == 429:
                    last = RateLimited("HTTP 429")
                    continue
                if status >= 500:
                    last = TransportError(f"HTTP {status}")
                    continue
                if status >= 400:
                    raise TransportError(f"HTTP {status}")
                content, tokens = parse_completion(body)
                return response_from_text(
                    content,
                    token_counts=tokens,
                    latency=time.monotonic() - start,
                    attempts=attempt + 1,
                )
        assert last is not None
        raise last
