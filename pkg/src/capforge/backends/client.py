"""HTTP clients for the caption/embed/summarize services.

One client instance is shareable across worker threads. The only
synchronized state is the rate limiter (token bucket) and the concurrency
gate (semaphore); requests themselves are stateless and idempotent, which is
what makes the retry policy safe.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .protocol import (
    BackendEndpoint,
    BackendSet,
    BackendUnavailableError,
    EmbeddingVector,
    ProtocolViolationError,
    SummaryResult,
    parse_summary_payload,
    require_nonempty,
)


class TransportError(Exception):
    """Connection-level failure; always retryable."""


# transport(url, payload, timeout, headers) -> (status_code, decoded_json)
Transport = Callable[[str, dict, float, dict], tuple[int, Any]]


def requests_transport() -> Transport:
    """Default transport; one Session per thread."""
    import requests

    local = threading.local()

    def _post(url: str, payload: dict, timeout: float, headers: dict) -> tuple[int, Any]:
        session = getattr(local, "session", None)
        if session is None:
            session = requests.Session()
            local.session = session
        try:
            resp = session.post(url, json=payload, timeout=timeout, headers=headers)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = None
        return resp.status_code, body

    return _post


class RateLimiter:
    """Token bucket: sustained rate ``qps``, burst capacity ``burst``."""

    def __init__(
        self,
        qps: float,
        burst: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if qps <= 0:
            raise ValueError("qps must be > 0")
        self.qps = qps
        self.burst = max(1.0, qps if burst is None else burst)
        self._tokens = self.burst
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._last) * self.qps)
                self._last = now
                if self._tokens >= 1.0 - 1e-9:
                    self._tokens = max(0.0, self._tokens - 1.0)
                    return
                # floor keeps the wait large enough to actually advance a
                # clock; sub-ulp waits would spin forever
                wait = max((1.0 - self._tokens) / self.qps, 1e-6)
            self._sleep(wait)


@dataclass
class ClientStats:
    requests: int = 0
    retries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, attempts: int) -> None:
        with self._lock:
            self.requests += 1
            self.retries += attempts - 1


class HttpBackendClient:
    """Shared request machinery: rate limit, concurrency gate, retry loop."""

    def __init__(
        self,
        endpoint: BackendEndpoint,
        transport: Optional[Transport] = None,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        sleep: Callable[[float], None] = time.sleep,
        limiter: Optional[RateLimiter] = None,
    ):
        self.endpoint = endpoint
        self._transport = transport or requests_transport()
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sleep = sleep
        self._limiter = limiter or RateLimiter(endpoint.qps_limit, sleep=sleep)
        self._gate = threading.BoundedSemaphore(endpoint.max_concurrency)
        self.stats = ClientStats()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key_env:
            key = os.environ.get(self.endpoint.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, path: str, payload: dict) -> Any:
        url = self.endpoint.base_url.rstrip("/") + path
        headers = self._headers()
        attempts = 0
        last_error = "no attempt made"
        with self._gate:
            while True:
                self._limiter.acquire()
                attempts += 1
                try:
                    status, body = self._transport(url, payload, self.endpoint.timeout, headers)
                except TransportError as exc:
                    last_error = f"transport: {exc}"
                    status, body = None, None
                else:
                    if 200 <= status < 300:
                        self.stats.record(attempts)
                        if not isinstance(body, dict):
                            raise ProtocolViolationError(
                                f"protocol-violation: non-object response from {path}"
                            )
                        return body
                    if status == 429 or status >= 500:
                        last_error = f"status {status}"
                    else:
                        self.stats.record(attempts)
                        raise ProtocolViolationError(
                            f"protocol-violation: status {status} from {path}", payload=body
                        )
                if attempts > self.endpoint.max_retries:
                    self.stats.record(attempts)
                    raise BackendUnavailableError(
                        f"backend-unavailable: {path} failed after "
                        f"{attempts} attempts ({last_error})"
                    )
                delay = min(self._backoff_cap, self._backoff_base * 2 ** (attempts - 1))
                self._sleep(delay)


class HttpCaptioner(HttpBackendClient):
    """Client for /v1/caption. Sends image_uri unless inline_images is set
    and the reference names a readable local file."""

    def __init__(self, endpoint: BackendEndpoint, inline_images: bool = False, **kw):
        super().__init__(endpoint, **kw)
        self.inline_images = inline_images

    def _image_fields(self, image_ref: str) -> dict:
        if self.inline_images:
            path = Path(image_ref)
            if path.is_file():
                return {"image_b64": base64.b64encode(path.read_bytes()).decode("ascii")}
        return {"image_uri": image_ref}

    def caption(
        self,
        image_ref: str,
        n: int,
        nucleus_p: float = 0.9,
        prompt: Optional[str] = None,
    ) -> list[str]:
        require_nonempty(image_ref, "image_ref")
        if prompt is not None:
            require_nonempty(prompt, "prompt")
        if n < 1:
            raise ValueError("n must be >= 1")
        payload = {**self._image_fields(image_ref), "n": n, "nucleus_p": nucleus_p}
        if prompt is not None:
            payload["prompt"] = prompt
        body = self._request("/v1/caption", payload)
        captions = body.get("captions")
        if (
            not isinstance(captions, list)
            or len(captions) != n
            or not all(isinstance(c, str) and c for c in captions)
        ):
            raise ProtocolViolationError(
                f"protocol-violation: expected {n} non-empty captions", payload=body
            )
        return captions


class HttpEmbedder(HttpBackendClient):
    def __init__(self, endpoint: BackendEndpoint, expected_dim: Optional[int] = None, **kw):
        super().__init__(endpoint, **kw)
        self.expected_dim = expected_dim

    def _embed(self, kind: str, payload_text: str) -> EmbeddingVector:
        require_nonempty(payload_text, kind)
        body = self._request("/v1/embed", {"kind": kind, "payload": payload_text})
        vector = body.get("vector")
        dim = body.get("dim")
        if not isinstance(vector, list) or not isinstance(dim, int) or len(vector) != dim:
            raise ProtocolViolationError("protocol-violation: bad embed response", payload=body)
        if self.expected_dim is not None and dim != self.expected_dim:
            raise ProtocolViolationError(
                f"protocol-violation: dim {dim}, expected {self.expected_dim}"
            )
        return EmbeddingVector.of(vector)

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._embed("text", text)

    def embed_image(self, image_ref: str) -> EmbeddingVector:
        return self._embed("image", image_ref)


class HttpSummarizer(HttpBackendClient):
    def summarize(self, prompt: str) -> SummaryResult:
        require_nonempty(prompt, "prompt")
        body = self._request("/v1/summarize", {"prompt": prompt})
        return parse_summary_payload(body)


def http_backend_set(
    captioner: BackendEndpoint,
    embedder: BackendEndpoint,
    summarizer: BackendEndpoint,
    expected_dim: Optional[int] = None,
) -> BackendSet:
    return BackendSet(
        captioner=HttpCaptioner(captioner),
        embedder=HttpEmbedder(embedder, expected_dim=expected_dim),
        summarizer=HttpSummarizer(summarizer),
    )
