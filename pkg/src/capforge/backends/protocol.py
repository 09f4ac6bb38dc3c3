"""Wire-level types shared by all model-service clients.

The wire protocol is HTTP+JSON with bit-exact field names:

    POST /v1/caption   {"image_uri"|"image_b64", "prompt"?, "n", "nucleus_p"}
                       -> {"captions": [...]}
    POST /v1/embed     {"kind": "text"|"image", "payload"}
                       -> {"vector": [...], "dim"}
    POST /v1/summarize {"prompt"}
                       -> {"text", "usage": {"prompt_tokens", "completion_tokens"}}

A summarizer content refusal is a 200 response carrying "refusal" instead of
"text"; clients surface it as SummarizerRefusedError with the raw payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional, Protocol, runtime_checkable

from ..core import CapforgeError


class EmptyInputError(CapforgeError):
    code = "empty-input"


class BackendUnavailableError(CapforgeError):
    code = "backend-unavailable"


class ProtocolViolationError(CapforgeError):
    code = "protocol-violation"


class SummarizerRefusedError(CapforgeError):
    code = "summarizer-refused"


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 3
    qps_limit: float = 10.0
    max_concurrency: int = 8
    api_key_env: Optional[str] = None

    def __post_init__(self):
        if self.qps_limit <= 0:
            raise ValueError("qps_limit must be > 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
        )

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ValueError(f"embedding has {len(self.values)} values, dim says {self.dim}")

    @classmethod
    def of(cls, values) -> "EmbeddingVector":
        vals = tuple(float(v) for v in values)
        return cls(values=vals, dim=len(vals))


@dataclass(frozen=True)
class SummaryResult:
    text: str
    usage: TokenUsage


def count_tokens(text: str, tokenizer: str = "approx") -> int:
    """Deterministic token-count estimate; monotone under concatenation.

    "approx" is ceil(characters / 4); "whitespace" counts whitespace-split
    words. Exact counts from backend usage fields are preferred whenever a
    response carries them; this only feeds pre-flight estimates.
    """
    if tokenizer == "approx":
        return math.ceil(len(text) / 4)
    if tokenizer == "whitespace":
        return len(text.split())
    raise ValueError(f"unknown tokenizer: {tokenizer}")


@runtime_checkable
class CaptionBackend(Protocol):
    def caption(
        self,
        image_ref: str,
        n: int,
        nucleus_p: float = 0.9,
        prompt: Optional[str] = None,
    ) -> list[str]: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_image(self, image_ref: str) -> EmbeddingVector: ...


@runtime_checkable
class SummaryBackend(Protocol):
    def summarize(self, prompt: str) -> SummaryResult: ...


@dataclass(frozen=True)
class BackendSet:
    """The three model services a pipeline run talks to."""

    captioner: CaptionBackend
    embedder: EmbeddingBackend
    summarizer: SummaryBackend


def require_nonempty(value: str, what: str) -> None:
    if not value:
        raise EmptyInputError(f"empty-input: {what} must be non-empty")


def parse_summary_payload(payload: Any) -> SummaryResult:
    """Decode a /v1/summarize response; refusals and malformed shapes raise."""
    if not isinstance(payload, dict):
        raise ProtocolViolationError("protocol-violation: summarize payload not an object")
    if payload.get("refusal") is not None:
        raise SummarizerRefusedError(
            f"summarizer-refused: {payload['refusal']}", payload=payload
        )
    text = payload.get("text")
    usage = payload.get("usage")
    if not isinstance(text, str) or not isinstance(usage, dict):
        raise ProtocolViolationError("protocol-violation: summarize payload missing fields")
    try:
        return SummaryResult(
            text=text,
            usage=TokenUsage(
                prompt_tokens=int(usage["prompt_tokens"]),
                completion_tokens=int(usage["completion_tokens"]),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolViolationError(f"protocol-violation: bad usage block: {exc}")
