"""Typed clients for the caption/embedding/summarization model services."""

from .client import (
    HttpCaptioner,
    HttpEmbedder,
    HttpSummarizer,
    RateLimiter,
    TransportError,
    http_backend_set,
    requests_transport,
)
from .mock import (
    MockCaptioner,
    MockEmbedder,
    MockSummarizer,
    build_protocol_vectors,
    handle_wire_request,
    mock_backend_set,
)
from .protocol import (
    BackendEndpoint,
    BackendSet,
    BackendUnavailableError,
    CaptionBackend,
    EmbeddingBackend,
    EmbeddingVector,
    EmptyInputError,
    ProtocolViolationError,
    SummaryBackend,
    SummaryResult,
    SummarizerRefusedError,
    TokenUsage,
    count_tokens,
)

__all__ = [
    "BackendEndpoint",
    "BackendSet",
    "BackendUnavailableError",
    "CaptionBackend",
    "EmbeddingBackend",
    "EmbeddingVector",
    "EmptyInputError",
    "HttpCaptioner",
    "HttpEmbedder",
    "HttpSummarizer",
    "MockCaptioner",
    "MockEmbedder",
    "MockSummarizer",
    "ProtocolViolationError",
    "RateLimiter",
    "SummaryBackend",
    "SummaryResult",
    "SummarizerRefusedError",
    "TokenUsage",
    "TransportError",
    "build_protocol_vectors",
    "count_tokens",
    "handle_wire_request",
    "http_backend_set",
    "mock_backend_set",
    "requests_transport",
]
