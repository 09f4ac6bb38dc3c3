"""Deterministic mock backends: a pure function of (input bytes, seed).

These implement the published stub rules (see PROTOCOL.md at the repo root).
Any conforming stub server must reproduce them byte-for-byte, so golden
end-to-end tests work with no models and interchangeably against the
in-process mocks or a live stub server.

Rule summary (version 1):

* key    K(seed) = utf8("capforge-stub-<seed>")
* h64    blake2b(parts joined by 0x1f, digest_size=8, key=K) as big-endian u64
* image identity: the UTF-8 bytes of the reference string (never file
  contents), or the decoded bytes when the wire carries image_b64
* caption sample i of (image, prompt): h = h64("caption", image, prompt, i);
  words picked from the 16-entry lists below via bytes of h;
  no prompt -> "a {color} {material} {noun} with a {part}"
  prompt    -> "a {color} {noun} with {count} {part}s", count = 2 + (b4 % 4)
* embed (kind, payload): base = blake2b(kind|0x1f|payload, 32, key=K);
  block b = blake2b(base + u32be(b), 64, key=K) -> eight big-endian u64 u;
  values v = u / 2^64 * 2 - 1, first dim values
* summarize(prompt): text = substring between first and last "'" (whole
  prompt if absent), split on ", ", first piece, stripped;
  usage = ceil(len/4) of prompt and of text
"""

from __future__ import annotations

import base64
import hashlib
import math
from typing import Any, Optional

from .protocol import (
    EmbeddingVector,
    ProtocolViolationError,
    SummaryResult,
    TokenUsage,
    require_nonempty,
)

STUB_RULES_VERSION = 1

COLORS = [
    "red", "blue", "green", "yellow", "black", "white", "orange", "purple",
    "pink", "brown", "gray", "teal", "gold", "silver", "beige", "maroon",
]
MATERIALS = [
    "wooden", "metal", "plastic", "stone", "glass", "ceramic", "leather",
    "fabric", "concrete", "marble", "copper", "steel", "paper", "rubber",
    "clay", "bronze",
]
NOUNS = [
    "chair", "table", "lamp", "vase", "robot", "car", "house", "tree",
    "sword", "helmet", "bridge", "tower", "statue", "barrel", "crate", "boat",
]
PARTS = [
    "handle", "wheel", "leg", "window", "door", "blade", "antenna", "roof",
    "strap", "button", "panel", "hinge", "spout", "arch", "rail", "fin",
]

_SEP = b"\x1f"


def _key(seed: int) -> bytes:
    return f"capforge-stub-{seed}".encode("utf-8")


def _as_bytes(part: Any) -> bytes:
    if isinstance(part, bytes):
        return part
    return str(part).encode("utf-8")


def h64(seed: int, *parts: Any) -> int:
    data = _SEP.join(_as_bytes(p) for p in parts)
    digest = hashlib.blake2b(data, digest_size=8, key=_key(seed)).digest()
    return int.from_bytes(digest, "big")


def stub_caption(seed: int, image: bytes, prompt: Optional[str], sample_index: int) -> str:
    h = h64(seed, b"caption", image, prompt or "", sample_index)
    b = [(h >> (8 * k)) & 0xFF for k in range(5)]
    color = COLORS[b[0] % 16]
    material = MATERIALS[b[1] % 16]
    noun = NOUNS[b[2] % 16]
    part = PARTS[b[3] % 16]
    if prompt:
        count = 2 + (b[4] % 4)
        return f"a {color} {noun} with {count} {part}s"
    return f"a {color} {material} {noun} with a {part}"


def stub_embedding(seed: int, kind: str, payload: bytes, dim: int) -> list[float]:
    key = _key(seed)
    base = hashlib.blake2b(
        kind.encode("utf-8") + _SEP + payload, digest_size=32, key=key
    ).digest()
    values: list[float] = []
    block = 0
    while len(values) < dim:
        digest = hashlib.blake2b(
            base + block.to_bytes(4, "big"), digest_size=64, key=key
        ).digest()
        for off in range(0, 64, 8):
            u = int.from_bytes(digest[off : off + 8], "big")
            values.append(u / 2**64 * 2.0 - 1.0)
        block += 1
    return values[:dim]


def stub_summary(prompt: str) -> tuple[str, int, int]:
    first = prompt.find("'")
    last = prompt.rfind("'")
    inner = prompt[first + 1 : last] if 0 <= first < last else prompt
    text = inner.split(", ")[0].strip()
    return text, math.ceil(len(prompt) / 4), math.ceil(len(text) / 4)


class MockCaptioner:
    def __init__(self, seed: int = 0):
        self.seed = seed

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
        image = image_ref.encode("utf-8")
        return [stub_caption(self.seed, image, prompt, i) for i in range(n)]


class MockEmbedder:
    def __init__(self, seed: int = 0, dim: int = 512):
        self.seed = seed
        self.dim = dim

    def _embed(self, kind: str, payload: str) -> EmbeddingVector:
        require_nonempty(payload, kind)
        values = stub_embedding(self.seed, kind, payload.encode("utf-8"), self.dim)
        return EmbeddingVector.of(values)

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._embed("text", text)

    def embed_image(self, image_ref: str) -> EmbeddingVector:
        return self._embed("image", image_ref)


class MockSummarizer:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def summarize(self, prompt: str) -> SummaryResult:
        require_nonempty(prompt, "prompt")
        text, prompt_tokens, completion_tokens = stub_summary(prompt)
        return SummaryResult(
            text=text,
            usage=TokenUsage(
                prompt_tokens=prompt_tokens, completion_tokens=completion_tokens
            ),
        )


def mock_backend_set(seed: int = 0, dim: int = 512):
    from .protocol import BackendSet

    return BackendSet(
        captioner=MockCaptioner(seed),
        embedder=MockEmbedder(seed, dim),
        summarizer=MockSummarizer(seed),
    )


def handle_wire_request(endpoint: str, payload: dict, seed: int, dim: int) -> dict:
    """Reference wire-protocol handler: request dict -> response dict.

    This is the normative mapping a stub server must match. Field names and
    value computation are part of the published protocol.
    """
    if endpoint == "/v1/caption":
        if payload.get("image_b64") is not None:
            image = base64.b64decode(payload["image_b64"])
        elif payload.get("image_uri") is not None:
            image = str(payload["image_uri"]).encode("utf-8")
        else:
            raise ProtocolViolationError("protocol-violation: caption needs image_uri or image_b64")
        prompt = payload.get("prompt")
        n = int(payload["n"])
        captions = [stub_caption(seed, image, prompt, i) for i in range(n)]
        return {"captions": captions}
    if endpoint == "/v1/embed":
        kind = payload["kind"]
        if kind not in ("text", "image"):
            raise ProtocolViolationError(f"protocol-violation: bad embed kind {kind!r}")
        values = stub_embedding(seed, kind, str(payload["payload"]).encode("utf-8"), dim)
        return {"vector": values, "dim": dim}
    if endpoint == "/v1/summarize":
        prompt = str(payload["prompt"])
        text, prompt_tokens, completion_tokens = stub_summary(prompt)
        return {
            "text": text,
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
            },
        }
    raise ProtocolViolationError(f"protocol-violation: unknown endpoint {endpoint}")


def build_protocol_vectors(seed: int = 1234, dim: int = 8) -> dict:
    """Conformance vectors: requests plus the responses the rules demand.

    Both the in-process mock and any stub server must reproduce each
    response with identical canonical-JSON bytes.
    """
    requests: list[tuple[str, str, dict]] = [
        ("caption-n5", "/v1/caption",
         {"image_uri": "img://fixture/0001/0.png", "n": 5, "nucleus_p": 0.9}),
        ("caption-n1", "/v1/caption",
         {"image_uri": "img://fixture/0001/0.png", "n": 1, "nucleus_p": 0.9}),
        ("caption-other-image", "/v1/caption",
         {"image_uri": "img://fixture/0002/3.png", "n": 3, "nucleus_p": 0.9}),
        ("caption-b64-matches-uri-bytes", "/v1/caption",
         {"image_b64": base64.b64encode(b"img://fixture/0001/0.png").decode("ascii"),
          "n": 2, "nucleus_p": 0.9}),
        ("qa-stage1", "/v1/caption",
         {"image_uri": "img://fixture/0001/0.png",
          "prompt": "Question: what object is in this image? Answer:",
          "n": 1, "nucleus_p": 0.9}),
        ("qa-stage2", "/v1/caption",
         {"image_uri": "img://fixture/0001/0.png",
          "prompt": "Question: what is the structure and geometry of this chair?",
          "n": 5, "nucleus_p": 0.9}),
        ("embed-text", "/v1/embed", {"kind": "text", "payload": "a red chair"}),
        ("embed-text-2", "/v1/embed", {"kind": "text", "payload": "a blue wooden boat with a fin"}),
        ("embed-image", "/v1/embed", {"kind": "image", "payload": "img://fixture/0001/0.png"}),
        ("embed-kind-disambiguates", "/v1/embed", {"kind": "image", "payload": "a red chair"}),
        ("summarize-one", "/v1/summarize",
         {"prompt": "Given a set of descriptions about the same 3D object, distill these "
                    "descriptions into one concise caption. The descriptions are as follows: "
                    "'a red chair'. Avoid describing background, surface, and posture. "
                    "The caption should be:"}),
        ("summarize-many", "/v1/summarize",
         {"prompt": "Given a set of descriptions about the same 3D object, distill these "
                    "descriptions into one concise caption. The descriptions are as follows: "
                    "'a red chair, a blue table, a gray lamp'. Avoid describing background, "
                    "surface, and posture. The caption should be:"}),
        ("summarize-unquoted", "/v1/summarize", {"prompt": "just some text, no quotes"}),
    ]
    vectors = []
    for name, endpoint, request in requests:
        vectors.append(
            {
                "name": name,
                "endpoint": endpoint,
                "request": request,
                "response": handle_wire_request(endpoint, request, seed=seed, dim=dim),
            }
        )
    return {
        "format_version": 1,
        "stub_rules_version": STUB_RULES_VERSION,
        "seed": seed,
        "dim": dim,
        "comparison": "canonical JSON: sort_keys=True, separators=(',', ':')",
        "vectors": vectors,
    }
