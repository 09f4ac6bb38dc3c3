"""Stub rules, implemented from PROTOCOL.md (version 1).

This is a deliberate re-implementation against the published document, not
an import of the client library's mocks: the shared test-vector file proves
the two agree byte-for-byte.
"""

from __future__ import annotations

import base64
import hashlib
import math
from typing import Optional

RULES_VERSION = 1

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

SEP = b"\x1f"


def key_for(seed: int) -> bytes:
    return f"capforge-stub-{seed}".encode("utf-8")


def h64(seed: int, *parts: bytes | str | int) -> int:
    encoded = [
        p if isinstance(p, bytes) else str(p).encode("utf-8") for p in parts
    ]
    digest = hashlib.blake2b(
        SEP.join(encoded), digest_size=8, key=key_for(seed)
    ).digest()
    return int.from_bytes(digest, "big")


def caption_sample(seed: int, image: bytes, prompt: Optional[str], index: int) -> str:
    h = h64(seed, b"caption", image, prompt or "", index)
    b = [(h >> (8 * k)) & 0xFF for k in range(5)]
    color, material = COLORS[b[0] % 16], MATERIALS[b[1] % 16]
    noun, part = NOUNS[b[2] % 16], PARTS[b[3] % 16]
    if prompt:
        return f"a {color} {noun} with {2 + (b[4] % 4)} {part}s"
    return f"a {color} {material} {noun} with a {part}"


def embedding(seed: int, kind: str, payload: bytes, dim: int) -> list[float]:
    key = key_for(seed)
    base = hashlib.blake2b(
        kind.encode("utf-8") + SEP + payload, digest_size=32, key=key
    ).digest()
    values: list[float] = []
    block = 0
    while len(values) < dim:
        digest = hashlib.blake2b(
            base + block.to_bytes(4, "big"), digest_size=64, key=key
        ).digest()
        values.extend(
            int.from_bytes(digest[off : off + 8], "big") / 2**64 * 2.0 - 1.0
            for off in range(0, 64, 8)
        )
        block += 1
    return values[:dim]


def summary(prompt: str) -> tuple[str, int, int]:
    first = prompt.find("'")
    last = prompt.rfind("'")
    inner = prompt[first + 1 : last] if 0 <= first < last else prompt
    text = inner.split(", ")[0].strip()
    return text, math.ceil(len(prompt) / 4), math.ceil(len(text) / 4)


def image_bytes_from_request(payload: dict) -> bytes:
    """Image identity per the protocol: decoded image_b64 when present,
    else the UTF-8 bytes of image_uri. Files are never read."""
    if payload.get("image_b64") is not None:
        return base64.b64decode(payload["image_b64"])
    if payload.get("image_uri") is not None:
        return str(payload["image_uri"]).encode("utf-8")
    raise ValueError("caption request needs image_uri or image_b64")


def handle(endpoint: str, payload: dict, seed: int, dim: int) -> dict:
    """request dict -> response dict for one stub endpoint."""
    if endpoint == "/v1/caption":
        image = image_bytes_from_request(payload)
        prompt = payload.get("prompt")
        n = int(payload["n"])
        if n < 1:
            raise ValueError("n must be >= 1")
        return {"captions": [caption_sample(seed, image, prompt, i) for i in range(n)]}
    if endpoint == "/v1/embed":
        kind = payload["kind"]
        if kind not in ("text", "image"):
            raise ValueError(f"bad embed kind: {kind!r}")
        vector = embedding(seed, kind, str(payload["payload"]).encode("utf-8"), dim)
        return {"vector": vector, "dim": dim}
    if endpoint == "/v1/summarize":
        text, prompt_tokens, completion_tokens = summary(str(payload["prompt"]))
        return {
            "text": text,
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
            },
        }
    raise ValueError(f"unknown endpoint: {endpoint}")
