"""FastAPI application exposing /v1/caption, /v1/embed, /v1/summarize.

Stub mode answers from the deterministic rules in rules.py; model mode
delegates to loaded adapters. Request handling is stateless, so concurrent
requests are safe; adapters may serialize internally.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import rules


class ModelAdapter(Protocol):
    """What a real-model backend must provide to replace the stub."""

    def caption(self, image: bytes, prompt: Optional[str], n: int, nucleus_p: float) -> list[str]: ...

    def embed(self, kind: str, payload: bytes) -> list[float]: ...

    def summarize(self, prompt: str) -> tuple[str, int, int]: ...


@dataclass
class ServerConfig:
    mode: str = "stub"  # stub | model
    seed: int = 0
    embedding_dim: int = 512
    adapter_specs: dict[str, str] = field(default_factory=dict)  # role -> "module:attr"

    def __post_init__(self):
        if self.mode not in ("stub", "model"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.mode == "stub" and self.adapter_specs:
            raise ValueError("stub mode takes no model adapter identifiers")
        if self.mode == "model" and not self.adapter_specs:
            raise ValueError("model mode needs adapter identifiers")


def load_adapter(spec: str) -> Any:
    """Resolve "package.module:attr" to an adapter instance; any failure is
    a startup error, not a per-request one."""
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise RuntimeError(f"bad adapter spec {spec!r}, want 'module:attr'")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise RuntimeError(f"cannot load adapter {spec!r}: {exc}") from exc
    return factory() if callable(factory) else factory


def error_response(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"type": kind, "message": message}}
    )


def create_app(config: ServerConfig) -> FastAPI:
    app = FastAPI(title="capforge-refserver", docs_url=None, redoc_url=None)
    adapters: dict[str, Any] = {}
    if config.mode == "model":
        adapters = {role: load_adapter(spec) for role, spec in config.adapter_specs.items()}

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "mode": config.mode,
            "seed": config.seed,
            "dim": config.embedding_dim,
            "rules_version": rules.RULES_VERSION,
        }

    async def read_payload(request: Request) -> dict:
        payload = await request.json()
        if not isinstance(payload, dict):
            raise ValueError("request body must be a JSON object")
        return payload

    @app.post("/v1/caption")
    async def caption(request: Request):
        try:
            payload = await read_payload(request)
            if config.mode == "stub":
                return rules.handle("/v1/caption", payload, config.seed, config.embedding_dim)
            image = rules.image_bytes_from_request(payload)
            captions = adapters["captioner"].caption(
                image,
                payload.get("prompt"),
                int(payload["n"]),
                float(payload.get("nucleus_p", 0.9)),
            )
            return {"captions": captions}
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(400, "bad-request", str(exc))

    @app.post("/v1/embed")
    async def embed(request: Request):
        try:
            payload = await read_payload(request)
            if config.mode == "stub":
                return rules.handle("/v1/embed", payload, config.seed, config.embedding_dim)
            vector = adapters["embedder"].embed(
                str(payload["kind"]), str(payload["payload"]).encode("utf-8")
            )
            return {"vector": vector, "dim": len(vector)}
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(400, "bad-request", str(exc))

    @app.post("/v1/summarize")
    async def summarize(request: Request):
        try:
            payload = await read_payload(request)
            if config.mode == "stub":
                return rules.handle("/v1/summarize", payload, config.seed, config.embedding_dim)
            text, prompt_tokens, completion_tokens = adapters["summarizer"].summarize(
                str(payload["prompt"])
            )
            return {
                "text": text,
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": completion_tokens,
                },
            }
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(400, "bad-request", str(exc))

    return app
