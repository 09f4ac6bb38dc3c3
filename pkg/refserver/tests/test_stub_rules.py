"""The independently implemented rules must reproduce every shared test
vector with identical canonical-JSON bytes."""

from __future__ import annotations

import json

import pytest

from capforge_refserver import rules
from capforge_refserver.app import ServerConfig


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def test_every_vector_reproduced(vectors):
    for vector in vectors["vectors"]:
        response = rules.handle(
            vector["endpoint"], vector["request"], vectors["seed"], vectors["dim"]
        )
        assert canonical(response) == canonical(vector["response"]), vector["name"]


def test_rules_version_matches_vectors(vectors):
    assert rules.RULES_VERSION == vectors["stub_rules_version"]


def test_unknown_endpoint_rejected():
    with pytest.raises(ValueError):
        rules.handle("/v1/nope", {}, 0, 8)


def test_caption_requires_an_image():
    with pytest.raises(ValueError):
        rules.handle("/v1/caption", {"n": 1}, 0, 8)


class TestServerConfig:
    def test_stub_mode_rejects_adapters(self):
        with pytest.raises(ValueError):
            ServerConfig(mode="stub", adapter_specs={"captioner": "x:y"})

    def test_model_mode_requires_adapters(self):
        with pytest.raises(ValueError):
            ServerConfig(mode="model")

    def test_unloadable_adapter_is_startup_error(self):
        from capforge_refserver.app import create_app

        config = ServerConfig(mode="model", adapter_specs={"captioner": "no.such.module:attr"})
        with pytest.raises(RuntimeError):
            create_app(config)
