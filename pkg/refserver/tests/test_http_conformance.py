"""The live stub server must answer every shared test vector with identical
canonical-JSON bytes, over real HTTP."""

from __future__ import annotations

import json

import requests


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def test_live_server_matches_every_vector(stub_server_factory, vectors):
    base_url = stub_server_factory(seed=vectors["seed"], dim=vectors["dim"])
    for vector in vectors["vectors"]:
        resp = requests.post(base_url + vector["endpoint"], json=vector["request"], timeout=10)
        assert resp.status_code == 200, vector["name"]
        assert canonical(resp.json()) == canonical(vector["response"]), vector["name"]


def test_same_request_twice_is_identical(stub_server_factory, vectors):
    base_url = stub_server_factory(seed=7, dim=8)
    payload = {"kind": "text", "payload": "determinism probe"}
    first = requests.post(base_url + "/v1/embed", json=payload, timeout=10)
    second = requests.post(base_url + "/v1/embed", json=payload, timeout=10)
    assert canonical(first.json()) == canonical(second.json())


def test_caption_n5_returns_five(stub_server_factory):
    base_url = stub_server_factory(seed=7, dim=8)
    resp = requests.post(
        base_url + "/v1/caption",
        json={"image_uri": "probe/0.png", "n": 5, "nucleus_p": 0.9},
        timeout=10,
    )
    captions = resp.json()["captions"]
    assert len(captions) == 5
    assert all(isinstance(c, str) and c for c in captions)


def test_summarize_reports_positive_prompt_tokens(stub_server_factory):
    base_url = stub_server_factory(seed=7, dim=8)
    resp = requests.post(
        base_url + "/v1/summarize",
        json={"prompt": "The descriptions are as follows: 'a thing'. The caption should be:"},
        timeout=10,
    )
    body = resp.json()
    assert body["usage"]["prompt_tokens"] > 0
    assert body["text"] == "a thing"


def test_bad_request_gets_protocol_error_payload(stub_server_factory):
    base_url = stub_server_factory(seed=7, dim=8)
    resp = requests.post(base_url + "/v1/caption", json={"n": 2}, timeout=10)
    assert resp.status_code == 400
    assert resp.json()["error"]["type"] == "bad-request"
