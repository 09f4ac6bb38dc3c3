"""Run-configuration file: one human-editable YAML document with sections
{pipeline, backends, rates, filter, io}. Unknown keys are rejected and every
referenced path is checked up front, so a bad config fails at startup rather
than mid-batch. Credentials come from env vars only, never from the file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .backends.client import http_backend_set
from .backends.mock import mock_backend_set
from .backends.protocol import BackendEndpoint, BackendSet
from .core import ConfigError, LicenseClass, PipelineConfig, parse_license
from .costs import CostRates

BACKEND_NAMES = ("captioner", "embedder", "summarizer")

_PIPELINE_KEYS = {
    "views_per_object",
    "samples_per_view",
    "selection_embedding_dim",
    "detector_threshold",
    "license_allowlist",
    "qa_mode",
    "summary_prompt_template",
    "qa_prompt_1",
    "qa_prompt_2",
    "blocklist_path",
    "nucleus_p",
    "above_elevation_deg",
    "below_elevation_deg",
    "camera_radius",
    "render_resolution",
    "lighting_preset",
}
_BACKENDS_KEYS = {"mode", "seed", *BACKEND_NAMES}
_ENDPOINT_KEYS = {
    "base_url",
    "timeout",
    "max_retries",
    "qps_limit",
    "max_concurrency",
    "api_key_env",
}
_RATES_KEYS = {f.name for f in fields(CostRates)}
_FILTER_KEYS = {"detector_scores_path"}
_IO_KEYS = {"manifest", "output_dir", "work_dir"}
_TOP_KEYS = {"pipeline", "backends", "rates", "filter", "io"}


def _reject_unknown(section: str, data: dict, allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _parse_allowlist(raw: Any) -> frozenset[LicenseClass]:
    if raw is None:
        return PipelineConfig().license_allowlist
    classes = set()
    for entry in raw:
        lic = parse_license(str(entry))
        if lic is LicenseClass.OTHER and str(entry).strip().lower() != "other":
            raise ConfigError(f"unrecognized license in allowlist: {entry!r}")
        classes.add(lic)
    if not classes:
        raise ConfigError("license_allowlist must not be empty")
    return frozenset(classes)


@dataclass
class RunConfig:
    pipeline: PipelineConfig
    backend_mode: str
    seed: int
    endpoints: dict[str, BackendEndpoint]
    rates: CostRates
    detector_scores_path: Optional[Path]
    manifest_path: Optional[Path]
    output_dir: Path
    work_dir: Path
    base_dir: Path

    def make_backends(self) -> BackendSet:
        if self.backend_mode == "mock":
            return mock_backend_set(
                seed=self.seed, dim=self.pipeline.selection_embedding_dim
            )
        if self.backend_mode == "http":
            missing = [n for n in BACKEND_NAMES if n not in self.endpoints]
            if missing:
                raise ConfigError(
                    f"http mode needs endpoint config for: {', '.join(missing)}"
                )
            return http_backend_set(
                self.endpoints["captioner"],
                self.endpoints["embedder"],
                self.endpoints["summarizer"],
                expected_dim=self.pipeline.selection_embedding_dim,
            )
        raise ConfigError(f"unknown backend mode: {self.backend_mode!r}")


def _resolve(base: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_run_config(path: str | Path, seed_override: Optional[int] = None) -> RunConfig:
    """Parse and validate a run config; all paths resolve relative to the
    config file so a run is reproducible from one artifact."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown("top level", raw, _TOP_KEYS)
    base = path.parent

    pipe_raw = dict(raw.get("pipeline") or {})
    _reject_unknown("pipeline", pipe_raw, _PIPELINE_KEYS)
    backends_raw = dict(raw.get("backends") or {})
    _reject_unknown("backends", backends_raw, _BACKENDS_KEYS)
    rates_raw = dict(raw.get("rates") or {})
    _reject_unknown("rates", rates_raw, _RATES_KEYS)
    filter_raw = dict(raw.get("filter") or {})
    _reject_unknown("filter", filter_raw, _FILTER_KEYS)
    io_raw = dict(raw.get("io") or {})
    _reject_unknown("io", io_raw, _IO_KEYS)

    seed = int(backends_raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override

    blocklist_path = _resolve(base, pipe_raw.get("blocklist_path"))
    if pipe_raw.get("blocklist_path") is not None and not blocklist_path.is_file():
        raise ConfigError(f"blocklist path does not exist: {blocklist_path}")

    defaults = PipelineConfig()
    pipeline = PipelineConfig(
        views_per_object=int(pipe_raw.get("views_per_object", defaults.views_per_object)),
        samples_per_view=int(pipe_raw.get("samples_per_view", defaults.samples_per_view)),
        selection_embedding_dim=int(
            pipe_raw.get("selection_embedding_dim", defaults.selection_embedding_dim)
        ),
        detector_threshold=float(
            pipe_raw.get("detector_threshold", defaults.detector_threshold)
        ),
        license_allowlist=_parse_allowlist(pipe_raw.get("license_allowlist")),
        qa_mode=bool(pipe_raw.get("qa_mode", False)),
        summary_prompt_template=pipe_raw.get("summary_prompt_template")
        or defaults.summary_prompt_template,
        qa_prompt_1=pipe_raw.get("qa_prompt_1") or defaults.qa_prompt_1,
        qa_prompt_2=pipe_raw.get("qa_prompt_2") or defaults.qa_prompt_2,
        blocklist_path=str(blocklist_path) if blocklist_path else None,
        nucleus_p=float(pipe_raw.get("nucleus_p", defaults.nucleus_p)),
        above_elevation_deg=float(
            pipe_raw.get("above_elevation_deg", defaults.above_elevation_deg)
        ),
        below_elevation_deg=float(
            pipe_raw.get("below_elevation_deg", defaults.below_elevation_deg)
        ),
        camera_radius=float(pipe_raw.get("camera_radius", defaults.camera_radius)),
        render_resolution=int(
            pipe_raw.get("render_resolution", defaults.render_resolution)
        ),
        lighting_preset=str(pipe_raw.get("lighting_preset", defaults.lighting_preset)),
        seed=seed,
    )

    endpoints: dict[str, BackendEndpoint] = {}
    for name in BACKEND_NAMES:
        if name in backends_raw:
            ep_raw = dict(backends_raw[name] or {})
            _reject_unknown(f"backends.{name}", ep_raw, _ENDPOINT_KEYS)
            if "base_url" not in ep_raw:
                raise ConfigError(f"backends.{name} needs base_url")
            try:
                endpoints[name] = BackendEndpoint(
                    base_url=str(ep_raw["base_url"]),
                    timeout=float(ep_raw.get("timeout", 30.0)),
                    max_retries=int(ep_raw.get("max_retries", 3)),
                    qps_limit=float(ep_raw.get("qps_limit", 10.0)),
                    max_concurrency=int(ep_raw.get("max_concurrency", 8)),
                    api_key_env=ep_raw.get(
                        "api_key_env", f"CAPFORGE_{name.upper()}_API_KEY"
                    ),
                )
            except ValueError as exc:
                raise ConfigError(f"backends.{name}: {exc}")

    try:
        rates = CostRates(**{k: float(v) for k, v in rates_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad rates section: {exc}")

    scores_path = _resolve(base, filter_raw.get("detector_scores_path"))
    if filter_raw.get("detector_scores_path") is not None and not scores_path.is_file():
        raise ConfigError(f"detector scores path does not exist: {scores_path}")

    manifest_path = _resolve(base, io_raw.get("manifest"))
    output_dir = _resolve(base, io_raw.get("output_dir")) or (base / "out")
    work_dir = _resolve(base, io_raw.get("work_dir")) or (output_dir / "work")

    return RunConfig(
        pipeline=pipeline,
        backend_mode=str(backends_raw.get("mode", "mock")),
        seed=seed,
        endpoints=endpoints,
        rates=rates,
        detector_scores_path=scores_path,
        manifest_path=manifest_path,
        output_dir=output_dir,
        work_dir=work_dir,
        base_dir=base,
    )
