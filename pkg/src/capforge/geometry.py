"""Asset normalization and the multi-view camera rig.

These are pure functions: they compute transforms and camera placements and
emit render plans for an external renderer. No rasterization happens here;
the renderer consumes the plan file and writes ``<outdir>/<uid>/<view>.png``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import (
    AssetRecord,
    CameraPose,
    CapforgeError,
    PipelineConfig,
    Vec3,
    validate_asset,
)


class DegenerateExtentError(CapforgeError):
    code = "degenerate-extent"


class RigTooSmallError(CapforgeError):
    code = "rig-too-small"


@dataclass(frozen=True)
class NormalizationTransform:
    """Uniform scale + translation mapping a bbox into the centered unit cube.

    Application order is scale first, then translate: p' = scale * p + translation.
    The transformed bbox is centered at the origin with max extent exactly 1,
    i.e. contained in [-0.5, 0.5]^3.
    """

    scale: float
    translation: Vec3

    def apply(self, point: Sequence[float]) -> Vec3:
        return tuple(self.scale * p + t for p, t in zip(point, self.translation))


def normalize_to_unit_cube(bbox_min: Vec3, bbox_max: Vec3) -> NormalizationTransform:
    """Transform placing the bbox center at the origin with max extent 1."""
    extents = [hi - lo for lo, hi in zip(bbox_min, bbox_max)]
    max_extent = max(extents)
    if max_extent <= 0.0:
        raise DegenerateExtentError(
            f"degenerate-extent: bbox {bbox_min}..{bbox_max} has no positive extent"
        )
    scale = 1.0 / max_extent
    center = [(lo + hi) / 2.0 for lo, hi in zip(bbox_min, bbox_max)]
    translation = tuple(-scale * c for c in center)
    return NormalizationTransform(scale=scale, translation=translation)


def generate_camera_rig(config: PipelineConfig) -> list[CameraPose]:
    """Evenly spaced azimuths with exactly min(2, M) views below the object.

    The two below views sit nearest azimuths 90 and 270 so the rig stays
    symmetric; everything else looks slightly down from above.
    """
    m = config.views_per_object
    if m < 2:
        raise RigTooSmallError(f"rig-too-small: need at least 2 views, got {m}")
    if m == 2:
        below = {0, 1}
    else:
        below = {int(m / 4 + 0.5) % m, int(3 * m / 4 + 0.5) % m}
    poses = []
    for k in range(m):
        elevation = (
            config.below_elevation_deg if k in below else config.above_elevation_deg
        )
        poses.append(
            CameraPose(
                azimuth_deg=k * 360.0 / m,
                elevation_deg=elevation,
                radius=config.camera_radius,
                resolution=config.render_resolution,
            )
        )
    return poses


@dataclass(frozen=True)
class RenderPlan:
    uid: str
    transform: NormalizationTransform
    poses: tuple[CameraPose, ...]
    resolution: int = 512
    lighting_preset: str = "key-fill-rim"

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "scale": self.transform.scale,
            "translation": list(self.transform.translation),
            "poses": [
                {
                    "azimuth_deg": p.azimuth_deg,
                    "elevation_deg": p.elevation_deg,
                    "radius": p.radius,
                }
                for p in self.poses
            ],
            "resolution": self.resolution,
            "lighting_preset": self.lighting_preset,
        }


@dataclass(frozen=True)
class SkippedAsset:
    uid: str
    reason: str


def emit_render_plan(
    assets: Iterable[AssetRecord], config: PipelineConfig
) -> tuple[list[RenderPlan], list[SkippedAsset]]:
    """One plan per asset; degenerate or invalid assets are skipped, not fatal."""
    rig = tuple(generate_camera_rig(config))
    plans: list[RenderPlan] = []
    skipped: list[SkippedAsset] = []
    for asset in assets:
        violations = validate_asset(asset)
        if violations:
            skipped.append(SkippedAsset(uid=asset.uid, reason="; ".join(violations)))
            continue
        try:
            transform = normalize_to_unit_cube(asset.bbox_min, asset.bbox_max)
        except DegenerateExtentError as exc:
            skipped.append(SkippedAsset(uid=asset.uid, reason=str(exc)))
            continue
        plans.append(
            RenderPlan(
                uid=asset.uid,
                transform=transform,
                poses=rig,
                resolution=config.render_resolution,
                lighting_preset=config.lighting_preset,
            )
        )
    return plans, skipped


def render_plans_to_jsonl(plans: Iterable[RenderPlan]) -> str:
    """Line-delimited plan records; byte-stable for identical inputs."""
    lines = [json.dumps(p.to_dict(), sort_keys=True, separators=(",", ":")) for p in plans]
    return "".join(line + "\n" for line in lines)
