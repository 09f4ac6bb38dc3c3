"""Shared domain model and configuration for all pipeline stages.

Every type here is an immutable value object: safe to share between
concurrent workers and to use as a dict key where hashable.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Optional, Sequence

Vec3 = tuple[float, float, float]


class CapforgeError(Exception):
    """Base class for all pipeline errors. ``code`` is a stable machine tag."""

    code = "error"

    def __init__(self, message: str = "", payload: Any = None):
        super().__init__(message or self.code)
        self.payload = payload


class ConfigError(CapforgeError):
    code = "config-error"


class LicenseClass(Enum):
    CC_BY = "CC BY"
    CC_BY_SA = "CC BY-SA"
    CC0 = "CC0"
    CC_BY_NC = "CC BY-NC"
    CC_BY_NC_SA = "CC BY-NC-SA"
    OTHER = "other"


# Normalized token sequences -> class. Version suffixes ("4.0", "1.0") are
# stripped before lookup, so "CC-BY 4.0" and "cc by" both land on CC_BY.
_LICENSE_TOKENS = {
    ("CC", "BY"): LicenseClass.CC_BY,
    ("CC", "BY", "SA"): LicenseClass.CC_BY_SA,
    ("CC0",): LicenseClass.CC0,
    ("CC", "0"): LicenseClass.CC0,
    ("CC", "BY", "NC"): LicenseClass.CC_BY_NC,
    ("CC", "BY", "NC", "SA"): LicenseClass.CC_BY_NC_SA,
    ("OTHER",): LicenseClass.OTHER,
}

_VERSION_TOKEN = re.compile(r"^\d+(\.\d+)*$")


def parse_license(raw: str) -> LicenseClass:
    """Total, case-insensitive license parser; unknown strings map to OTHER."""
    tokens = [t for t in re.split(r"[\s\-_/]+", raw.strip().upper()) if t]
    while tokens and _VERSION_TOKEN.match(tokens[-1]):
        tokens.pop()
    return _LICENSE_TOKENS.get(tuple(tokens), LicenseClass.OTHER)


def render_license(lic: LicenseClass) -> str:
    return lic.value


# Default admission set follows the filtering procedure text; the datasheet
# disagrees with itself on NC, so this stays configuration (see allowlist).
DEFAULT_LICENSE_ALLOWLIST = frozenset(
    {LicenseClass.CC_BY, LicenseClass.CC_BY_SA, LicenseClass.CC0}
)


@dataclass(frozen=True)
class CameraPose:
    """One camera placement: spherical angles plus distance and image size."""

    azimuth_deg: float
    elevation_deg: float
    radius: float
    resolution: int = 512

    def to_dict(self) -> dict[str, Any]:
        return {
            "azimuth_deg": self.azimuth_deg,
            "elevation_deg": self.elevation_deg,
            "radius": self.radius,
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CameraPose":
        return cls(
            azimuth_deg=float(d["azimuth_deg"]),
            elevation_deg=float(d["elevation_deg"]),
            radius=float(d["radius"]),
            resolution=int(d.get("resolution", 512)),
        )


class CaptionMode(Enum):
    STANDARD = "STANDARD"
    QA = "QA"


@dataclass(frozen=True)
class CandidateCaption:
    text: str
    view_index: int
    sample_index: int


@dataclass(frozen=True)
class ViewCaption:
    """The per-view winner: caption text plus its image-text cosine score."""

    text: str
    view_index: int
    cosine_score: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "view_index": self.view_index,
            "cosine_score": self.cosine_score,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ViewCaption":
        return cls(
            text=d["text"],
            view_index=int(d["view_index"]),
            cosine_score=float(d["cosine_score"]),
        )


@dataclass(frozen=True)
class FinalCaption:
    uid: str
    text: str
    source_view_captions: tuple[ViewCaption, ...] = ()
    mode: CaptionMode = CaptionMode.STANDARD

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "text": self.text,
            "source_view_captions": [v.to_dict() for v in self.source_view_captions],
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FinalCaption":
        return cls(
            uid=d["uid"],
            text=d["text"],
            source_view_captions=tuple(
                ViewCaption.from_dict(v) for v in d.get("source_view_captions", [])
            ),
            mode=CaptionMode(d.get("mode", "STANDARD")),
        )


@dataclass(frozen=True)
class AssetRecord:
    """One 3D asset: identity, license, bbox, and per-stage artifacts.

    ``captions`` holds the per-view selected captions (one per image);
    the consolidated object-level caption lives in ``final_caption``.
    Large artifacts are stored as path references, never inlined.
    """

    uid: str
    license: LicenseClass = LicenseClass.OTHER
    bbox_min: Vec3 = (0.0, 0.0, 0.0)
    bbox_max: Vec3 = (0.0, 0.0, 0.0)
    has_camera_info: bool = False
    image_paths: tuple[str, ...] = ()
    camera_poses: tuple[CameraPose, ...] = ()
    captions: tuple[str, ...] = ()
    point_cloud_ref: Optional[str] = None
    latent_code_ref: Optional[str] = None
    final_caption: Optional[FinalCaption] = None

    def with_results(
        self,
        captions: Sequence[str],
        final_caption: FinalCaption,
    ) -> "AssetRecord":
        return replace(self, captions=tuple(captions), final_caption=final_caption)

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "license": render_license(self.license),
            "bbox_min": list(self.bbox_min),
            "bbox_max": list(self.bbox_max),
            "has_camera_info": self.has_camera_info,
            "image_paths": list(self.image_paths),
            "camera_poses": [p.to_dict() for p in self.camera_poses],
            "captions": list(self.captions),
            "point_cloud_ref": self.point_cloud_ref,
            "latent_code_ref": self.latent_code_ref,
            "final_caption": self.final_caption.to_dict() if self.final_caption else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AssetRecord":
        final = d.get("final_caption")
        return cls(
            uid=d["uid"],
            license=parse_license(d.get("license", "other")),
            bbox_min=tuple(float(x) for x in d.get("bbox_min", (0.0, 0.0, 0.0))),
            bbox_max=tuple(float(x) for x in d.get("bbox_max", (0.0, 0.0, 0.0))),
            has_camera_info=bool(d.get("has_camera_info", False)),
            image_paths=tuple(d.get("image_paths", ())),
            camera_poses=tuple(
                CameraPose.from_dict(p) for p in d.get("camera_poses", ())
            ),
            captions=tuple(d.get("captions", ())),
            point_cloud_ref=d.get("point_cloud_ref"),
            latent_code_ref=d.get("latent_code_ref"),
            final_caption=FinalCaption.from_dict(final) if final else None,
        )


def validate_asset(record: AssetRecord) -> list[str]:
    """Return all invariant violations for one record; [] means valid.

    Total: never raises. Uid *uniqueness* is a manifest-level rule and is
    checked by the store on write, not here.
    """
    violations: list[str] = []
    if not record.uid:
        violations.append("uid empty")
    if record.image_paths and record.camera_poses and len(record.image_paths) != len(
        record.camera_poses
    ):
        violations.append("images/cameras length mismatch")
    for axis, (lo, hi) in enumerate(zip(record.bbox_min, record.bbox_max)):
        if lo > hi:
            violations.append(f"bbox_min exceeds bbox_max on axis {axis}")
    for i, pose in enumerate(record.camera_poses):
        if pose.resolution <= 0:
            violations.append(f"camera_poses[{i}].resolution not positive")
        if pose.radius <= 0:
            violations.append(f"camera_poses[{i}].radius not positive")
        if not (0.0 <= pose.azimuth_deg < 360.0):
            violations.append(f"camera_poses[{i}].azimuth_deg outside [0,360)")
        if not (-90.0 < pose.elevation_deg < 90.0):
            violations.append(f"camera_poses[{i}].elevation_deg outside (-90,90)")
    for i, text in enumerate(record.captions):
        if not text.strip():
            violations.append(f"captions[{i}] empty after trim")
    return violations


# The consolidation prompt, reproduced byte-for-byte. {captions} is replaced
# with the selected captions joined by ", ".
DEFAULT_SUMMARY_PROMPT_TEMPLATE = (
    "Given a set of descriptions about the same 3D object, distill these "
    "descriptions into one concise caption. The descriptions are as follows: "
    "'{captions}'. Avoid describing background, surface, and posture. "
    "The caption should be:"
)

DEFAULT_QA_PROMPT_1 = "Question: what object is in this image? Answer:"
DEFAULT_QA_PROMPT_2 = "Question: what is the structure and geometry of this <object>?"


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for a whole pipeline run; hashed for checkpoint compatibility."""

    views_per_object: int = 8
    samples_per_view: int = 5
    selection_embedding_dim: int = 512
    detector_threshold: float = 0.9
    license_allowlist: frozenset[LicenseClass] = DEFAULT_LICENSE_ALLOWLIST
    qa_mode: bool = False
    summary_prompt_template: str = DEFAULT_SUMMARY_PROMPT_TEMPLATE
    qa_prompt_1: str = DEFAULT_QA_PROMPT_1
    qa_prompt_2: str = DEFAULT_QA_PROMPT_2
    blocklist_path: Optional[str] = None
    nucleus_p: float = 0.9
    above_elevation_deg: float = 20.0
    below_elevation_deg: float = -10.0
    camera_radius: float = 2.2
    render_resolution: int = 512
    lighting_preset: str = "key-fill-rim"
    seed: int = 0

    def __post_init__(self):
        if self.views_per_object < 1:
            raise ConfigError("views_per_object must be >= 1")
        if self.samples_per_view < 1:
            raise ConfigError("samples_per_view must be >= 1")
        if self.selection_embedding_dim < 1:
            raise ConfigError("selection_embedding_dim must be >= 1")
        if not (0.0 <= self.detector_threshold <= 1.0):
            raise ConfigError("detector_threshold must be in [0,1]")

    def content_hash(self) -> str:
        """Digest of every field that affects pipeline output."""
        payload = {
            "views_per_object": self.views_per_object,
            "samples_per_view": self.samples_per_view,
            "selection_embedding_dim": self.selection_embedding_dim,
            "detector_threshold": self.detector_threshold,
            "license_allowlist": sorted(l.value for l in self.license_allowlist),
            "qa_mode": self.qa_mode,
            "summary_prompt_template": self.summary_prompt_template,
            "qa_prompt_1": self.qa_prompt_1,
            "qa_prompt_2": self.qa_prompt_2,
            "nucleus_p": self.nucleus_p,
            "seed": self.seed,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DetectorScores:
    """Externally produced face/NSFW detector scores for one asset."""

    uid: str
    face_score: Optional[float] = None
    nsfw_score: Optional[float] = None

    def __post_init__(self):
        for name, score in (("face_score", self.face_score), ("nsfw_score", self.nsfw_score)):
            if score is not None and not (0.0 <= score <= 1.0):
                raise ValueError(f"{name} outside [0,1]: {score}")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"uid": self.uid}
        if self.face_score is not None:
            d["face_score"] = self.face_score
        if self.nsfw_score is not None:
            d["nsfw_score"] = self.nsfw_score
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DetectorScores":
        face = d.get("face_score")
        nsfw = d.get("nsfw_score")
        return cls(
            uid=d["uid"],
            face_score=None if face is None else float(face),
            nsfw_score=None if nsfw is None else float(nsfw),
        )
