"""Admission chain: license allowlist, camera-info check, detector-score
thresholds, caption blocklist; plus the audit bookkeeping for each stage.

Stage predicates are pure and per-asset; the chain applies them in a fixed
order and records, for every stage, input count, removed count, output
count, and per-asset rejection reasons.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import (
    AssetRecord,
    ConfigError,
    DetectorScores,
    LicenseClass,
    PipelineConfig,
    render_license,
)

logger = logging.getLogger(__name__)

LICENSE_STAGE = "license"
RENDER_INFO_STAGE = "render-info"
DETECTOR_STAGE = "detector"
BLOCKLIST_STAGE = "blocklist"

CHAIN_STAGES = (LICENSE_STAGE, RENDER_INFO_STAGE, DETECTOR_STAGE, BLOCKLIST_STAGE)


@dataclass(frozen=True)
class StageCount:
    stage: str
    input: int
    removed: int
    output: int

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "input": self.input,
            "removed": self.removed,
            "output": self.output,
        }


@dataclass
class FilterReport:
    stages: list[StageCount] = field(default_factory=list)
    rejections: dict[str, str] = field(default_factory=dict)

    def add_stage(self, stage: str, input_count: int, removed: Sequence[tuple[str, str]]):
        for uid, reason in removed:
            self.rejections[uid] = f"{stage}: {reason}"
        self.stages.append(
            StageCount(
                stage=stage,
                input=input_count,
                removed=len(removed),
                output=input_count - len(removed),
            )
        )

    @property
    def final_output(self) -> int:
        return self.stages[-1].output if self.stages else 0

    def to_records(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "rejections": dict(sorted(self.rejections.items())),
        }

    def format_table(self) -> str:
        lines = [f"{'stage':<12} {'input':>8} {'removed':>8} {'output':>8}"]
        for s in self.stages:
            lines.append(f"{s.stage:<12} {s.input:>8} {s.removed:>8} {s.output:>8}")
        return "\n".join(lines)


def license_filter(
    assets: Sequence[AssetRecord], allowlist: frozenset[LicenseClass]
) -> tuple[list[AssetRecord], list[tuple[AssetRecord, str]]]:
    if not allowlist:
        raise ConfigError("license allowlist must be non-empty")
    kept, removed = [], []
    for asset in assets:
        if asset.license in allowlist:
            kept.append(asset)
        else:
            removed.append((asset, f"license {render_license(asset.license)} not allowed"))
    return kept, removed


def render_info_filter(
    assets: Sequence[AssetRecord],
) -> tuple[list[AssetRecord], list[tuple[AssetRecord, str]]]:
    kept, removed = [], []
    for asset in assets:
        if asset.has_camera_info:
            kept.append(asset)
        else:
            removed.append((asset, "insufficient camera information"))
    return kept, removed


@dataclass(frozen=True)
class DetectorVerdict:
    removed: bool
    reason: str = ""


def detector_filter(scores: Optional[DetectorScores], threshold: float) -> DetectorVerdict:
    """Removed iff any detector score meets the threshold (inclusive).
    Absent scores count as 0."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError("threshold must be in [0,1]")
    if scores is None:
        return DetectorVerdict(removed=False)
    face = scores.face_score if scores.face_score is not None else 0.0
    nsfw = scores.nsfw_score if scores.nsfw_score is not None else 0.0
    if face >= threshold:
        return DetectorVerdict(removed=True, reason=f"face_score {face} >= {threshold}")
    if nsfw >= threshold:
        return DetectorVerdict(removed=True, reason=f"nsfw_score {nsfw} >= {threshold}")
    return DetectorVerdict(removed=False)


@dataclass(frozen=True)
class BlocklistVerdict:
    removed: bool
    matched_terms: tuple[str, ...] = ()


class Blocklist:
    """Case-insensitive word-boundary matcher over a fixed term set.

    Word-boundary matching is deliberate: plain substring matching removes
    innocent captions ("grape" vs a blocked "rape").
    """

    def __init__(self, terms: Iterable[str]):
        self.terms = tuple(sorted({t.strip().lower() for t in terms if t.strip()}))
        self._patterns = [
            (term, re.compile(r"\b" + re.escape(term) + r"\b", re.IGNORECASE))
            for term in self.terms
        ]

    def check(self, caption: str) -> BlocklistVerdict:
        if not caption:
            return BlocklistVerdict(removed=False)
        matched = tuple(term for term, pat in self._patterns if pat.search(caption))
        return BlocklistVerdict(removed=bool(matched), matched_terms=matched)


def load_blocklist(path: str | Path) -> Blocklist:
    """One lowercase term per line, UTF-8, '#' comments."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read blocklist {path}: {exc}")
    terms = []
    for line in raw.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            terms.append(line)
    return Blocklist(terms)


def blocklist_filter(caption: str, blocklist: Blocklist) -> BlocklistVerdict:
    return blocklist.check(caption)


def apply_filter_chain(
    assets: Sequence[AssetRecord],
    captions: Mapping[str, str],
    scores: Mapping[str, DetectorScores],
    config: PipelineConfig,
    blocklist: Optional[Blocklist] = None,
) -> tuple[list[AssetRecord], FilterReport]:
    """Run license -> render-info -> detector -> blocklist, with bookkeeping.

    Assets missing a detector score are treated as scoreless (kept) and
    assets missing a caption as empty-captioned (kept); both are decisions
    the score/caption producers own, not this chain.
    """
    if blocklist is None:
        blocklist = (
            load_blocklist(config.blocklist_path) if config.blocklist_path else Blocklist([])
        )
    report = FilterReport()

    current, removed = license_filter(assets, config.license_allowlist)
    report.add_stage(LICENSE_STAGE, len(assets), [(a.uid, r) for a, r in removed])

    size = len(current)
    current, removed = render_info_filter(current)
    report.add_stage(RENDER_INFO_STAGE, size, [(a.uid, r) for a, r in removed])

    size = len(current)
    kept, removed_pairs = [], []
    missing_scores = 0
    for asset in current:
        asset_scores = scores.get(asset.uid)
        if asset_scores is None:
            missing_scores += 1
        verdict = detector_filter(asset_scores, config.detector_threshold)
        if verdict.removed:
            removed_pairs.append((asset.uid, verdict.reason))
        else:
            kept.append(asset)
    if missing_scores:
        logger.info("detector stage: %d assets had no scores, treated as 0", missing_scores)
    current = kept
    report.add_stage(DETECTOR_STAGE, size, removed_pairs)

    size = len(current)
    kept, removed_pairs = [], []
    for asset in current:
        verdict = blocklist.check(captions.get(asset.uid, ""))
        if verdict.removed:
            removed_pairs.append(
                (asset.uid, f"blocked terms: {', '.join(verdict.matched_terms)}")
            )
        else:
            kept.append(asset)
    current = kept
    report.add_stage(BLOCKLIST_STAGE, size, removed_pairs)

    return current, report


def load_detector_scores(path: str | Path) -> dict[str, DetectorScores]:
    """Line-delimited {uid, face_score?, nsfw_score?} records."""
    scores: dict[str, DetectorScores] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = DetectorScores.from_dict(json.loads(line))
            scores[rec.uid] = rec
    return scores
