"""Per-view candidate generation, cosine-argmax caption selection, prompt
assembly, consolidation, QA mode, and the resumable end-to-end driver.

The driver quarantines failing assets instead of aborting: a large batch
must survive individual bad inputs. Output ordering is always sorted by
uid, so results are independent of worker scheduling.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .backends.protocol import (
    BackendSet,
    EmbeddingVector,
    SummaryBackend,
    SummarizerRefusedError,
    TokenUsage,
)
from .core import (
    AssetRecord,
    CandidateCaption,
    CapforgeError,
    CaptionMode,
    ConfigError,
    DetectorScores,
    FinalCaption,
    PipelineConfig,
    ViewCaption,
)
from .costs import CostBreakdown, CostRates, pipeline_cost
from .filtering import (
    BLOCKLIST_STAGE,
    DETECTOR_STAGE,
    LICENSE_STAGE,
    RENDER_INFO_STAGE,
    Blocklist,
    FilterReport,
    blocklist_filter,
    detector_filter,
    license_filter,
    load_blocklist,
    render_info_filter,
)

logger = logging.getLogger(__name__)

CAPTION_STAGE = "captioning"


class ZeroVectorError(CapforgeError):
    code = "zero-vector"


class DimMismatchError(CapforgeError):
    code = "dim-mismatch"


class NoCandidatesError(CapforgeError):
    code = "no-candidates"


class BadTemplateError(CapforgeError):
    code = "bad-template"


class CheckpointMismatchError(CapforgeError):
    code = "checkpoint-config-mismatch"


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimMismatchError(f"dim-mismatch: {a.dim} vs {b.dim}")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("zero-vector: cosine undefined for zero-norm input")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class SelectionResult:
    chosen: ViewCaption
    rejected: tuple[tuple[CandidateCaption, float], ...]


def select_caption(
    candidates: Sequence[CandidateCaption],
    image_emb: EmbeddingVector,
    text_embs: Sequence[EmbeddingVector],
) -> SelectionResult:
    """Argmax of cosine(image, candidate text); exact ties go to the lowest
    list index, which keeps golden runs reproducible."""
    if not candidates:
        raise NoCandidatesError("no-candidates: nothing to select from")
    if len(candidates) != len(text_embs):
        raise DimMismatchError(
            f"dim-mismatch: {len(candidates)} candidates vs {len(text_embs)} embeddings"
        )
    scores = [cosine_similarity(image_emb, emb) for emb in text_embs]
    best = int(np.argmax(scores))
    chosen = ViewCaption(
        text=candidates[best].text,
        view_index=candidates[best].view_index,
        cosine_score=scores[best],
    )
    rejected = tuple(
        (cand, score)
        for i, (cand, score) in enumerate(zip(candidates, scores))
        if i != best
    )
    return SelectionResult(chosen=chosen, rejected=rejected)


def build_summary_prompt(captions: Sequence[str], template: str) -> str:
    if "{captions}" not in template:
        raise BadTemplateError("bad-template: missing {captions} placeholder")
    if not captions:
        raise NoCandidatesError("no-candidates: need at least one caption")
    return template.replace("{captions}", ", ".join(captions))


_NEWLINE_RUN = re.compile(r"\s*[\r\n]+\s*")


def postprocess_summary(text: str) -> str:
    """Trim, collapse newlines to spaces, strip one layer of wrapping quotes."""
    s = _NEWLINE_RUN.sub(" ", text.strip())
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        s = s[1:-1].strip()
    return s


def consolidate(
    uid: str,
    selected: Sequence[ViewCaption],
    summarizer: SummaryBackend,
    template: str,
    mode: CaptionMode = CaptionMode.STANDARD,
) -> tuple[FinalCaption, TokenUsage]:
    """Summarize the selected per-view captions into one object caption.

    A summarizer refusal propagates as SummarizerRefusedError; the driver
    turns it into a needs-review quarantine rather than dropping the asset.
    """
    if not selected:
        raise NoCandidatesError("no-candidates: need at least one view caption")
    prompt = build_summary_prompt([v.text for v in selected], template)
    result = summarizer.summarize(prompt)
    final = FinalCaption(
        uid=uid,
        text=postprocess_summary(result.text),
        source_view_captions=tuple(selected),
        mode=mode,
    )
    return final, result.usage


def _qa_view_candidates(
    ref: str, k: int, backends: BackendSet, config: PipelineConfig
) -> tuple[list[CandidateCaption], bool]:
    """One view's two-stage QA candidates; returns (candidates, fell_back)."""
    n = config.samples_per_view
    answer = backends.captioner.caption(
        ref, 1, nucleus_p=config.nucleus_p, prompt=config.qa_prompt_1
    )[0].strip()
    if not answer:
        texts = backends.captioner.caption(ref, n, nucleus_p=config.nucleus_p)
        fell_back = True
    else:
        stage2 = config.qa_prompt_2.replace("<object>", answer)
        texts = backends.captioner.caption(
            ref, n, nucleus_p=config.nucleus_p, prompt=stage2
        )
        fell_back = False
    candidates = [
        CandidateCaption(text=t, view_index=k, sample_index=i) for i, t in enumerate(texts)
    ]
    return candidates, fell_back


def qa_caption(
    image_refs: Sequence[str],
    backends: BackendSet,
    config: PipelineConfig,
) -> tuple[list[list[CandidateCaption]], list[int]]:
    """Two-stage QA candidates: identify the object, then ask about its
    structure and geometry. Views whose stage-1 answer comes back empty fall
    back to standard captioning and are flagged."""
    per_view: list[list[CandidateCaption]] = []
    fallback_views: list[int] = []
    for k, ref in enumerate(image_refs):
        candidates, fell_back = _qa_view_candidates(ref, k, backends, config)
        if fell_back:
            fallback_views.append(k)
        per_view.append(candidates)
    return per_view, fallback_views


def standard_caption(
    image_refs: Sequence[str],
    backends: BackendSet,
    config: PipelineConfig,
) -> list[list[CandidateCaption]]:
    per_view = []
    for k, ref in enumerate(image_refs):
        texts = backends.captioner.caption(ref, config.samples_per_view, nucleus_p=config.nucleus_p)
        per_view.append(
            [CandidateCaption(text=t, view_index=k, sample_index=i) for i, t in enumerate(texts)]
        )
    return per_view


def derive_image_refs(asset: AssetRecord, views: int) -> list[str]:
    """Use the asset's renders when they match the rig size, else the
    renderer's output convention <uid>/<view>.png."""
    if asset.image_paths:
        if len(asset.image_paths) != views:
            raise CapforgeError(
                f"image-count-mismatch: {len(asset.image_paths)} images, {views} views"
            )
        return list(asset.image_paths)
    return [f"{asset.uid}/{k}.png" for k in range(views)]


@dataclass(frozen=True)
class AssetResult:
    uid: str
    view_captions: tuple[ViewCaption, ...]
    final: FinalCaption
    usage: TokenUsage
    qa_fallback_views: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "view_captions": [v.to_dict() for v in self.view_captions],
            "final": self.final.to_dict(),
            "usage": self.usage.to_dict(),
            "qa_fallback_views": list(self.qa_fallback_views),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssetResult":
        return cls(
            uid=d["uid"],
            view_captions=tuple(ViewCaption.from_dict(v) for v in d["view_captions"]),
            final=FinalCaption.from_dict(d["final"]),
            usage=TokenUsage(**d["usage"]),
            qa_fallback_views=tuple(d.get("qa_fallback_views", ())),
        )


def _process_view(
    ref: str, k: int, config: PipelineConfig, backends: BackendSet
) -> tuple[ViewCaption, bool]:
    """caption -> embed -> select for a single view."""
    if config.qa_mode:
        candidates, fell_back = _qa_view_candidates(ref, k, backends, config)
    else:
        texts = backends.captioner.caption(
            ref, config.samples_per_view, nucleus_p=config.nucleus_p
        )
        candidates = [
            CandidateCaption(text=t, view_index=k, sample_index=i)
            for i, t in enumerate(texts)
        ]
        fell_back = False
    image_emb = backends.embedder.embed_image(ref)
    text_embs = [backends.embedder.embed_text(c.text) for c in candidates]
    return select_caption(candidates, image_emb, text_embs).chosen, fell_back


def process_asset(
    asset: AssetRecord,
    config: PipelineConfig,
    backends: BackendSet,
    view_workers: int = 4,
) -> AssetResult:
    """caption -> select -> consolidate for one asset.

    Views run concurrently (the backend rate limiter and concurrency gate
    still bound global pressure); results are ordered by view index, so the
    outcome does not depend on scheduling.
    """
    refs = derive_image_refs(asset, config.views_per_object)
    mode = CaptionMode.QA if config.qa_mode else CaptionMode.STANDARD
    workers = max(1, min(view_workers, len(refs)))
    if workers == 1:
        per_view = [_process_view(ref, k, config, backends) for k, ref in enumerate(refs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_process_view, ref, k, config, backends)
                for k, ref in enumerate(refs)
            ]
            per_view = [f.result() for f in futures]
    selected = [chosen for chosen, _ in per_view]
    fallback = [k for k, (_, fell_back) in enumerate(per_view) if fell_back]
    final, usage = consolidate(
        asset.uid, selected, backends.summarizer, config.summary_prompt_template, mode
    )
    return AssetResult(
        uid=asset.uid,
        view_captions=tuple(selected),
        final=final,
        usage=usage,
        qa_fallback_views=tuple(fallback),
    )


class CheckpointStage:
    CAPTIONED = "CAPTIONED"
    SELECTED = "SELECTED"
    CONSOLIDATED = "CONSOLIDATED"
    FILTERED = "FILTERED"


@dataclass
class Checkpoint:
    content_hash: str
    stage: str = CheckpointStage.CONSOLIDATED
    completed_uids: set[str] = field(default_factory=set)

    def save(self, path: Path) -> None:
        payload = {
            "format_version": 1,
            "config_hash": self.content_hash,
            "stage": self.stage,
            "completed_uids": sorted(self.completed_uids),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=0, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path, expected_hash: str) -> "Checkpoint":
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("config_hash") != expected_hash:
            raise CheckpointMismatchError(
                "checkpoint-config-mismatch: refusing to resume with a different config"
            )
        return cls(
            content_hash=expected_hash,
            stage=data.get("stage", CheckpointStage.CONSOLIDATED),
            completed_uids=set(data.get("completed_uids", [])),
        )


@dataclass(frozen=True)
class QuarantineRecord:
    uid: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {"uid": self.uid, "stage": self.stage, "reason": self.reason}


@dataclass
class PipelineResult:
    records: list[AssetRecord]
    report: FilterReport
    costs: Optional[CostBreakdown]
    quarantines: list[QuarantineRecord]
    usage: TokenUsage
    avg_prompt_tokens: Optional[float]
    finished: bool
    completed_count: int


def _load_journal(path: Path) -> dict[str, AssetResult]:
    results: dict[str, AssetResult] = {}
    if not path.exists():
        return results
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                result = AssetResult.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError):
                continue  # torn tail write; the asset will simply be redone
            results[result.uid] = result
    return results


def run_pipeline(
    assets: Sequence[AssetRecord],
    config: PipelineConfig,
    backends: BackendSet,
    *,
    rates: Optional[CostRates] = None,
    detector_scores: Optional[Mapping[str, DetectorScores]] = None,
    blocklist: Optional[Blocklist] = None,
    work_dir: Optional[str | Path] = None,
    workers: int = 4,
    view_workers: int = 4,
    max_completed: Optional[int] = None,
    checkpoint_every: int = 8,
) -> PipelineResult:
    """End-to-end driver: admission filters, caption/select/consolidate in a
    bounded worker pool, detector and blocklist stages, cost accounting.

    With a work_dir the run is resumable: per-asset results go to an
    append-only journal and completed uids to an atomically replaced
    checkpoint. Resuming with a different config hash is refused. A resumed
    run produces output identical to an uninterrupted one.
    """
    uids = [a.uid for a in assets]
    if len(set(uids)) != len(uids):
        raise ConfigError("manifest contains duplicate uids")
    if blocklist is None:
        blocklist = (
            load_blocklist(config.blocklist_path) if config.blocklist_path else Blocklist([])
        )
    scores: Mapping[str, DetectorScores] = detector_scores or {}

    report = FilterReport()
    current = sorted(assets, key=lambda a: a.uid)
    size = len(current)
    current, removed = license_filter(current, config.license_allowlist)
    report.add_stage(LICENSE_STAGE, size, [(a.uid, r) for a, r in removed])
    size = len(current)
    current, removed = render_info_filter(current)
    report.add_stage(RENDER_INFO_STAGE, size, [(a.uid, r) for a, r in removed])
    admitted = current

    checkpoint: Optional[Checkpoint] = None
    journal_path: Optional[Path] = None
    quarantine_path: Optional[Path] = None
    results: dict[str, AssetResult] = {}
    if work_dir is not None:
        work = Path(work_dir)
        work.mkdir(parents=True, exist_ok=True)
        ckpt_path = work / "checkpoint.json"
        journal_path = work / "journal.jsonl"
        quarantine_path = work / "quarantine.jsonl"
        if ckpt_path.exists():
            checkpoint = Checkpoint.load(ckpt_path, config.content_hash())
        else:
            checkpoint = Checkpoint(content_hash=config.content_hash())
        results = _load_journal(journal_path)
        checkpoint.completed_uids |= set(results)

    quarantines: list[QuarantineRecord] = []
    pending = [a for a in admitted if a.uid not in results]
    completed_new = 0

    if pending:
        journal_fh = open(journal_path, "a", encoding="utf-8") if journal_path else None

        def record_outcome(fut, asset: AssetRecord) -> None:
            nonlocal completed_new
            try:
                result = fut.result()
            except SummarizerRefusedError as exc:
                quarantines.append(
                    QuarantineRecord(asset.uid, "consolidate", f"needs-review: {exc}")
                )
                return
            except Exception as exc:  # per-asset isolation: quarantine, don't abort
                quarantines.append(QuarantineRecord(asset.uid, CAPTION_STAGE, str(exc)))
                return
            results[result.uid] = result
            completed_new += 1
            if journal_fh:
                journal_fh.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
                journal_fh.flush()
            if checkpoint is not None:
                checkpoint.completed_uids.add(result.uid)
                if completed_new % checkpoint_every == 0:
                    checkpoint.save(ckpt_path)

        try:
            with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
                futures = {
                    pool.submit(process_asset, asset, config, backends, view_workers): asset
                    for asset in pending
                }
                outstanding = set(futures)
                interrupted = False
                while outstanding and not interrupted:
                    done, outstanding = wait(outstanding, return_when=FIRST_COMPLETED)
                    for fut in done:
                        record_outcome(fut, futures[fut])
                        if max_completed is not None and completed_new >= max_completed:
                            # Budget reached: stop recording immediately.
                            # Unrecorded in-flight work is redone on resume,
                            # same as after a real kill.
                            interrupted = True
                            break
                    if interrupted:
                        for fut in outstanding:
                            fut.cancel()
                        outstanding = set()
        finally:
            if journal_fh:
                journal_fh.close()
        if checkpoint is not None:
            checkpoint.save(ckpt_path)

    processed = set(results) | {q.uid for q in quarantines}
    if any(a.uid not in processed for a in admitted):
        # Interrupted before the batch finished; resume with the same
        # work_dir to complete it.
        return PipelineResult(
            records=[],
            report=report,
            costs=None,
            quarantines=sorted(quarantines, key=lambda q: q.uid),
            usage=TokenUsage(),
            avg_prompt_tokens=None,
            finished=False,
            completed_count=completed_new,
        )

    # Captioning row: quarantined assets leave the chain here, keeping the
    # stage arithmetic (input_k = output_{k-1}) intact.
    quarantined_uids = {q.uid for q in quarantines}
    captioned = [a for a in admitted if a.uid in results]
    report.add_stage(
        CAPTION_STAGE,
        len(admitted),
        sorted(((q.uid, q.reason) for q in quarantines), key=lambda p: p[0]),
    )

    size = len(captioned)
    kept, removed_pairs = [], []
    missing_scores = 0
    for asset in captioned:
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
    report.add_stage(DETECTOR_STAGE, size, removed_pairs)

    size = len(kept)
    survivors, removed_pairs = [], []
    for asset in kept:
        verdict = blocklist_filter(results[asset.uid].final.text, blocklist)
        if verdict.removed:
            removed_pairs.append(
                (asset.uid, f"blocked terms: {', '.join(verdict.matched_terms)}")
            )
        else:
            survivors.append(asset)
    report.add_stage(BLOCKLIST_STAGE, size, removed_pairs)

    if quarantine_path is not None:
        with open(quarantine_path, "w", encoding="utf-8") as fh:
            for q in sorted(quarantines, key=lambda x: x.uid):
                fh.write(json.dumps(q.to_dict(), sort_keys=True) + "\n")

    usage_total = TokenUsage()
    for result in results.values():
        usage_total = usage_total + result.usage
    avg_tokens = (
        usage_total.prompt_tokens / len(results) if results else None
    )
    costs = pipeline_cost(config, rates, measured_avg_tokens=avg_tokens)

    out_records = [
        a.with_results(
            captions=[v.text for v in results[a.uid].view_captions],
            final_caption=results[a.uid].final,
        )
        for a in sorted(survivors, key=lambda a: a.uid)
    ]

    if checkpoint is not None:
        checkpoint.stage = CheckpointStage.FILTERED
        checkpoint.save(ckpt_path)

    return PipelineResult(
        records=out_records,
        report=report,
        costs=costs,
        quarantines=sorted(quarantines, key=lambda q: q.uid),
        usage=usage_total,
        avg_prompt_tokens=avg_tokens,
        finished=True,
        completed_count=completed_new,
    )
