"""Crowdsourced caption and A/B export ingestion: cleaning rules, scam-worker
detection, and score re-orientation for the A/B aggregator.

Cleaning applies its rules in a fixed order with first-match attribution, so
every removed caption has exactly one primary reason and the whole pass is
idempotent.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

REASON_BANNED = "banned-worker"
REASON_TOO_SHORT = "too-short"
REASON_DUPLICATE = "duplicate"
REASON_MASS_REPEAT = "mass-repeat"

MASS_REPEAT_LIMIT = 30  # exact text appearing more than this many times is scam-like


@dataclass(frozen=True)
class CrowdCaption:
    uid: str
    worker_id: str
    text: str
    timestamp: float = 0.0


@dataclass(frozen=True)
class RemovedCaption:
    caption: CrowdCaption
    reason: str


def clean_captions(
    raw: Sequence[CrowdCaption], banned: Iterable[str] = ()
) -> tuple[list[CrowdCaption], list[RemovedCaption]]:
    """Apply, in order: banned-worker removal, <=1-word removal, per-object
    duplicate removal (keep first by timestamp), and dataset-wide mass-repeat
    removal (exact text appearing more than 30 times). Each later rule only
    sees the survivors of the earlier ones."""
    banned_set = set(banned)
    removed: list[RemovedCaption] = []

    survivors = []
    for cap in raw:
        if cap.worker_id in banned_set:
            removed.append(RemovedCaption(cap, REASON_BANNED))
        else:
            survivors.append(cap)

    current, survivors = survivors, []
    for cap in current:
        if len(cap.text.split()) <= 1:
            removed.append(RemovedCaption(cap, REASON_TOO_SHORT))
        else:
            survivors.append(cap)

    seen: set[tuple[str, str]] = set()
    current, survivors = sorted(survivors, key=lambda c: c.timestamp), []
    for cap in current:
        key = (cap.uid, cap.text)
        if key in seen:
            removed.append(RemovedCaption(cap, REASON_DUPLICATE))
        else:
            seen.add(key)
            survivors.append(cap)

    counts = Counter(cap.text for cap in survivors)
    current, survivors = survivors, []
    for cap in current:
        if counts[cap.text] > MASS_REPEAT_LIMIT:
            removed.append(RemovedCaption(cap, REASON_MASS_REPEAT))
        else:
            survivors.append(cap)

    return survivors, removed


@dataclass(frozen=True)
class WorkerResponse:
    """One A/B judgment: the 1-5 score, and whether the picked caption was
    the shorter one (None when undecided or equal-length)."""

    score: int
    chose_shorter: Optional[bool] = None


@dataclass(frozen=True)
class WorkerRecord:
    worker_id: str
    responses: tuple[WorkerResponse, ...] = ()
    banned: bool = False
    ban_reason: Optional[str] = None

    def __post_init__(self):
        if self.banned and not self.ban_reason:
            raise ValueError("banned worker needs a ban_reason")


FLAG_CONSTANT = "constant-answer"
FLAG_LENGTH_BIAS = "length-bias"


@dataclass(frozen=True)
class FlaggedWorker:
    worker_id: str
    reason: str
    detail: str


def detect_scam_workers(
    records: Sequence[WorkerRecord],
    min_responses: int = 30,
    constancy_threshold: float = 0.95,
    length_bias_threshold: float = 0.95,
) -> list[FlaggedWorker]:
    """Flag workers who always pick the same number, or nearly always pick
    the shorter (or longer) caption."""
    if min_responses < 1:
        raise ValueError("min_responses must be >= 1")
    flagged: list[FlaggedWorker] = []
    for record in records:
        n = len(record.responses)
        if n < min_responses:
            continue
        score_counts = Counter(r.score for r in record.responses)
        top_score, top_count = score_counts.most_common(1)[0]
        if top_count / n >= constancy_threshold:
            flagged.append(
                FlaggedWorker(
                    worker_id=record.worker_id,
                    reason=FLAG_CONSTANT,
                    detail=f"answered {top_score} on {top_count}/{n} tasks",
                )
            )
            continue
        decided = [r for r in record.responses if r.chose_shorter is not None]
        if decided:
            shorter = sum(1 for r in decided if r.chose_shorter)
            frac_shorter = shorter / len(decided)
            if frac_shorter >= length_bias_threshold:
                flagged.append(
                    FlaggedWorker(
                        record.worker_id,
                        FLAG_LENGTH_BIAS,
                        f"chose shorter {shorter}/{len(decided)} times",
                    )
                )
            elif 1 - frac_shorter >= length_bias_threshold:
                flagged.append(
                    FlaggedWorker(
                        record.worker_id,
                        FLAG_LENGTH_BIAS,
                        f"chose longer {len(decided) - shorter}/{len(decided)} times",
                    )
                )
    return flagged


def orient_score(raw_score: int, candidate_on_left: bool) -> int:
    """Map a raw judgment (1 = left much better) so the candidate method's
    favorable scores are 4 and 5. The left mapping s -> 6-s is an involution
    and keeps ties at 3."""
    return 6 - raw_score if candidate_on_left else raw_score


@dataclass
class AbImportResult:
    # (candidate, opponent) -> oriented scores, in file order
    experiments: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    malformed: int = 0
    dropped_banned: int = 0

    def scores_for(self, candidate: str, opponent: str) -> list[int]:
        return self.experiments.get((candidate, opponent), [])


AB_COLUMNS = ("task_id", "uid", "left_method", "right_method", "score", "worker_id")


def import_ab_export(
    path: str | Path,
    candidate: Optional[str] = None,
    banned: Iterable[str] = (),
) -> AbImportResult:
    """Read a crowd A/B export (CSV with the columns task_id, uid,
    left_method, right_method, score, worker_id) and re-orient scores.

    Rows are grouped by method pair. Each pair's candidate is ``candidate``
    when it participates, else the lexicographically smaller method name.
    Malformed rows are skipped and counted; banned workers' rows dropped.
    """
    banned_set = set(banned)
    result = AbImportResult()
    grouped: dict[tuple[str, str], list[int]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                left = row["left_method"].strip()
                right = row["right_method"].strip()
                worker = row["worker_id"].strip()
                score = int(row["score"])
            except (KeyError, TypeError, ValueError, AttributeError):
                result.malformed += 1
                continue
            if not left or not right or not (1 <= score <= 5):
                result.malformed += 1
                continue
            if worker in banned_set:
                result.dropped_banned += 1
                continue
            if candidate is not None and candidate in (left, right):
                cand = candidate
            else:
                cand = min(left, right)
            opponent = right if cand == left else left
            grouped[(cand, opponent)].append(orient_score(score, cand == left))
    result.experiments = dict(grouped)
    return result


def load_crowd_captions(path: str | Path) -> list[CrowdCaption]:
    """CSV with columns uid, worker_id, text, timestamp."""
    captions = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            captions.append(
                CrowdCaption(
                    uid=row["uid"],
                    worker_id=row["worker_id"],
                    text=row["text"],
                    timestamp=float(row.get("timestamp") or 0.0),
                )
            )
    return captions
