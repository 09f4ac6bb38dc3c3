"""
Crowd export cleaning and scam detection
========================================

Cleaning rules applied in order (banned worker, too-short, per-object
duplicate, dataset-wide mass repeat), plus worker-behavior flags and A/B
score orientation.
"""

from capforge import CrowdCaption, WorkerRecord, WorkerResponse, clean_captions, detect_scam_workers
from capforge.crowd import orient_score

rows = (
    [CrowdCaption(uid="u1", worker_id="banned-guy", text="a lovely chair", timestamp=1)]
    + [CrowdCaption(uid="u2", worker_id="w1", text="chair", timestamp=2)]
    + [
        CrowdCaption(uid="u3", worker_id="w2", text="a wooden table", timestamp=3),
        CrowdCaption(uid="u3", worker_id="w3", text="a wooden table", timestamp=4),
    ]
    + [
        CrowdCaption(uid=f"bulk-{i}", worker_id="w4", text="nice object", timestamp=5 + i)
        for i in range(35)
    ]
)
kept, removed = clean_captions(rows, banned={"banned-guy"})
print(f"kept {len(kept)}, removed {len(removed)}")
for r in removed[:5]:
    print(f"  {r.caption.uid:8s} {r.reason:14s} {r.caption.text!r}")

# Scam patterns: constant answers, or always picking one length.
workers = [
    WorkerRecord("steady", tuple(WorkerResponse(score=3) for _ in range(60))),
    WorkerRecord(
        "long-lover",
        tuple(WorkerResponse(score=4, chose_shorter=False) for _ in range(58))
        + (WorkerResponse(score=2, chose_shorter=True),),
    ),
    WorkerRecord(
        "honest",
        tuple(WorkerResponse(score=1 + i % 5, chose_shorter=i % 2 == 0) for i in range(60)),
    ),
]
print("\nflagged workers:")
for flag in detect_scam_workers(workers, min_responses=30):
    print(f"  {flag.worker_id}: {flag.reason} ({flag.detail})")

# Raw A/B scores are oriented so the candidate's wins are 4s and 5s:
# 1 means "left much better", so a candidate shown on the left flips.
print("\nraw 1 with candidate on the left ->", orient_score(1, candidate_on_left=True))
print("raw 4 with candidate on the right ->", orient_score(4, candidate_on_left=False))
