"""
Admission chain
===============

License allowlist, camera-info check, detector thresholds, and caption
blocklist, with per-stage bookkeeping. The final membership is the
intersection of the stage predicates; the order only decides which stage a
rejection is attributed to.
"""

from capforge import AssetRecord, DetectorScores, LicenseClass, PipelineConfig
from capforge.filtering import Blocklist, apply_filter_chain, blocklist_filter, detector_filter

assets, captions, scores = [], {}, {}
for i in range(200):
    uid = f"item-{i:03d}"
    assets.append(
        AssetRecord(
            uid=uid,
            license=LicenseClass.CC_BY_NC if i < 30 else LicenseClass.CC_BY,
            bbox_min=(0, 0, 0),
            bbox_max=(1, 1, 1),
            has_camera_info=i % 10 != 3,
        )
    )
    scores[uid] = DetectorScores(uid=uid, face_score=0.95 if i % 25 == 0 else 0.05)
    captions[uid] = "a toy weapon on a stand" if i % 40 == 1 else "a ceramic vase"

kept, report = apply_filter_chain(
    assets, captions, scores, PipelineConfig(), blocklist=Blocklist(["weapon"])
)
print(report.format_table())
print(f"\nkept {len(kept)} of {len(assets)}")
print("sample rejections:")
for uid, reason in list(sorted(report.rejections.items()))[:4]:
    print(f"  {uid}: {reason}")

# The threshold is inclusive, and matching is word-boundary: "grapes" does
# not trip a blocked "rape".
print("\nscore 0.90 removed:", detector_filter(DetectorScores(uid="x", face_score=0.9), 0.9).removed)
print("score 0.89 removed:", detector_filter(DetectorScores(uid="x", face_score=0.89), 0.9).removed)
print("'a bunch of grapes' removed:", blocklist_filter("a bunch of grapes", Blocklist(["rape"])).removed)
