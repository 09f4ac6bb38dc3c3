"""
Evaluation metrics
==================

CLIPScore, retrieval R-Precision from a score matrix, FID between two
feature sets, and A/B judgment aggregation.
"""

import numpy as np

from capforge import ScoreMatrix, ab_aggregate, clip_score, fid, gaussian_stats, r_precision
from capforge.backends.protocol import EmbeddingVector
from capforge.metrics import Direction, format_metrics_table, retrieval_precision

rng = np.random.default_rng(0)

# CLIPScore: clamped, scaled cosine, reported x100.
image = EmbeddingVector.of([1.0, 0.0])
text = EmbeddingVector.of([0.35, float(np.sqrt(1 - 0.35**2))])
print("clip_score at cosine 0.35:", clip_score(image, text))

# A noisy diagonal score matrix: retrieval should be nearly perfect.
values = np.eye(10) + rng.standard_normal((10, 10)) * 0.05
matrix = ScoreMatrix(values=values, true_pairing=tuple(range(10)))
print("\nR-Precision:", r_precision(matrix, [1, 5, 10]))
print("text->image:", retrieval_precision(matrix, Direction.TEXT_TO_IMAGE, [1, 5]))

# FID: distance between Gaussians fitted to two feature sets.
real = gaussian_stats(rng.standard_normal((500, 16)))
close = gaussian_stats(rng.standard_normal((500, 16)))
far = gaussian_stats(rng.standard_normal((500, 16)) * 2.0 + 1.0)
print(f"\nFID similar sets:   {fid(real, close):7.3f}")
print(f"FID shifted+scaled: {fid(real, far):7.3f}")
print(f"FID self:           {fid(real, real):7.3g}")

# A/B judgments on the 1-5 scale where 3 is a tie; wins are 4s and 5s.
summary = ab_aggregate([5, 5, 4, 3, 1])
print(
    f"\nA/B [5,5,4,3,1]: mean {summary.mean:.1f} +/- {summary.ci95:.2f}, "
    f"win {summary.win_pct:.0f}% tie {summary.tie_pct:.0f}% lose {summary.lose_pct:.0f}%"
)

print()
print(
    format_metrics_table(
        [
            ("candidate", {"CLIP": 88.4, "ImgR@5": 35.7, "TxtR@5": 34.7}),
            ("baseline", {"CLIP": 72.5, "ImgR@5": 21.2, "TxtR@5": 18.5}),
        ],
        title="Example metrics report",
    )
)
