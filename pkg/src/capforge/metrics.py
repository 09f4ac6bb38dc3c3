"""Caption and generation quality metrics: CLIPScore, R-Precision,
bidirectional retrieval precision from score matrices, and FID with a PSD
matrix square root.

All operations are pure; nothing here runs a model. Feature matrices and
score matrices arrive precomputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends.protocol import EmbeddingVector
from .core import CapforgeError
from .pipeline import cosine_similarity

DEFAULT_CLIP_SCORE_WEIGHT = 2.5


class NotPSDError(CapforgeError):
    code = "not-psd"


class InsufficientSamplesError(CapforgeError):
    code = "insufficient-samples"


def clip_score(
    image_emb: EmbeddingVector,
    text_emb: EmbeddingVector,
    w: float = DEFAULT_CLIP_SCORE_WEIGHT,
) -> float:
    """100 * w * max(0, cosine). The zero clamp discards anti-correlated
    pairs; the x100 scale matches how the metric is conventionally reported."""
    return 100.0 * w * max(0.0, cosine_similarity(image_emb, text_emb))


@dataclass(frozen=True)
class ScoreMatrix:
    """Dense image-by-text score matrix with its ground-truth pairing.

    true_pairing[i] is the column holding row i's correct partner; it must
    be a bijection when the matrix is square.
    """

    values: np.ndarray
    true_pairing: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "true_pairing", tuple(int(c) for c in self.true_pairing))
        if values.ndim != 2:
            raise ValueError("score matrix must be 2-D")
        if not np.isfinite(values).all():
            raise ValueError("score matrix must be finite")
        rows, cols = values.shape
        if len(self.true_pairing) != rows:
            raise ValueError("true_pairing length must equal row count")
        if any(not (0 <= c < cols) for c in self.true_pairing):
            raise ValueError("true_pairing entries out of range")
        if rows == cols and len(set(self.true_pairing)) != rows:
            raise ValueError("true_pairing must be a bijection on a square matrix")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def transpose(self) -> "ScoreMatrix":
        """Swap the retrieval direction. Only defined for square matrices,
        where the inverse pairing exists."""
        if self.rows != self.cols:
            raise ValueError("transpose needs a square matrix")
        inverse = [0] * self.cols
        for row, col in enumerate(self.true_pairing):
            inverse[col] = row
        return ScoreMatrix(values=self.values.T.copy(), true_pairing=tuple(inverse))


class Direction(Enum):
    IMAGE_TO_TEXT = "image-to-text"
    TEXT_TO_IMAGE = "text-to-image"


def r_precision(scores: ScoreMatrix, ks: Sequence[int]) -> dict[int, float]:
    """R@k as a percentage: how often the true partner ranks in the top k.

    Columns are ranked by descending score with ties broken toward the
    lower column index, so results are deterministic.
    """
    if scores.rows != scores.cols:
        raise ValueError("r_precision needs a square score matrix")
    for k in ks:
        if not (1 <= k <= scores.cols):
            raise ValueError(f"k={k} outside [1, {scores.cols}]")
    # stable argsort on negated scores = descending with lower-index ties
    order = np.argsort(-scores.values, axis=1, kind="stable")
    ranks = np.empty(scores.rows, dtype=np.int64)
    for i in range(scores.rows):
        ranks[i] = int(np.nonzero(order[i] == scores.true_pairing[i])[0][0])
    return {k: float(np.mean(ranks < k) * 100.0) for k in ks}


def retrieval_precision(
    scores: ScoreMatrix, direction: Direction, ks: Sequence[int]
) -> dict[int, float]:
    if direction is Direction.IMAGE_TO_TEXT:
        return r_precision(scores, ks)
    return r_precision(scores.transpose(), ks)


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("covariance shape must match mean dimension")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric within 1e-10")


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Sample mean and (n-1)-normalized, symmetrized sample covariance."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise InsufficientSamplesError("insufficient-samples: need an n x d matrix, n >= 2")
    mean = features.mean(axis=0)
    centered = features - mean
    cov = centered.T @ centered / (features.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, covariance=cov, n=features.shape[0])


def matrix_sqrt_psd(a: np.ndarray, neg_tol: float = 1e-8) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below -neg_tol mean the input is materially non-PSD and are
    rejected; tiny negatives from roundoff are clamped to zero.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(a, a.T, atol=1e-8):
        raise NotPSDError("not-psd: matrix is not symmetric")
    eigvals, eigvecs = np.linalg.eigh((a + a.T) / 2.0)
    if eigvals.min(initial=0.0) < -neg_tol:
        raise NotPSDError(f"not-psd: eigenvalue {eigvals.min()} below -{neg_tol}")
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return (root + root.T) / 2.0


def fid(stats1: GaussianStats, stats2: GaussianStats) -> float:
    """Frechet distance between two Gaussians:
    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    The cross term uses the symmetrized product (S1^(1/2) S2 S1^(1/2))^(1/2),
    which has the same trace but stays PSD under roundoff.
    """
    if stats1.mean.shape != stats2.mean.shape:
        raise ValueError("dim mismatch between stats")
    diff = stats1.mean - stats2.mean
    sqrt1 = matrix_sqrt_psd(stats1.covariance)
    inner = sqrt1 @ stats2.covariance @ sqrt1
    covmean = matrix_sqrt_psd((inner + inner.T) / 2.0)
    value = float(
        diff @ diff
        + np.trace(stats1.covariance)
        + np.trace(stats2.covariance)
        - 2.0 * np.trace(covmean)
    )
    if value < 0.0:
        if value < -1e-6:
            raise NotPSDError(f"not-psd: FID came out {value}")
        value = 0.0
    return value


class Orientation(Enum):
    CANDIDATE = "candidate"  # scores already favor the candidate
    OPPONENT = "opponent"  # scores favor the other side; flip s -> 6-s


@dataclass(frozen=True)
class AbSummary:
    mean: float
    ci95: float
    win_pct: float
    tie_pct: float
    lose_pct: float
    n: int
    rejected: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ab_aggregate(
    responses: Sequence[int], orientation: Orientation = Orientation.CANDIDATE
) -> AbSummary:
    """Aggregate 1-5 preference judgments where 3 is a tie.

    Win rate counts scores of 4 or 5. Out-of-range records are rejected and
    counted, not silently dropped. ci95 is 1.96 * s / sqrt(n) with the
    sample standard deviation; a single response gets the 0 sentinel.
    """
    valid: list[int] = []
    rejected = 0
    for s in responses:
        if isinstance(s, int) and 1 <= s <= 5:
            valid.append(6 - s if orientation is Orientation.OPPONENT else s)
        else:
            rejected += 1
    if not valid:
        raise ValueError("no valid responses")
    arr = np.asarray(valid, dtype=np.float64)
    n = len(valid)
    mean = float(arr.mean())
    ci95 = float(1.96 * arr.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    win = sum(1 for s in valid if s >= 4)
    tie = sum(1 for s in valid if s == 3)
    lose = n - win - tie
    return AbSummary(
        mean=mean,
        ci95=ci95,
        win_pct=win / n * 100.0,
        tie_pct=tie / n * 100.0,
        lose_pct=lose / n * 100.0,
        n=n,
        rejected=rejected,
    )


def save_score_matrix(matrix: ScoreMatrix, path: str | Path) -> None:
    """Line 1: JSON header {rows, cols, pairing}; then dense value rows."""
    header = {
        "rows": matrix.rows,
        "cols": matrix.cols,
        "pairing": list(matrix.true_pairing),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for row in matrix.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_score_matrix(path: str | Path) -> ScoreMatrix:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = json.loads(text[0])
    values = np.array(
        [[float(v) for v in line.split()] for line in text[1:]], dtype=np.float64
    )
    if values.shape != (header["rows"], header["cols"]):
        raise ValueError("score matrix body does not match header dimensions")
    return ScoreMatrix(values=values, true_pairing=tuple(header["pairing"]))


def format_metrics_table(
    rows: Sequence[tuple[str, dict[str, float]]], title: str = "Caption Evaluations"
) -> str:
    """Metric records -> fixed-width text table, one method per row."""
    columns: list[str] = []
    for _, metrics in rows:
        for key in metrics:
            if key not in columns:
                columns.append(key)
    name_w = max([len("Method")] + [len(name) for name, _ in rows]) + 2
    header = f"{'Method':<{name_w}}" + "".join(f"{c:>12}" for c in columns)
    lines = [title, header, "-" * len(header)]
    for name, metrics in rows:
        cells = "".join(
            f"{metrics[c]:>12.1f}" if c in metrics else f"{'-':>12}" for c in columns
        )
        lines.append(f"{name:<{name_w}}" + cells)
    return "\n".join(lines)
