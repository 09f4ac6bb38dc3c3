from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capforge.backends.protocol import EmbeddingVector
from capforge.metrics import (
    Direction,
    GaussianStats,
    InsufficientSamplesError,
    NotPSDError,
    Orientation,
    ScoreMatrix,
    ab_aggregate,
    clip_score,
    fid,
    format_metrics_table,
    gaussian_stats,
    load_score_matrix,
    matrix_sqrt_psd,
    r_precision,
    retrieval_precision,
    save_score_matrix,
)


def vec(*values):
    return EmbeddingVector.of(values)


def unit_pair_with_cosine(c):
    return vec(1.0, 0.0), vec(c, math.sqrt(1 - c * c))


class TestClipScore:
    def test_hand_computed(self):
        image, text = unit_pair_with_cosine(0.35)
        assert clip_score(image, text) == pytest.approx(87.5)

    def test_negative_cosine_clamps_to_zero(self):
        assert clip_score(vec(1.0, 0.0), vec(-0.2, math.sqrt(1 - 0.04))) == 0.0

    def test_zero_cosine(self):
        assert clip_score(vec(1, 0), vec(0, 1), w=7.0) == 0.0

    def test_weight_scales_linearly(self):
        image, text = unit_pair_with_cosine(0.4)
        assert clip_score(image, text, w=1.0) == pytest.approx(40.0)


def oracle_rank_of_true(values, pairing, row):
    """Brute-force: sort (score desc, col asc), find the true column."""
    cols = sorted(range(len(values[row])), key=lambda c: (-values[row][c], c))
    return cols.index(pairing[row])


def oracle_r_precision(values, pairing, k):
    hits = sum(
        1 for row in range(len(values)) if oracle_rank_of_true(values, pairing, row) < k
    )
    return hits / len(values) * 100.0


class TestRPrecision:
    def test_identity_matrix_is_perfect(self):
        matrix = ScoreMatrix(values=np.eye(3), true_pairing=(0, 1, 2))
        assert r_precision(matrix, [1]) == {1: 100.0}

    def test_true_col_always_second(self):
        # each row: some other column scores 1.0; the true column scores 0.5
        values = np.zeros((4, 4))
        pairing = (0, 1, 2, 3)
        for row in range(4):
            values[row, (row + 1) % 4] = 1.0
            values[row, row] = 0.5
        matrix = ScoreMatrix(values=values, true_pairing=pairing)
        result = r_precision(matrix, [1, 2, 4])
        assert result[1] == 0.0
        assert result[2] == 100.0
        assert result[4] == 100.0

    def test_matches_oracle_on_random_matrices(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            values = rng.standard_normal((10, 10))
            pairing = tuple(rng.permutation(10).tolist())
            matrix = ScoreMatrix(values=values, true_pairing=pairing)
            for k in (1, 3, 5, 10):
                assert r_precision(matrix, [k])[k] == oracle_r_precision(
                    values, pairing, k
                )

    def test_ties_break_toward_lower_column(self):
        values = np.array([[1.0, 1.0], [1.0, 1.0]])
        matrix = ScoreMatrix(values=values, true_pairing=(0, 1))
        # row 0's true col 0 wins the tie; row 1's true col 1 loses it
        assert r_precision(matrix, [1])[1] == 50.0

    def test_nondecreasing_in_k_and_total_at_cols(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal((8, 8))
        matrix = ScoreMatrix(values=values, true_pairing=tuple(rng.permutation(8).tolist()))
        ks = list(range(1, 9))
        result = r_precision(matrix, ks)
        seq = [result[k] for k in ks]
        assert seq == sorted(seq)
        assert result[8] == 100.0

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(17)
        values = rng.standard_normal((6, 6))
        pairing = tuple(rng.permutation(6).tolist())
        base = r_precision(ScoreMatrix(values=values, true_pairing=pairing), [1, 3])
        warped = r_precision(
            ScoreMatrix(values=np.exp(2 * values) + 5, true_pairing=pairing), [1, 3]
        )
        assert base == warped

    def test_k_out_of_range_rejected(self):
        matrix = ScoreMatrix(values=np.eye(3), true_pairing=(0, 1, 2))
        with pytest.raises(ValueError):
            r_precision(matrix, [4])


class TestRetrievalPrecision:
    def test_diagonal_is_perfect_both_directions(self):
        matrix = ScoreMatrix(values=np.eye(4), true_pairing=(0, 1, 2, 3))
        for direction in Direction:
            assert retrieval_precision(matrix, direction, [1])[1] == 100.0

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((7, 7))
        pairing = tuple(rng.permutation(7).tolist())
        matrix = ScoreMatrix(values=values, true_pairing=pairing)
        text_side = retrieval_precision(matrix, Direction.TEXT_TO_IMAGE, [1, 3])
        flipped = retrieval_precision(matrix.transpose(), Direction.IMAGE_TO_TEXT, [1, 3])
        assert text_side == flipped

    def test_matches_oracle_on_transpose(self):
        rng = np.random.default_rng(23)
        values = rng.standard_normal((5, 5))
        pairing = tuple(rng.permutation(5).tolist())
        matrix = ScoreMatrix(values=values, true_pairing=pairing)
        transposed = matrix.transpose()
        for k in (1, 2, 5):
            assert (
                retrieval_precision(matrix, Direction.TEXT_TO_IMAGE, [k])[k]
                == oracle_r_precision(
                    transposed.values.tolist(), list(transposed.true_pairing), k
                )
            )


class TestGaussianStats:
    def test_hand_computed_two_points(self):
        stats = gaussian_stats(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert stats.mean == pytest.approx([1.0, 1.0])
        assert np.allclose(stats.covariance, [[2.0, 2.0], [2.0, 2.0]])
        assert stats.n == 2

    def test_identical_rows_give_zero_covariance(self):
        stats = gaussian_stats(np.ones((5, 3)))
        assert stats.covariance == pytest.approx(np.zeros((3, 3)))

    def test_single_sample_rejected(self):
        with pytest.raises(InsufficientSamplesError):
            gaussian_stats(np.ones((1, 3)))

    def test_matches_numpy_cov(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((40, 6))
        stats = gaussian_stats(x)
        assert stats.covariance == pytest.approx(np.cov(x, rowvar=False))


class TestMatrixSqrtPsd:
    def test_identity(self):
        assert matrix_sqrt_psd(np.eye(4)) == pytest.approx(np.eye(4))

    def test_diagonal(self):
        assert matrix_sqrt_psd(np.diag([4.0, 9.0])) == pytest.approx(np.diag([2.0, 3.0]))

    def test_square_of_root_recovers_input(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            d = int(rng.integers(2, 12))
            b = rng.standard_normal((d, d))
            a = b.T @ b
            s = matrix_sqrt_psd(a)
            assert np.allclose(s, s.T)
            rel = np.linalg.norm(s @ s - a) / np.linalg.norm(a)
            assert rel < 1e-8

    def test_eigenvalues_are_square_roots(self):
        rng = np.random.default_rng(13)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        eigs = np.array([0.5, 1.0, 2.0, 3.0, 7.0])
        a = q @ np.diag(eigs) @ q.T
        s = matrix_sqrt_psd((a + a.T) / 2)
        got = np.sort(np.linalg.eigvalsh(s))
        assert got == pytest.approx(np.sqrt(np.sort(eigs)), abs=1e-9)

    def test_materially_negative_input_rejected(self):
        with pytest.raises(NotPSDError):
            matrix_sqrt_psd(np.diag([1.0, -0.5]))

    def test_tiny_negative_eigenvalue_clamped(self):
        a = np.diag([1.0, -1e-12])
        s = matrix_sqrt_psd(a)
        assert s[1, 1] == 0.0


def random_stats(rng, dim=16, n=200):
    x = rng.standard_normal((n, dim)) @ rng.standard_normal((dim, dim)) * 0.3
    return gaussian_stats(x + rng.standard_normal(dim))


class TestFid:
    def test_self_distance_is_zero(self):
        rng = np.random.default_rng(41)
        stats = random_stats(rng)
        assert fid(stats, stats) <= 1e-6

    def test_one_dimensional_mean_shift(self):
        a = GaussianStats(mean=np.array([0.0]), covariance=np.array([[1.0]]), n=10)
        b = GaussianStats(mean=np.array([1.0]), covariance=np.array([[1.0]]), n=10)
        assert fid(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_one_dimensional_variance_gap(self):
        a = GaussianStats(mean=np.array([0.0]), covariance=np.array([[1.0]]), n=10)
        b = GaussianStats(mean=np.array([0.0]), covariance=np.array([[4.0]]), n=10)
        assert fid(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(43)
        a, b = random_stats(rng), random_stats(rng)
        assert fid(a, b) == pytest.approx(fid(b, a), abs=1e-8)

    def test_invariant_under_common_rotation(self):
        rng = np.random.default_rng(47)
        xa = rng.standard_normal((300, 8))
        xb = rng.standard_normal((300, 8)) * 1.5 + 0.3
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        base = fid(gaussian_stats(xa), gaussian_stats(xb))
        rotated = fid(gaussian_stats(xa @ q), gaussian_stats(xb @ q))
        assert rotated == pytest.approx(base, abs=1e-6)

    def test_dim_mismatch_rejected(self):
        a = GaussianStats(mean=np.zeros(2), covariance=np.eye(2), n=5)
        b = GaussianStats(mean=np.zeros(3), covariance=np.eye(3), n=5)
        with pytest.raises(ValueError):
            fid(a, b)


class TestAbAggregate:
    def test_hand_computed_fixture(self):
        summary = ab_aggregate([5, 5, 4, 3, 1])
        assert summary.mean == pytest.approx(3.6)
        assert summary.win_pct == pytest.approx(60.0)
        assert summary.tie_pct == pytest.approx(20.0)
        assert summary.lose_pct == pytest.approx(20.0)

    def test_all_ties(self):
        summary = ab_aggregate([3, 3, 3, 3])
        assert summary.mean == 3.0
        assert summary.ci95 == 0.0
        assert summary.win_pct == 0.0
        assert summary.tie_pct == 100.0

    def test_single_response_gets_zero_ci(self):
        summary = ab_aggregate([4])
        assert summary.win_pct == 100.0
        assert summary.ci95 == 0.0

    def test_out_of_range_rejected_and_counted(self):
        summary = ab_aggregate([4, 6, 0, 3])
        assert summary.n == 2
        assert summary.rejected == 2

    def test_opponent_orientation_flips(self):
        ours = ab_aggregate([5, 1, 3], orientation=Orientation.CANDIDATE)
        theirs = ab_aggregate([1, 5, 3], orientation=Orientation.OPPONENT)
        assert ours == theirs

    def test_ci_is_t_free_normal_interval(self):
        scores = [1, 2, 3, 4, 5, 5, 4]
        summary = ab_aggregate(scores)
        arr = np.asarray(scores, dtype=float)
        assert summary.ci95 == pytest.approx(1.96 * arr.std(ddof=1) / np.sqrt(len(scores)))

    @given(st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=200))
    def test_percentages_always_sum_to_100(self, scores):
        summary = ab_aggregate(scores)
        assert summary.win_pct + summary.tie_pct + summary.lose_pct == pytest.approx(100.0)


class TestScoreMatrixFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        matrix = ScoreMatrix(
            values=rng.standard_normal((4, 4)),
            true_pairing=tuple(rng.permutation(4).tolist()),
        )
        path = tmp_path / "scores.txt"
        save_score_matrix(matrix, path)
        loaded = load_score_matrix(path)
        assert loaded.true_pairing == matrix.true_pairing
        assert np.array_equal(loaded.values, matrix.values)

    def test_bad_pairing_rejected(self):
        with pytest.raises(ValueError):
            ScoreMatrix(values=np.eye(3), true_pairing=(0, 0, 1))

    def test_nonfinite_rejected(self):
        values = np.eye(2)
        values[0, 0] = np.nan
        with pytest.raises(ValueError):
            ScoreMatrix(values=values, true_pairing=(0, 1))


def test_metrics_table_formatting():
    table = format_metrics_table(
        [
            ("Ours", {"CLIP": 88.4, "R@5": 35.7}),
            ("Human", {"CLIP": 72.5}),
        ]
    )
    assert "Ours" in table and "88.4" in table and "R@5" in table
