from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from capforge.crowd import (
    CrowdCaption,
    FlaggedWorker,
    WorkerRecord,
    WorkerResponse,
    clean_captions,
    detect_scam_workers,
    import_ab_export,
    load_crowd_captions,
    orient_score,
)


def cap(uid, text, worker="w1", ts=0.0):
    return CrowdCaption(uid=uid, worker_id=worker, text=text, timestamp=ts)


class TestCleanCaptions:
    def test_banned_worker_removed_first(self):
        kept, removed = clean_captions([cap("u1", "a nice chair", worker="scammer")], {"scammer"})
        assert not kept
        assert removed[0].reason == "banned-worker"

    def test_single_word_removed(self):
        kept, removed = clean_captions([cap("u1", "chair")])
        assert not kept
        assert removed[0].reason == "too-short"

    def test_empty_text_counts_as_short(self):
        _, removed = clean_captions([cap("u1", "   ")])
        assert removed[0].reason == "too-short"

    def test_two_words_survive(self):
        kept, _ = clean_captions([cap("u1", "red chair")])
        assert len(kept) == 1

    def test_duplicate_on_same_object_keeps_first_by_timestamp(self):
        first = cap("u1", "a red chair", ts=1.0)
        second = cap("u1", "a red chair", ts=2.0)
        kept, removed = clean_captions([second, first])
        assert kept == [first]
        assert removed[0].caption == second
        assert removed[0].reason == "duplicate"

    def test_same_text_on_different_objects_is_not_duplicate(self):
        kept, removed = clean_captions([cap("u1", "a red chair"), cap("u2", "a red chair")])
        assert len(kept) == 2 and not removed

    def test_mass_repeat_removes_all_instances(self):
        captions = [cap(f"u{i}", "generic spam text", ts=i) for i in range(31)]
        kept, removed = clean_captions(captions)
        assert not kept
        assert len(removed) == 31
        assert all(r.reason == "mass-repeat" for r in removed)

    def test_thirty_repeats_survive(self):
        captions = [cap(f"u{i}", "popular but fine", ts=i) for i in range(30)]
        kept, removed = clean_captions(captions)
        assert len(kept) == 30 and not removed

    def test_first_matching_rule_wins(self):
        # a banned worker's one-word caption is attributed to the ban
        _, removed = clean_captions([cap("u1", "chair", worker="bad")], {"bad"})
        assert removed[0].reason == "banned-worker"

    def test_idempotent(self):
        rows = (
            [cap(f"u{i}", "mass repeated line", ts=i) for i in range(40)]
            + [cap("x1", "word"), cap("x2", "a proper caption", ts=5.0)]
            + [cap("x2", "a proper caption", ts=6.0)]
        )
        kept_once, _ = clean_captions(rows, {"nobody"})
        kept_twice, removed_twice = clean_captions(kept_once, {"nobody"})
        assert kept_twice == kept_once
        assert removed_twice == []

    def test_reasons_partition_removed(self):
        rows = [
            cap("u1", "chair", worker="bad"),
            cap("u2", "word"),
            cap("u3", "a dup caption", ts=1.0),
            cap("u3", "a dup caption", ts=2.0),
        ]
        kept, removed = clean_captions(rows, {"bad"})
        assert len(kept) + len(removed) == len(rows)
        by_reason = {r.caption.uid + r.caption.worker_id + str(r.caption.timestamp) for r in removed}
        assert len(by_reason) == len(removed)


def responses(scores, chose_shorter=None):
    return tuple(
        WorkerResponse(score=s, chose_shorter=chose_shorter[i] if chose_shorter else None)
        for i, s in enumerate(scores)
    )


class TestDetectScamWorkers:
    def test_constant_answer_flagged(self):
        worker = WorkerRecord(worker_id="w1", responses=responses([3] * 100))
        flags = detect_scam_workers([worker], min_responses=30)
        assert flags == [
            FlaggedWorker(worker_id="w1", reason="constant-answer", detail="answered 3 on 100/100 tasks")
        ]

    def test_longer_caption_bias_flagged(self):
        chose = [False] * 98 + [True] * 2  # picks the longer one 98/100 times
        worker = WorkerRecord(
            worker_id="w2", responses=responses([1, 2, 4, 5] * 25, chose_shorter=chose)
        )
        flags = detect_scam_workers([worker], min_responses=30)
        assert len(flags) == 1 and flags[0].reason == "length-bias"
        assert "longer" in flags[0].detail

    def test_shorter_caption_bias_flagged(self):
        chose = [True] * 97 + [False] * 3
        worker = WorkerRecord(
            worker_id="w3", responses=responses([1, 2, 4, 5] * 25, chose_shorter=chose)
        )
        flags = detect_scam_workers([worker], min_responses=30)
        assert len(flags) == 1 and "shorter" in flags[0].detail

    def test_uniform_worker_not_flagged(self):
        chose = [True, False] * 50
        worker = WorkerRecord(
            worker_id="w4", responses=responses([1, 2, 3, 4, 5] * 20, chose_shorter=chose)
        )
        assert detect_scam_workers([worker], min_responses=30) == []

    def test_below_min_responses_ignored(self):
        worker = WorkerRecord(worker_id="w5", responses=responses([3] * 10))
        assert detect_scam_workers([worker], min_responses=30) == []

    def test_banned_requires_reason(self):
        with pytest.raises(ValueError):
            WorkerRecord(worker_id="w6", banned=True)


class TestOrientation:
    @given(st.integers(min_value=1, max_value=5))
    def test_left_mapping_is_involution(self, s):
        assert orient_score(orient_score(s, True), True) == s

    def test_tie_preserved(self):
        assert orient_score(3, True) == 3
        assert orient_score(3, False) == 3

    def test_left_much_better_becomes_five(self):
        assert orient_score(1, True) == 5

    def test_right_side_is_identity(self):
        assert orient_score(4, False) == 4


AB_HEADER = "task_id,uid,left_method,right_method,score,worker_id\n"


class TestImportAbExport:
    def write(self, tmp_path, rows):
        path = tmp_path / "ab.csv"
        path.write_text(AB_HEADER + "".join(rows), encoding="utf-8")
        return path

    def test_orientation_by_side(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "t1,u1,ours,human,1,w1\n",  # ours left, raw 1 -> 5
                "t2,u2,human,ours,4,w2\n",  # ours right, raw 4 -> 4
            ],
        )
        result = import_ab_export(path, candidate="ours")
        assert result.scores_for("ours", "human") == [5, 4]

    def test_malformed_rows_skipped_and_counted(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "t1,u1,ours,human,6,w1\n",  # out-of-range score
                "t2,u2,ours,human,notanint,w2\n",
                "t3,u3,ours,human,2,w3\n",
            ],
        )
        result = import_ab_export(path, candidate="ours")
        assert result.malformed == 2
        assert result.scores_for("ours", "human") == [4]

    def test_banned_workers_dropped(self, tmp_path):
        path = self.write(tmp_path, ["t1,u1,ours,human,5,spammer\n", "t2,u2,human,ours,4,w9\n"])
        result = import_ab_export(path, candidate="ours", banned={"spammer"})
        assert result.dropped_banned == 1
        assert result.scores_for("ours", "human") == [4]

    def test_pairs_without_candidate_use_lexicographic_candidate(self, tmp_path):
        path = self.write(tmp_path, ["t1,u1,metadata,human,2,w1\n"])
        result = import_ab_export(path, candidate="ours")
        assert result.scores_for("human", "metadata") == [2]

    def test_experiments_grouped_by_pair(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "t1,u1,ours,human,1,w1\n",
                "t2,u2,ours,metadata,1,w1\n",
                "t3,u3,human,ours,5,w2\n",
            ],
        )
        result = import_ab_export(path, candidate="ours")
        assert result.scores_for("ours", "human") == [5, 5]
        assert result.scores_for("ours", "metadata") == [5]


def test_load_crowd_captions(tmp_path):
    path = tmp_path / "captions.csv"
    path.write_text(
        "uid,worker_id,text,timestamp\nu1,w1,a nice chair,123.5\nu2,w2,\"a chair, red\",124\n",
        encoding="utf-8",
    )
    rows = load_crowd_captions(path)
    assert rows[0] == CrowdCaption(uid="u1", worker_id="w1", text="a nice chair", timestamp=123.5)
    assert rows[1].text == "a chair, red"
