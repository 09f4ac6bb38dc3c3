from __future__ import annotations

import json

import numpy as np

from capforge.cli import main
from capforge.core import LicenseClass
from capforge.metrics import ScoreMatrix, save_score_matrix
from capforge.store import write_manifest


def make_workspace(tmp_path, make_asset, name="ws", assets=6, seed=9, extra_pipeline=""):
    ws = tmp_path / name
    ws.mkdir()
    (ws / "blocklist.txt").write_text("weapon\n# comment\n", encoding="utf-8")
    records = [
        make_asset(uid=f"asset-{i:03d}", bbox_max=(1.0 + i % 2, 2.0, 1.0)) for i in range(assets)
    ]
    write_manifest(records, ws / "manifest.jsonl")
    (ws / "scores.jsonl").write_text(
        '{"uid": "asset-001", "face_score": 0.95}\n', encoding="utf-8"
    )
    (ws / "config.yaml").write_text(
        f"""
pipeline:
  views_per_object: 4
  samples_per_view: 3
  selection_embedding_dim: 8
  blocklist_path: blocklist.txt
{extra_pipeline}
backends:
  mode: mock
  seed: {seed}
filter:
  detector_scores_path: scores.jsonl
io:
  manifest: manifest.jsonl
  output_dir: out
""",
        encoding="utf-8",
    )
    return ws


class TestCostCommand:
    def test_prints_published_breakdown(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        config = ws / "config.yaml"
        # published numbers need the 8-view default, not the fixture's 4
        config.write_text(
            "backends: {mode: mock}\n", encoding="utf-8"
        )
        assert main(["cost", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "$3.79" in out and "$0.38" in out and "$4.18" in out and "$8.35" in out
        assert "cheaper" in out and "faster" in out

    def test_dry_run_prints_plan_only(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        assert main(["cost", "--config", str(ws / "config.yaml"), "--dry-run"]) == 0
        assert "dry-run plan" in capsys.readouterr().out


class TestConfigValidation:
    def test_missing_blocklist_path_is_fatal(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text(
            "pipeline: {blocklist_path: nowhere.txt}\n", encoding="utf-8"
        )
        assert main(["cost", "--config", str(config)]) == 2
        assert "blocklist" in capsys.readouterr().err

    def test_unknown_key_is_fatal(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text("pipeline: {vews_per_object: 8}\n", encoding="utf-8")
        assert main(["cost", "--config", str(config)]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_missing_config_is_fatal(self, tmp_path):
        assert main(["cost", "--config", str(tmp_path / "absent.yaml")]) == 2


class TestRunAll:
    def test_golden_rerun_is_byte_identical(self, tmp_path, make_asset):
        ws1 = make_workspace(tmp_path, make_asset, name="a", seed=4)
        ws2 = make_workspace(tmp_path, make_asset, name="b", seed=4)
        assert main(["run-all", "--config", str(ws1 / "config.yaml")]) == 0
        assert main(["run-all", "--config", str(ws2 / "config.yaml")]) == 0
        first = (ws1 / "out" / "manifest.jsonl").read_bytes()
        second = (ws2 / "out" / "manifest.jsonl").read_bytes()
        assert first == second
        captions1 = (ws1 / "out" / "captions.json").read_bytes()
        captions2 = (ws2 / "out" / "captions.json").read_bytes()
        assert captions1 == captions2

    def test_outputs_and_report(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        assert main(["run-all", "--config", str(ws / "config.yaml")]) == 0
        out = capsys.readouterr().out
        assert "blocklist" in out  # report table printed
        report = json.loads((ws / "out" / "filter_report.json").read_text())
        stage_names = [s["stage"] for s in report["stages"]]
        assert stage_names == ["license", "render-info", "captioning", "detector", "blocklist"]
        detector = next(s for s in report["stages"] if s["stage"] == "detector")
        assert detector["removed"] == 1  # asset-001 scored 0.95
        costs = json.loads((ws / "out" / "costs.json").read_text())
        assert costs["total"] > 0
        captions = json.loads((ws / "out" / "captions.json").read_text())
        assert "asset-001" not in captions
        assert len(captions) == 5

    def test_dry_run_writes_nothing(self, tmp_path, make_asset):
        ws = make_workspace(tmp_path, make_asset)
        assert main(["run-all", "--config", str(ws / "config.yaml"), "--dry-run"]) == 0
        assert not (ws / "out").exists()

    def test_seed_flag_changes_output(self, tmp_path, make_asset):
        ws1 = make_workspace(tmp_path, make_asset, name="a", seed=4)
        ws2 = make_workspace(tmp_path, make_asset, name="b", seed=4)
        assert main(["run-all", "--config", str(ws1 / "config.yaml")]) == 0
        assert main(["run-all", "--config", str(ws2 / "config.yaml"), "--seed", "5"]) == 0
        assert (ws1 / "out" / "captions.json").read_text() != (
            ws2 / "out" / "captions.json"
        ).read_text()


class TestStagedCommands:
    def test_caption_select_consolidate_filter_chain(self, tmp_path, make_asset):
        ws = make_workspace(tmp_path, make_asset, assets=4)
        config = str(ws / "config.yaml")
        assert main(["caption", "--config", config]) == 0
        candidates = (ws / "out" / "candidates.jsonl").read_text().strip().splitlines()
        assert len(candidates) == 4 * 4 * 3  # assets x views x samples
        assert main(["select", "--config", config]) == 0
        selections = (ws / "out" / "selections.jsonl").read_text().strip().splitlines()
        assert len(selections) == 4 * 4
        assert main(["consolidate", "--config", config]) == 0
        finals = (ws / "out" / "finals.jsonl").read_text().strip().splitlines()
        assert len(finals) == 4
        assert main(["filter", "--config", config]) == 0
        assert (ws / "out" / "manifest.jsonl").exists()
        assert main(["export", "--config", config, "--format", "csv"]) == 0
        exported = (ws / "out" / "captions.csv").read_text().splitlines()
        assert exported[0] == "uid,caption"

    def test_staged_chain_matches_run_all(self, tmp_path, make_asset):
        staged = make_workspace(tmp_path, make_asset, name="staged", assets=4)
        allin = make_workspace(tmp_path, make_asset, name="allin", assets=4)
        for cmd in ("caption", "select", "consolidate", "filter"):
            assert main([cmd, "--config", str(staged / "config.yaml")]) == 0
        assert main(["run-all", "--config", str(allin / "config.yaml")]) == 0
        staged_manifest = (staged / "out" / "manifest.jsonl").read_bytes()
        allin_manifest = (allin / "out" / "manifest.jsonl").read_bytes()
        assert staged_manifest == allin_manifest

    def test_staged_select_uses_manifest_image_paths(self, tmp_path, make_asset):
        # assets with explicit render paths: staged select must embed the
        # same refs captioning used, not a derived naming scheme
        def with_paths(ws):
            records = [
                make_asset(
                    uid=f"asset-{i:03d}",
                    image_paths=tuple(f"renders/asset-{i:03d}/view{k}.png" for k in range(4)),
                )
                for i in range(3)
            ]
            write_manifest(records, ws / "manifest.jsonl")

        staged = make_workspace(tmp_path, make_asset, name="staged", assets=3)
        allin = make_workspace(tmp_path, make_asset, name="allin", assets=3)
        with_paths(staged)
        with_paths(allin)
        for cmd in ("caption", "select", "consolidate", "filter"):
            assert main([cmd, "--config", str(staged / "config.yaml")]) == 0
        assert main(["run-all", "--config", str(allin / "config.yaml")]) == 0
        assert (staged / "out" / "manifest.jsonl").read_bytes() == (
            allin / "out" / "manifest.jsonl"
        ).read_bytes()


class TestDryRunEverywhere:
    def test_every_subcommand_honors_dry_run(self, tmp_path, make_asset):
        ws = make_workspace(tmp_path, make_asset, assets=3)
        config = str(ws / "config.yaml")
        # stage inputs so the later commands' preflight checks pass
        for cmd in ("caption", "select", "consolidate", "filter"):
            assert main([cmd, "--config", config]) == 0
        raw = ws / "raw.jsonl"
        raw.write_text("", encoding="utf-8")
        before = {p for p in ws.rglob("*") if p.is_file()}
        invocations = [
            ["ingest", "--config", config, "--input", str(raw)],
            ["render-plan", "--config", config],
            ["caption", "--config", config],
            ["select", "--config", config],
            ["consolidate", "--config", config],
            ["filter", "--config", config],
            ["export", "--config", config],
            ["cost", "--config", config],
            ["crowd", "--config", config, "--captions", str(raw)],
            ["run-all", "--config", config],
        ]
        for argv in invocations:
            assert main(argv + ["--dry-run"]) == 0, argv
        after = {p for p in ws.rglob("*") if p.is_file()}
        assert before == after


class TestIngest:
    def test_ingest_validates_and_reports(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        raw = ws / "raw.jsonl"
        rows = [
            {"uid": "good-1", "license": "CC BY 4.0", "bbox_min": [0, 0, 0],
             "bbox_max": [1, 1, 1], "has_camera_info": True},
            {"uid": "", "license": "CC0", "bbox_min": [0, 0, 0], "bbox_max": [1, 1, 1]},
        ]
        raw.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
        target = ws / "ingested.jsonl"
        rc = main([
            "ingest", "--config", str(ws / "config.yaml"),
            "--input", str(raw), "--output", str(target),
        ])
        assert rc == 1  # one bad row skipped
        out = capsys.readouterr().out
        assert "uid empty" in out
        from capforge.store import read_manifest

        records = read_manifest(target).records
        assert [r.uid for r in records] == ["good-1"]
        assert records[0].license is LicenseClass.CC_BY


class TestRenderPlanCommand:
    def test_writes_plan_file(self, tmp_path, make_asset):
        ws = make_workspace(tmp_path, make_asset, assets=3)
        assert main(["render-plan", "--config", str(ws / "config.yaml")]) == 0
        lines = (ws / "out" / "render_plans.jsonl").read_text().strip().splitlines()
        assert len(lines) == 3
        plan = json.loads(lines[0])
        assert set(plan) == {
            "uid", "scale", "translation", "poses", "resolution", "lighting_preset",
        }
        assert len(plan["poses"]) == 4


class TestEvaluateCommand:
    def test_score_matrix_evaluation(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        rng = np.random.default_rng(0)
        matrix = ScoreMatrix(
            values=np.eye(5) + rng.standard_normal((5, 5)) * 0.01,
            true_pairing=(0, 1, 2, 3, 4),
        )
        path = ws / "scores_matrix.txt"
        save_score_matrix(matrix, path)
        rc = main([
            "evaluate", "--config", str(ws / "config.yaml"),
            "--score-matrix", str(path), "--ks", "1,5",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "R-Precision" in out and "100.0" in out


class TestCrowdCommand:
    def test_clean_and_imports(self, tmp_path, make_asset, capsys):
        ws = make_workspace(tmp_path, make_asset)
        captions = ws / "crowd.csv"
        captions.write_text(
            "uid,worker_id,text,timestamp\n"
            "u1,w1,a red chair,1\n"
            "u2,w2,chair,2\n",
            encoding="utf-8",
        )
        rc = main(["crowd", "--config", str(ws / "config.yaml"), "--captions", str(captions)])
        assert rc == 1  # one caption removed
        kept = (ws / "out" / "crowd_clean.jsonl").read_text().strip().splitlines()
        assert len(kept) == 1
        removed = (ws / "out" / "crowd_removed.jsonl").read_text()
        assert "too-short" in removed
