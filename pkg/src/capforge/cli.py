"""Operator CLI: one subcommand per pipeline stage plus ``run-all``.

Exit codes: 0 success, 1 when individual items were quarantined or skipped,
2 on fatal configuration errors. Every subcommand honors ``--dry-run``
(print the work plan, touch nothing) and ``--seed`` (pin all stochastic
mock behavior).
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, load_run_config
from .core import (
    AssetRecord,
    CandidateCaption,
    CapforgeError,
    CaptionMode,
    ConfigError,
    FinalCaption,
    ViewCaption,
    validate_asset,
)
from .costs import compare_to_human, pipeline_cost
from .crowd import clean_captions, import_ab_export, load_crowd_captions
from .filtering import apply_filter_chain, load_detector_scores
from .geometry import emit_render_plan, render_plans_to_jsonl
from .metrics import (
    Direction,
    ab_aggregate,
    fid,
    gaussian_stats,
    load_score_matrix,
    r_precision,
    retrieval_precision,
)
from .pipeline import (
    consolidate,
    derive_image_refs,
    qa_caption,
    run_pipeline,
    select_caption,
    standard_caption,
)
from .store import export_captions, read_manifest, write_manifest

OK, ITEMS_SKIPPED, FATAL = 0, 1, 2


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    return load_run_config(args.config, seed_override=args.seed)


def _manifest_records(cfg: RunConfig, override: Optional[str]) -> list[AssetRecord]:
    path = Path(override) if override else cfg.manifest_path
    if path is None:
        raise ConfigError("no manifest: set io.manifest in the config or pass --manifest")
    if not path.is_file():
        raise ConfigError(f"manifest does not exist: {path}")
    return list(read_manifest(path).records)


def _write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _plan(args, *lines: str) -> int:
    print("dry-run plan:")
    for line in lines:
        print(f"  {line}")
    return OK


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    source = Path(args.input)
    if not source.is_file():
        raise ConfigError(f"input does not exist: {source}")
    target = Path(args.output) if args.output else cfg.manifest_path
    if target is None:
        raise ConfigError("no target manifest: set io.manifest or pass --output")
    if args.dry_run:
        return _plan(args, f"read raw records from {source}", f"write manifest to {target}")
    valid, bad = [], 0
    for i, row in enumerate(_read_jsonl(source)):
        record = AssetRecord.from_dict(row)
        violations = validate_asset(record)
        if violations:
            bad += 1
            print(f"skip {record.uid or f'line {i + 1}'}: {'; '.join(violations)}")
        else:
            valid.append(record)
    write_manifest(valid, target)
    print(f"ingested {len(valid)} records to {target} ({bad} skipped)")
    return ITEMS_SKIPPED if bad else OK


def cmd_render_plan(args) -> int:
    cfg = _load_config(args)
    records = _manifest_records(cfg, args.manifest)
    out = cfg.output_dir / "render_plans.jsonl"
    if args.dry_run:
        return _plan(args, f"plan renders for {len(records)} assets", f"write {out}")
    plans, skipped = emit_render_plan(records, cfg.pipeline)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_plans_to_jsonl(plans), encoding="utf-8")
    for skip in skipped:
        print(f"skip {skip.uid}: {skip.reason}")
    print(f"wrote {len(plans)} render plans to {out}")
    return ITEMS_SKIPPED if skipped else OK


def cmd_caption(args) -> int:
    cfg = _load_config(args)
    records = sorted(_manifest_records(cfg, args.manifest), key=lambda r: r.uid)
    out = cfg.output_dir / "candidates.jsonl"
    if args.dry_run:
        n = cfg.pipeline.samples_per_view * cfg.pipeline.views_per_object
        return _plan(args, f"caption {len(records)} assets ({n} candidates each)", f"write {out}")
    backends = cfg.make_backends()
    rows, failures = [], 0
    for record in records:
        try:
            refs = derive_image_refs(record, cfg.pipeline.views_per_object)
            if cfg.pipeline.qa_mode:
                per_view, fallback = qa_caption(refs, backends, cfg.pipeline)
            else:
                per_view, fallback = standard_caption(refs, backends, cfg.pipeline), []
            for candidates in per_view:
                for c in candidates:
                    rows.append(
                        {
                            "uid": record.uid,
                            "view_index": c.view_index,
                            "sample_index": c.sample_index,
                            "text": c.text,
                            "qa_fallback": c.view_index in fallback,
                        }
                    )
        except Exception as exc:
            failures += 1
            print(f"quarantine {record.uid}: {exc}")
    _write_jsonl(out, rows)
    print(f"wrote {len(rows)} candidates to {out}")
    return ITEMS_SKIPPED if failures else OK


def cmd_select(args) -> int:
    cfg = _load_config(args)
    candidates_path = Path(args.candidates) if args.candidates else cfg.output_dir / "candidates.jsonl"
    if not candidates_path.is_file():
        raise ConfigError(f"candidates file does not exist: {candidates_path}")
    out = cfg.output_dir / "selections.jsonl"
    if args.dry_run:
        return _plan(args, f"select captions from {candidates_path}", f"write {out}")
    backends = cfg.make_backends()
    # image refs must match the ones captioning used, so resolve them from
    # the manifest rather than assuming the derived naming scheme
    refs_by_uid = {
        record.uid: derive_image_refs(record, cfg.pipeline.views_per_object)
        for record in _manifest_records(cfg, args.manifest)
    }
    by_view: dict[tuple[str, int], list[CandidateCaption]] = defaultdict(list)
    for row in _read_jsonl(candidates_path):
        by_view[(row["uid"], int(row["view_index"]))].append(
            CandidateCaption(
                text=row["text"],
                view_index=int(row["view_index"]),
                sample_index=int(row["sample_index"]),
            )
        )
    uids = sorted({uid for uid, _ in by_view})
    rows, failures = [], 0
    for uid in uids:
        views = sorted(k for k in by_view if k[0] == uid)
        try:
            for key in views:
                candidates = sorted(by_view[key], key=lambda c: c.sample_index)
                image_ref = refs_by_uid[uid][key[1]]
                image_emb = backends.embedder.embed_image(image_ref)
                text_embs = [backends.embedder.embed_text(c.text) for c in candidates]
                chosen = select_caption(candidates, image_emb, text_embs).chosen
                rows.append({"uid": uid, **chosen.to_dict()})
        except Exception as exc:
            failures += 1
            print(f"quarantine {uid}: {exc}")
    _write_jsonl(out, rows)
    print(f"wrote {len(rows)} selections to {out}")
    return ITEMS_SKIPPED if failures else OK


def cmd_consolidate(args) -> int:
    cfg = _load_config(args)
    selections_path = Path(args.selections) if args.selections else cfg.output_dir / "selections.jsonl"
    if not selections_path.is_file():
        raise ConfigError(f"selections file does not exist: {selections_path}")
    out = cfg.output_dir / "finals.jsonl"
    if args.dry_run:
        return _plan(args, f"consolidate {selections_path}", f"write {out}")
    backends = cfg.make_backends()
    by_uid: dict[str, list[ViewCaption]] = defaultdict(list)
    for row in _read_jsonl(selections_path):
        by_uid[row["uid"]].append(ViewCaption.from_dict(row))
    mode = CaptionMode.QA if cfg.pipeline.qa_mode else CaptionMode.STANDARD
    rows, failures = [], 0
    for uid in sorted(by_uid):
        selected = sorted(by_uid[uid], key=lambda v: v.view_index)
        try:
            final, usage = consolidate(
                uid, selected, backends.summarizer, cfg.pipeline.summary_prompt_template, mode
            )
        except Exception as exc:
            failures += 1
            print(f"quarantine {uid}: {exc}")
            continue
        rows.append({**final.to_dict(), "usage": usage.to_dict()})
    _write_jsonl(out, rows)
    print(f"wrote {len(rows)} final captions to {out}")
    return ITEMS_SKIPPED if failures else OK


def cmd_filter(args) -> int:
    cfg = _load_config(args)
    records = _manifest_records(cfg, args.manifest)
    finals_path = Path(args.finals) if args.finals else cfg.output_dir / "finals.jsonl"
    if not finals_path.is_file():
        raise ConfigError(f"finals file does not exist: {finals_path}")
    out_manifest = cfg.output_dir / "manifest.jsonl"
    out_report = cfg.output_dir / "filter_report.json"
    if args.dry_run:
        return _plan(
            args,
            f"filter {len(records)} assets with captions from {finals_path}",
            f"write {out_manifest} and {out_report}",
        )
    finals = {row["uid"]: FinalCaption.from_dict(row) for row in _read_jsonl(finals_path)}
    captions = {uid: f.text for uid, f in finals.items()}
    scores = (
        load_detector_scores(cfg.detector_scores_path) if cfg.detector_scores_path else {}
    )
    kept, report = apply_filter_chain(records, captions, scores, cfg.pipeline)
    out_records = []
    for record in kept:
        final = finals.get(record.uid)
        if final is not None:
            record = record.with_results(
                captions=[v.text for v in final.source_view_captions], final_caption=final
            )
        out_records.append(record)
    write_manifest(out_records, out_manifest, config_hash=cfg.pipeline.content_hash())
    out_report.write_text(
        json.dumps(report.to_records(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(report.format_table())
    print(f"wrote {len(out_records)} records to {out_manifest}")
    return OK


def cmd_export(args) -> int:
    cfg = _load_config(args)
    manifest = Path(args.manifest) if args.manifest else cfg.output_dir / "manifest.jsonl"
    if not manifest.is_file():
        raise ConfigError(f"manifest does not exist: {manifest}")
    suffix = "json" if args.format == "map" else "csv"
    out = cfg.output_dir / f"captions.{suffix}"
    if args.dry_run:
        return _plan(args, f"export captions from {manifest} as {args.format}", f"write {out}")
    records = read_manifest(manifest).records
    _, missing = export_captions(records, fmt=args.format, path=out)
    for uid in missing:
        print(f"missing final caption: {uid}")
    print(f"exported {len(records) - len(missing)} captions to {out}")
    return ITEMS_SKIPPED if missing else OK


def cmd_cost(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        return _plan(args, "print cost breakdown (no side effects)")
    breakdown = pipeline_cost(
        cfg.pipeline, cfg.rates, measured_avg_tokens=args.avg_tokens, objects=args.objects
    )
    print(breakdown.format_table())
    comparison = compare_to_human(cfg.rates, pipeline_total=breakdown.total)
    print(
        f"vs human: {comparison.cost_ratio:.1f}x cheaper "
        f"(${comparison.human_cost_per_1k:.2f} per 1k), "
        f"{comparison.speed_ratio:.1f}x faster "
        f"({comparison.pipeline_speed_per_day:.0f}/day vs {comparison.human_speed_per_day:.0f}/day)"
    )
    return OK


def cmd_evaluate(args) -> int:
    _ = _load_config(args) if args.config else None
    did_something = False
    if args.score_matrix:
        ks = [int(k) for k in args.ks.split(",")] if args.ks else [1, 5]
        matrix = load_score_matrix(args.score_matrix)
        if args.dry_run:
            return _plan(args, f"rank {matrix.rows}x{matrix.cols} score matrix at ks={ks}")
        rp = r_precision(matrix, ks)
        img = retrieval_precision(matrix, Direction.IMAGE_TO_TEXT, ks)
        txt = retrieval_precision(matrix, Direction.TEXT_TO_IMAGE, ks)
        print("R-Precision:", {f"R@{k}": round(v, 1) for k, v in rp.items()})
        print("Image retrieval:", {f"R@{k}": round(v, 1) for k, v in img.items()})
        print("Text retrieval:", {f"R@{k}": round(v, 1) for k, v in txt.items()})
        did_something = True
    if args.features_real and args.features_gen:
        if args.dry_run:
            return _plan(args, "compute FID between feature files")
        real = gaussian_stats(np.load(args.features_real))
        gen = gaussian_stats(np.load(args.features_gen))
        print(f"FID: {fid(real, gen):.4f}")
        did_something = True
    if args.ab:
        if args.dry_run:
            return _plan(args, f"aggregate A/B export {args.ab}")
        imported = import_ab_export(args.ab, candidate=args.candidate)
        for (cand, opp), scores in sorted(imported.experiments.items()):
            summary = ab_aggregate(scores)
            print(
                f"{cand} vs {opp}: mean {summary.mean:.2f} +/- {summary.ci95:.2f}, "
                f"win {summary.win_pct:.1f}% tie {summary.tie_pct:.1f}% "
                f"lose {summary.lose_pct:.1f}% (n={summary.n})"
            )
        if imported.malformed:
            print(f"malformed rows skipped: {imported.malformed}")
        did_something = True
    if not did_something:
        raise ConfigError(
            "evaluate needs --score-matrix, --features-real/--features-gen, or --ab"
        )
    return OK


def cmd_crowd(args) -> int:
    cfg = _load_config(args)
    banned = set()
    if args.banned:
        banned = {
            line.strip()
            for line in Path(args.banned).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
    if not args.captions and not args.ab:
        raise ConfigError("crowd needs --captions and/or --ab")
    if args.dry_run:
        return _plan(args, "clean crowd exports", f"outputs under {cfg.output_dir}")
    rc = OK
    if args.captions:
        raw = load_crowd_captions(args.captions)
        kept, removed = clean_captions(raw, banned)
        _write_jsonl(
            cfg.output_dir / "crowd_clean.jsonl",
            [
                {"uid": c.uid, "worker_id": c.worker_id, "text": c.text, "timestamp": c.timestamp}
                for c in kept
            ],
        )
        _write_jsonl(
            cfg.output_dir / "crowd_removed.jsonl",
            [
                {"uid": r.caption.uid, "worker_id": r.caption.worker_id, "reason": r.reason}
                for r in removed
            ],
        )
        print(f"kept {len(kept)} captions, removed {len(removed)}")
        if removed:
            rc = ITEMS_SKIPPED
    if args.ab:
        imported = import_ab_export(args.ab, candidate=args.candidate, banned=banned)
        payload = {
            f"{cand}|{opp}": scores for (cand, opp), scores in sorted(imported.experiments.items())
        }
        out = cfg.output_dir / "ab_oriented.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(
            f"imported {sum(len(v) for v in payload.values())} judgments "
            f"({imported.malformed} malformed, {imported.dropped_banned} from banned workers)"
        )
        if imported.malformed:
            rc = ITEMS_SKIPPED
    return rc


def cmd_run_all(args) -> int:
    cfg = _load_config(args)
    records = _manifest_records(cfg, args.manifest)
    if args.dry_run:
        return _plan(
            args,
            f"caption -> select -> consolidate -> filter for {len(records)} assets",
            f"backends: {cfg.backend_mode}, workers: {args.workers}",
            f"work dir (checkpoint/journal): {cfg.work_dir}",
            f"outputs under {cfg.output_dir}",
        )
    backends = cfg.make_backends()
    scores = (
        load_detector_scores(cfg.detector_scores_path) if cfg.detector_scores_path else {}
    )
    result = run_pipeline(
        records,
        cfg.pipeline,
        backends,
        rates=cfg.rates,
        detector_scores=scores,
        work_dir=cfg.work_dir,
        workers=args.workers,
    )
    if not result.finished:
        print(f"run interrupted after {result.completed_count} assets; rerun to resume")
        return ITEMS_SKIPPED
    out_manifest = cfg.output_dir / "manifest.jsonl"
    write_manifest(result.records, out_manifest, config_hash=cfg.pipeline.content_hash())
    export_captions(result.records, fmt="map", path=cfg.output_dir / "captions.json")
    (cfg.output_dir / "filter_report.json").write_text(
        json.dumps(result.report.to_records(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (cfg.output_dir / "costs.json").write_text(
        json.dumps(result.costs.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(result.report.format_table())
    print(result.costs.format_table())
    for q in result.quarantines:
        print(f"quarantined {q.uid} at {q.stage}: {q.reason}")
    print(f"wrote {len(result.records)} records to {out_manifest}")
    return ITEMS_SKIPPED if result.quarantines else OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capforge",
        description="Batch 3D-asset captioning pipeline: caption, select, consolidate, filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", required=False, help="run config YAML")
        p.add_argument("--dry-run", action="store_true", help="print the work plan only")
        p.add_argument("--seed", type=int, default=None, help="override the mock seed")
        return p

    p = common(sub.add_parser("ingest", help="validate raw records into a manifest"))
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(handler=cmd_ingest)

    p = common(sub.add_parser("render-plan", help="emit render plans for the external renderer"))
    p.add_argument("--manifest", default=None)
    p.set_defaults(handler=cmd_render_plan)

    p = common(sub.add_parser("caption", help="generate per-view candidate captions"))
    p.add_argument("--manifest", default=None)
    p.set_defaults(handler=cmd_caption)

    p = common(sub.add_parser("select", help="pick the best candidate per view by cosine"))
    p.add_argument("--manifest", default=None)
    p.add_argument("--candidates", default=None)
    p.set_defaults(handler=cmd_select)

    p = common(sub.add_parser("consolidate", help="summarize per-view captions per object"))
    p.add_argument("--selections", default=None)
    p.set_defaults(handler=cmd_consolidate)

    p = common(sub.add_parser("filter", help="apply the admission chain with bookkeeping"))
    p.add_argument("--manifest", default=None)
    p.add_argument("--finals", default=None)
    p.set_defaults(handler=cmd_filter)

    p = common(sub.add_parser("evaluate", help="caption/generation quality metrics"))
    p.add_argument("--score-matrix", default=None)
    p.add_argument("--ks", default=None, help="comma-separated ranks, e.g. 1,5,10")
    p.add_argument("--features-real", default=None, help=".npy feature matrix")
    p.add_argument("--features-gen", default=None, help=".npy feature matrix")
    p.add_argument("--ab", default=None, help="A/B export CSV")
    p.add_argument("--candidate", default=None, help="candidate method for A/B orientation")
    p.set_defaults(handler=cmd_evaluate)

    p = common(sub.add_parser("crowd", help="clean crowd captions / import A/B exports"))
    p.add_argument("--captions", default=None, help="crowd caption export CSV")
    p.add_argument("--banned", default=None, help="banned worker ids, one per line")
    p.add_argument("--ab", default=None, help="A/B export CSV")
    p.add_argument("--candidate", default=None)
    p.set_defaults(handler=cmd_crowd)

    p = common(sub.add_parser("cost", help="print the cost breakdown table"))
    p.add_argument("--objects", type=int, default=1000)
    p.add_argument("--avg-tokens", type=float, default=None)
    p.set_defaults(handler=cmd_cost)

    p = common(sub.add_parser("export", help="export final captions (uid -> caption)"))
    p.add_argument("--manifest", default=None)
    p.add_argument("--format", choices=["map", "csv"], default="map")
    p.set_defaults(handler=cmd_export)

    p = common(sub.add_parser("run-all", help="caption->select->consolidate->filter with checkpointing"))
    p.add_argument("--manifest", default=None)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_run_all)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return FATAL
    except CapforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FATAL


if __name__ == "__main__":
    sys.exit(main())
