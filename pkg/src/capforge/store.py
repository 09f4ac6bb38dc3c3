"""Persistence: versioned line-delimited manifests with atomic writes,
caption export (uid -> caption dict or CSV), and caption-length statistics.

Single writer, many readers: writes land in a temp file and are renamed
into place, so readers only ever see fully committed manifests.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import AssetRecord, CapforgeError

MANIFEST_FORMAT_VERSION = 1


class ManifestVersionError(CapforgeError):
    code = "manifest-version-mismatch"


class DuplicateUidError(CapforgeError):
    code = "duplicate-uid"


@dataclass(frozen=True)
class ManifestHeader:
    format_version: int = MANIFEST_FORMAT_VERSION
    config_hash: str = ""


@dataclass(frozen=True)
class Manifest:
    header: ManifestHeader
    records: tuple[AssetRecord, ...]


def manifest_to_text(records: Sequence[AssetRecord], config_hash: str = "") -> str:
    """Header line + one record per line, sorted by uid; stable bytes."""
    counts = Counter(r.uid for r in records)
    dupes = sorted(u for u, c in counts.items() if c > 1)
    if dupes:
        raise DuplicateUidError(f"duplicate-uid: {', '.join(dupes)}")
    header = {"format_version": MANIFEST_FORMAT_VERSION, "config_hash": config_hash}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for record in sorted(records, key=lambda r: r.uid):
        lines.append(json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(
    records: Sequence[AssetRecord], path: str | Path, config_hash: str = ""
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(path, manifest_to_text(records, config_hash))


def read_manifest(path: str | Path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline().strip()
        if not header_line:
            raise ManifestVersionError("manifest-version-mismatch: empty file")
        header = json.loads(header_line)
        version = header.get("format_version")
        if version != MANIFEST_FORMAT_VERSION:
            raise ManifestVersionError(
                f"manifest-version-mismatch: file is v{version}, "
                f"reader is v{MANIFEST_FORMAT_VERSION}"
            )
        records = []
        for line in fh:
            line = line.strip()
            if line:
                records.append(AssetRecord.from_dict(json.loads(line)))
    return Manifest(
        header=ManifestHeader(
            format_version=version, config_hash=header.get("config_hash", "")
        ),
        records=tuple(records),
    )


def export_captions(
    records: Sequence[AssetRecord],
    fmt: str = "map",
    path: Optional[str | Path] = None,
) -> tuple[str, list[str]]:
    """Final captions keyed by uid, as a JSON dict ("map") or RFC 4180 CSV.

    Returns (text, uids_missing_a_final_caption); missing assets are listed
    and skipped, the export still proceeds.
    """
    ordered = sorted(records, key=lambda r: r.uid)
    missing = [r.uid for r in ordered if r.final_caption is None]
    present = [(r.uid, r.final_caption.text) for r in ordered if r.final_caption]
    if fmt == "map":
        text = json.dumps(dict(present), sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["uid", "caption"])
        writer.writerows(present)
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown export format: {fmt}")
    if path is not None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(out, text)
    return text, missing


@dataclass(frozen=True)
class LengthStats:
    histogram: dict[int, int]
    mean: Optional[float]
    median: Optional[float]
    n: int

    def to_dict(self) -> dict:
        return {
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "mean": self.mean,
            "median": self.median,
            "n": self.n,
        }


def caption_length_stats(captions: Iterable[str]) -> LengthStats:
    """Word-count histogram (whitespace tokenization) plus mean and median."""
    counts = [len(c.split()) for c in captions]
    if not counts:
        return LengthStats(histogram={}, mean=None, median=None, n=0)
    return LengthStats(
        histogram=dict(sorted(Counter(counts).items())),
        mean=statistics.fmean(counts),
        median=statistics.median(counts),
        n=len(counts),
    )
