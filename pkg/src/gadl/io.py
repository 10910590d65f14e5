"""Readers and writers for feature, label, ground-truth and result files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graph import GraphFormatError


def load_matrix_csv(path, header: bool = False) -> np.ndarray:
    """All-numeric CSV, one row per node; the first line is skipped when ``header``."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise GraphFormatError(f"non-numeric value in {rec!r}", lineno) from None
            if len(rows[-1]) != len(rows[0]):
                raise GraphFormatError(f"expected {len(rows[0])} columns, got {len(rows[-1])}", lineno)
    if not rows:
        raise GraphFormatError(f"{Path(path).name}: no data rows")
    out = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise GraphFormatError(f"{Path(path).name}: non-finite values")
    return out


def save_matrix_csv(path, mat: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(mat):
            w.writerow([repr(float(v)) for v in row])


def load_labels(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def load_ground_truth(path) -> dict[int, int]:
    """``src tgt`` pairs, one per line; ``#`` lines are comments."""
    gt: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise GraphFormatError(f"expected 'src tgt', got {line!r}", lineno)
            try:
                s, t = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer id in {line!r}", lineno) from None
            if s in gt and gt[s] != t:
                raise GraphFormatError(f"source {s} mapped twice", lineno)
            gt[s] = t
    if not gt:
        raise GraphFormatError(f"{Path(path).name}: empty ground truth")
    return gt


def write_matching_csv(path, matching: Sequence[tuple[int, int]], similarity: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("src_idx", "tgt_idx", "similarity"))
        for s, t in matching:
            w.writerow((s, t, repr(float(similarity[s, t]))))


def write_json(path, obj: Mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_jsonl(path, records: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
