"""Reading long-format matched data and writing curves and summaries.

Input CSV: header ``set_id,treated,outcome`` with an optional ``delta``
column of hypothesized effects. Rows may come in any order; sets keep the
order in which their id first appears. Floats are written with ``repr`` so
values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import MatchedStudy, StudyError
from .inference import ConfidenceCurve

REQUIRED_COLUMNS = ("set_id", "treated", "outcome")
CURVE_COLUMNS = ("k", "quantile_fraction", "lower_limit", "achieved_p", "status")


class InputError(ValueError):
    """Malformed input file; the message names the offending line or set."""


def _float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"line {line}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise InputError(f"line {line}: column {column!r} is not finite: {text!r}")
    return value


def read_study_csv(path: str | Path) -> tuple[MatchedStudy, np.ndarray | None]:
    """Parse a long-format CSV into a validated study and the optional delta vector.

    The delta vector follows the study's unit order (sets by first appearance,
    rows within a set in file order).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise InputError(f"line 1: missing column(s) {', '.join(missing)}")
        has_delta = "delta" in header
        groups: dict[str, dict] = {}
        for row in reader:
            line = reader.line_num
            sid = (row.get("set_id") or "").strip()
            if not sid:
                raise InputError(f"line {line}: empty set_id")
            t = (row.get("treated") or "").strip()
            if t not in ("0", "1"):
                raise InputError(f"line {line}: treated must be 0 or 1, got {t!r}")
            g = groups.setdefault(sid, {"line": line, "y": [], "z": [], "delta": []})
            g["z"].append(int(t))
            g["y"].append(_float(row.get("outcome") or "", line, "outcome"))
            if has_delta:
                g["delta"].append(_float(row.get("delta") or "", line, "delta"))
    if not groups:
        raise InputError("no data rows")
    ids = list(groups)
    try:
        study = MatchedStudy.from_long(
            [sid for sid in ids for _ in groups[sid]["y"]],
            [z for sid in ids for z in groups[sid]["z"]],
            [y for sid in ids for y in groups[sid]["y"]],
        )
    except StudyError as exc:
        line = groups.get(exc.set_id, {}).get("line")
        where = f"line {line}: " if line else ""
        raise InputError(f"{where}{exc}") from exc
    delta = np.array([d for sid in ids for d in groups[sid]["delta"]]) if has_delta else None
    return study, delta


def curve_rows(curve: ConfidenceCurve) -> Iterable[tuple]:
    for e in curve.entries:
        yield e.k, e.k / curve.n_sets, e.lower_limit, e.achieved_p, e.status


def write_curve_csv(curve: ConfidenceCurve, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for k, f, lim, p, status in curve_rows(curve):
            w.writerow([k, repr(f), repr(lim), repr(p), status])


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_curve_json(curve: ConfidenceCurve, path: str | Path) -> None:
    write_json(curve.to_dict(), path)


def read_curve_json(path: str | Path) -> ConfidenceCurve:
    return ConfidenceCurve.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_table_csv(columns: dict, path: str | Path) -> None:
    """Write a column-oriented table; floats use ``repr`` for exact round-trips."""
    names = list(columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
