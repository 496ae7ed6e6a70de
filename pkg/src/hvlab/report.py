"""Deterministic CSV/JSON output for scenario results."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

SCHEMA_VERSION = "1.0"


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c, "")) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable as strings
        return v if math.isfinite(v) else format_value(v)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def emit_report(result, out_dir, inputs: dict | None = None, figures: bool = True) -> list[str]:
    """Write every table, the summary JSON and the figures; return the written file names."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in sorted(result.tables):
        columns, rows = result.tables[name]
        fname = f"{name}.csv"
        write_csv(os.path.join(out_dir, fname), columns, rows)
        written.append(fname)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": result.scenario,
        "inputs": inputs or {},
        "measurements": result.summary,
        "verdicts": result.verdicts,
        "passed": result.passed,
    }
    write_json(os.path.join(out_dir, "summary.json"), summary)
    written.append("summary.json")
    if figures:
        from .plotting import render

        for fname, kind, data in result.figures:
            render(kind, data, os.path.join(out_dir, fname))
            written.append(fname)
    return written
