"""Residual reports and their JSON / CSV / table serializations."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class CheckRecord:
    """One verified identity: per-point residuals against a tolerance."""

    name: str
    anchor: str
    residuals: np.ndarray
    tolerance: float
    grid: str = ""
    points: Optional[np.ndarray] = None
    note: str = ""

    def __post_init__(self):
        self.residuals = np.atleast_1d(np.asarray(self.residuals, dtype=float)).ravel()
        if self.points is not None:
            self.points = np.asarray(self.points, dtype=float).reshape(len(self.residuals), -1)

    @property
    def max_residual(self) -> float:
        if self.residuals.size == 0:
            return 0.0
        if np.isnan(self.residuals).any():
            return math.inf
        return float(np.max(self.residuals))

    @property
    def mean_residual(self) -> float:
        if self.residuals.size == 0:
            return 0.0
        if np.isnan(self.residuals).any():
            return math.inf
        return float(np.mean(self.residuals))

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    @classmethod
    def failure(cls, name: str, anchor: str, tolerance: float, message: str) -> "CheckRecord":
        return cls(name, anchor, np.array([math.inf]), tolerance, note=message)


@dataclass
class Report:
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    quantities: dict = field(default_factory=dict)

    def add(self, record: CheckRecord) -> CheckRecord:
        self.checks.append(record)
        return record

    def extend(self, other: "Report") -> "Report":
        self.checks.extend(other.checks)
        self.quantities.update(other.quantities)
        return self

    def __getitem__(self, name: str) -> CheckRecord:
        for rec in self.checks:
            if rec.name == name:
                return rec
        raise KeyError(name)

    def names(self) -> list:
        return [c.name for c in self.checks]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def sorted_checks(self) -> list:
        return sorted(self.checks, key=lambda c: c.name)


def _num(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


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
        return _num(obj)
    return obj


def to_dict(report: Report) -> dict:
    checks = []
    for c in report.sorted_checks():
        entry = {
            "name": c.name,
            "paper_anchor": c.anchor,
            "grid": c.grid,
            "max_residual": _num(c.max_residual),
            "mean_residual": _num(c.mean_residual),
            "tolerance": _num(c.tolerance),
            "pass": c.passed,
        }
        if c.note:
            entry["note"] = c.note
        checks.append(entry)
    n_pass = sum(1 for c in report.checks if c.passed)
    summary = {
        "total": len(report.checks),
        "passed": n_pass,
        "failed": len(report.checks) - n_pass,
        "all_passed": n_pass == len(report.checks),
        "quantities": _jsonable(dict(sorted(report.quantities.items()))),
    }
    return {"config": _jsonable(report.config), "checks": checks, "summary": summary}


def emit(report: Report, fmt: str = "json") -> bytes:
    """Serialize a report; output depends only on the report contents."""
    if fmt == "json":
        text = json.dumps(to_dict(report), indent=2, sort_keys=True, allow_nan=False) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["check", "point_index", "coords", "residual", "tolerance"])
        for c in report.sorted_checks():
            for i, r in enumerate(c.residuals):
                coords = "" if c.points is None else " ".join(repr(float(x)) for x in c.points[i])
                writer.writerow([c.name, i, coords, repr(float(r)), repr(float(c.tolerance))])
        text = buf.getvalue()
    elif fmt == "human":
        rows = [("check", "max", "mean", "tol", "status")]
        for c in report.sorted_checks():
            rows.append((c.name, f"{c.max_residual:.3e}", f"{c.mean_residual:.3e}", f"{c.tolerance:.1e}",
                         "PASS" if c.passed else "FAIL"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        n_pass = sum(1 for c in report.checks if c.passed)
        lines.append(f"{n_pass}/{len(report.checks)} checks passed")
        for key, value in sorted(report.quantities.items()):
            lines.append(f"{key} = {value!r}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return text.encode("utf-8")
