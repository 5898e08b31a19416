"""Structured diagnostic reports (JSON for machines, CSV series for plots)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

REPORT_VERSION = 1


def _clean(value: Any) -> Any:
    """Make a value JSON-safe: numpy scalars to Python, non-finite to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return str(value)


@dataclass
class Verdict:
    """Outcome of one tested inequality ``lhs <relation> rhs``."""

    name: str
    passed: bool
    lhs: float | None = None
    rhs: float | None = None
    relation: str = "<="
    tolerance: float | None = None
    witness: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"[{status}] {self.name}"]
        if self.lhs is not None and self.rhs is not None:
            parts.append(f"{self.lhs:.6g} {self.relation} {self.rhs:.6g}")
        if self.tolerance is not None:
            parts.append(f"(tol {self.tolerance:g})")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return _clean(
            {
                "name": self.name,
                "passed": bool(self.passed),
                "lhs": self.lhs,
                "rhs": self.rhs,
                "relation": self.relation,
                "tolerance": self.tolerance,
                "witness": self.witness,
            }
        )


@dataclass
class DiagnosticsReport:
    name: str
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def add(self, verdict: Verdict) -> Verdict:
        self.verdicts.append(verdict)
        return verdict

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "name": self.name,
            "passed": self.passed,
            "metrics": _clean(self.metrics),
            "series": _clean(self.series),
            "verdicts": [v.to_dict() for v in self.verdicts],
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def series_to_csv(self, path: str | Path) -> None:
        """Write all equal-length series as columns of one CSV file."""
        if not self.series:
            Path(path).write_text("")
            return
        names = sorted(self.series)
        length = len(self.series[names[0]])
        if any(len(self.series[n]) != length for n in names):
            raise ValueError("series must share a common length for CSV export")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for i in range(length):
                writer.writerow([repr(float(self.series[n][i])) for n in names])

    def summary(self) -> str:
        return "\n".join(v.line() for v in self.verdicts)
