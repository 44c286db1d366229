"""Validated access to the metrics CSV schema.

The producer writes one row per (measurement window, user) under a fixed
five-column header.  This reader refuses anything that deviates from that
schema so a rendering bug can never silently draw garbage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

EXPECTED_HEADER = ["window", "user", "loss_prob", "avg_reward", "worst_reward"]


class SchemaError(ValueError):
    """The CSV does not match the documented metrics schema."""


@dataclass(frozen=True)
class Row:
    window: int
    user: int
    loss_prob: float
    avg_reward: float
    worst_reward: float


@dataclass
class MetricsFrame:
    """All rows of one metrics CSV, schema-checked."""

    rows: list[Row]

    @classmethod
    def read(cls, path: str | Path) -> "MetricsFrame":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise SchemaError(f"cannot read '{path}': {e}") from e
        reader = csv.reader(text.splitlines())
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"'{path}' is empty (no header)") from None
        if header != EXPECTED_HEADER:
            raise SchemaError(
                f"'{path}' header {header!r} does not match {EXPECTED_HEADER!r}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(EXPECTED_HEADER):
                raise SchemaError(
                    f"'{path}' line {lineno}: expected {len(EXPECTED_HEADER)} "
                    f"fields, got {len(rec)}")
            rows.append(cls._parse_row(path, lineno, rec))
        if not rows:
            raise SchemaError(f"'{path}' has a header but no data rows")
        return cls(rows)

    @staticmethod
    def _parse_row(path: Path, lineno: int, rec: list[str]) -> Row:
        def integer(name: str, text: str) -> int:
            try:
                v = int(text)
            except ValueError:
                raise SchemaError(
                    f"'{path}' line {lineno}: {name}={text!r} is not an integer"
                ) from None
            if v < 0:
                raise SchemaError(f"'{path}' line {lineno}: {name}={v} is negative")
            return v

        def real(name: str, text: str) -> float:
            try:
                v = float(text)
            except ValueError:
                raise SchemaError(
                    f"'{path}' line {lineno}: {name}={text!r} is not a number"
                ) from None
            if not math.isfinite(v):
                raise SchemaError(f"'{path}' line {lineno}: {name}={v} is not finite")
            return v

        loss = real("loss_prob", rec[2])
        if not 0.0 <= loss <= 1.0:
            raise SchemaError(
                f"'{path}' line {lineno}: loss_prob={loss} outside [0, 1]")
        return Row(integer("window", rec[0]), integer("user", rec[1]),
                   loss, real("avg_reward", rec[3]), real("worst_reward", rec[4]))

    # --- convenience views ------------------------------------------------------

    def users(self) -> list[int]:
        return sorted({r.user for r in self.rows})

    def windows(self) -> list[int]:
        return sorted({r.window for r in self.rows})

    def series(self, user: int, column: str) -> list[tuple[int, float]]:
        """(window, value) pairs for one user, window-sorted."""
        pairs = [(r.window, getattr(r, column)) for r in self.rows if r.user == user]
        return sorted(pairs)

    def column(self, column: str) -> list[float]:
        return [getattr(r, column) for r in self.rows]
