"""Check published leaderboards for internal consistency.

A published table lists accuracy, time and efficiency per prompt; the
efficiency column must equal accuracy / time up to print rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .metrics import Leaderboard, LeaderboardEntry, PromptAggregate, RankKey

EFFICIENCY_TOLERANCE = 0.002
# every published cell averages the full 390-question test sample
PUBLISHED_SAMPLE_SIZE = 390
PUBLISHED = {
    "qwen": "qwen2.5-3b-instruct.csv",
    "gemma": "gemma3-4b-it.csv",
}


class FixtureError(ValueError):
    pass


@dataclass(frozen=True)
class PublishedRow:
    rank: int
    prompt_method: str
    accuracy: float
    time_s: float
    efficiency: float


@dataclass(frozen=True)
class PublishedTable:
    model_name: str
    rows: tuple[PublishedRow, ...]
    source: str

    def aggregates(self) -> list[PromptAggregate]:
        return [
            PromptAggregate(
                template_id=r.prompt_method,
                model_name=self.model_name,
                n_ok=PUBLISHED_SAMPLE_SIZE,
                n_failed=0,
                avg_accuracy=r.accuracy,
                avg_time_s=r.time_s,
            )
            for r in self.rows
        ]

    def leaderboard(self) -> Leaderboard:
        """The table in its printed order and printed ranks."""
        aggs = {a.template_id: a for a in self.aggregates()}
        entries = tuple(
            LeaderboardEntry(r.rank, aggs[r.prompt_method])
            for r in sorted(self.rows, key=lambda r: r.rank)
        )
        return Leaderboard(self.model_name, RankKey.ACCURACY, entries)


@dataclass(frozen=True)
class RowCheck:
    prompt_method: str
    printed: float
    recomputed: float
    residual: float
    ok: bool


@dataclass(frozen=True)
class VerifyReport:
    source: str
    checks: tuple[RowCheck, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[RowCheck]:
        return [c for c in self.checks if not c.ok]

    def format(self) -> str:
        lines = [f"{self.source}: {'PASS' if self.passed else 'FAIL'} "
                 f"({len(self.checks) - len(self.failures)}/{len(self.checks)} rows within ±{self.tolerance})"]
        for c in self.checks:
            flag = "ok  " if c.ok else "FAIL"
            lines.append(
                f"  {flag} {c.prompt_method:<46} printed={c.printed:.3f} "
                f"recomputed={c.recomputed:.4f} residual={c.residual:+.4f}"
            )
        return "\n".join(lines)


def published_path(name: str) -> Path:
    try:
        fname = PUBLISHED[name]
    except KeyError:
        raise FixtureError(f"unknown published table {name!r}; choose from {sorted(PUBLISHED)}") from None
    return Path(str(resources.files("promptrag") / "data" / fname))


def load_published(path: str | Path) -> PublishedTable:
    """Read a fixture CSV: optional ``# model: <name>`` comment, then
    ``rank,prompt_method,accuracy,time_s,efficiency`` rows."""
    path = Path(path)
    if not path.is_file():
        raise FixtureError(f"fixture not found: {path}")
    model = path.stem
    body = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            if key.strip() == "model":
                model = value.strip()
            continue
        if line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    needed = {"prompt_method", "accuracy", "time_s", "efficiency"}
    if reader.fieldnames is None or not needed <= set(reader.fieldnames):
        raise FixtureError(f"{path}: header must include {sorted(needed)}")
    rows = []
    for i, rec in enumerate(reader, start=1):
        try:
            rows.append(
                PublishedRow(
                    rank=int(rec.get("rank") or i),
                    prompt_method=rec["prompt_method"].strip(),
                    accuracy=float(rec["accuracy"]),
                    time_s=float(rec["time_s"]),
                    efficiency=float(rec["efficiency"]),
                )
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise FixtureError(f"{path}: malformed row {i}: {exc}") from None
        if rows[-1].time_s <= 0:
            raise FixtureError(f"{path}: row {i} has non-positive time")
    if not rows:
        raise FixtureError(f"{path}: no rows")
    return PublishedTable(model, tuple(rows), str(path))


def verify_tables(fixture: str | Path | PublishedTable, tolerance: float = EFFICIENCY_TOLERANCE) -> VerifyReport:
    table = fixture if isinstance(fixture, PublishedTable) else load_published(fixture)
    checks = []
    for r in table.rows:
        recomputed = r.accuracy / r.time_s
        residual = r.efficiency - recomputed
        checks.append(RowCheck(r.prompt_method, r.efficiency, recomputed, residual, abs(residual) <= tolerance))
    return VerifyReport(table.source, tuple(checks), tolerance)
