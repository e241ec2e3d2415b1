"""Leaderboard tables, CSV/JSON exports and the run manifest."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import filelock

from .metrics import Leaderboard, LeaderboardEntry
from .templates import BASELINE_ID

LEADERBOARD_COLUMNS = ("rank", "prompt_method", "accuracy", "time_s", "efficiency", "n_ok", "n_failed")
SCATTER_COLUMNS = ("prompt_method", "accuracy", "time_s")
TABLE_HEADER = ("Rank", "Prompt Method", "Accuracy", "Time(s)", "Efficiency")
LOCK_NAME = ".run.lock"


class RunLockedError(RuntimeError):
    pass


@dataclass
class RunManifest:
    dataset_digest: str
    dataset_path: str
    instance_count: int
    template_ids: list[str]
    models: list[dict]
    judge: dict | None
    gen_params: dict
    concurrency: dict
    harness_version: str
    started_at: str = ""
    finished_at: str = ""
    repeats: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunManifest:
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        return cls.from_dict(json.loads(text))


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.3f}"


def _row(entry: LeaderboardEntry, rank_label: str | None = None) -> tuple[str, ...]:
    a = entry.aggregate
    return (
        rank_label or str(entry.rank),
        a.template_id,
        _fmt(a.avg_accuracy),
        _fmt(a.avg_time_s),
        _fmt(a.efficiency),
    )


def render_table(
    leaderboard: Leaderboard, top_k: int | None = None, baseline_id: str = BASELINE_ID
) -> str:
    """Fixed-width leaderboard text.

    With ``top_k`` only the first rows are shown, followed by a
    ``Baseline`` row carrying the baseline's rank and values.
    """
    if not leaderboard.entries:
        raise ValueError("empty leaderboard")
    if top_k is not None and top_k < 1:
        raise ValueError("top_k must be positive")
    entries = leaderboard.entries if top_k is None else leaderboard.entries[:top_k]
    rows = [TABLE_HEADER] + [_row(e) for e in entries]
    if top_k is not None:
        base = leaderboard.find(baseline_id)
        if base is not None:
            a = base.aggregate
            rows.append(
                ("Baseline", f"Ranked {base.rank}", _fmt(a.avg_accuracy), _fmt(a.avg_time_s), _fmt(a.efficiency))
            )
    widths = [max(len(r[i]) for r in rows) for i in range(len(TABLE_HEADER))]
    lines = []
    for n, r in enumerate(rows):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if n == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def leaderboard_rows(leaderboard: Leaderboard) -> list[dict]:
    rows = []
    for e in leaderboard.entries:
        a = e.aggregate
        rows.append(
            {
                "rank": e.rank,
                "prompt_method": a.template_id,
                "accuracy": _fmt(a.avg_accuracy),
                "time_s": _fmt(a.avg_time_s),
                "efficiency": _fmt(a.efficiency),
                "n_ok": a.n_ok,
                "n_failed": a.n_failed,
            }
        )
    return rows


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def export(leaderboard: Leaderboard, manifest: RunManifest, out_dir: str | Path) -> list[Path]:
    """Write leaderboard.csv, leaderboard.json, scatter.csv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = leaderboard_rows(leaderboard)

    structured = {
        "model_name": leaderboard.model_name,
        "ranked_by": leaderboard.key.value,
        "entries": [
            {
                "rank": e.rank,
                "prompt_method": e.aggregate.template_id,
                "accuracy": e.aggregate.avg_accuracy,
                "time_s": e.aggregate.avg_time_s,
                "efficiency": e.aggregate.efficiency,
                "n_ok": e.aggregate.n_ok,
                "n_failed": e.aggregate.n_failed,
            }
            for e in leaderboard.entries
        ],
    }
    scatter = [
        {"prompt_method": r["prompt_method"], "accuracy": r["accuracy"], "time_s": r["time_s"]}
        for r in rows
    ]
    files = {
        "leaderboard.csv": _csv_text(LEADERBOARD_COLUMNS, rows),
        "leaderboard.json": json.dumps(structured, indent=2, sort_keys=True) + "\n",
        "scatter.csv": _csv_text(SCATTER_COLUMNS, scatter),
        "manifest.json": manifest.to_json(),
    }
    written = []
    for name, text in files.items():
        _write(out / name, text)
        written.append(out / name)
    return written


def read_leaderboard_csv(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["rank"] = int(r["rank"])
        for k in ("accuracy", "time_s", "efficiency"):
            r[k] = None if r[k] == "-" else float(r[k])
        r["n_ok"] = int(r["n_ok"])
        r["n_failed"] = int(r["n_failed"])
    return rows


def run_lock(out_dir: str | Path) -> filelock.BaseFileLock:
    """Non-blocking lock marking ``out_dir`` as owned by one run.

    Released automatically if the owning process dies.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = filelock.FileLock(str(out / LOCK_NAME), timeout=0)
    try:
        lock.acquire()
    except filelock.Timeout:
        raise RunLockedError(f"{out} is in use by another run") from None
    return lock
