"""Per-(model, template) aggregation, efficiency and leaderboards."""

from __future__ import annotations

import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

logger = logging.getLogger(__name__)


class RankKey(str, enum.Enum):
    ACCURACY = "accuracy"
    TIME = "time"
    EFFICIENCY = "efficiency"


@dataclass(frozen=True)
class ScoredRecord:
    template_id: str
    instance_id: str
    model_name: str
    accuracy: float | None
    latency_s: float
    failed: bool = False

    def __post_init__(self) -> None:
        if self.failed and self.accuracy is not None:
            raise ValueError("failed records carry no accuracy")
        if not self.failed and self.accuracy is None:
            raise ValueError("successful records need an accuracy")


@dataclass(frozen=True)
class PromptAggregate:
    template_id: str
    model_name: str
    n_ok: int
    n_failed: int
    avg_accuracy: float | None
    avg_time_s: float | None

    @property
    def efficiency(self) -> float | None:
        """Mean accuracy divided by mean processing time."""
        if self.avg_accuracy is None or self.avg_time_s is None:
            return None
        return self.avg_accuracy / self.avg_time_s

    @property
    def has_scores(self) -> bool:
        return self.n_ok > 0 and self.avg_accuracy is not None


@dataclass(frozen=True)
class LeaderboardEntry:
    rank: int
    aggregate: PromptAggregate


@dataclass(frozen=True)
class Leaderboard:
    model_name: str
    key: RankKey
    entries: tuple[LeaderboardEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def find(self, template_id: str) -> LeaderboardEntry | None:
        for e in self.entries:
            if e.aggregate.template_id == template_id:
                return e
        return None


def aggregate(records: Iterable[ScoredRecord]) -> list[PromptAggregate]:
    """Group by (model, template); failed records count but are not averaged.

    A group with no successful record is kept with ``None`` averages and
    logged, so it shows up in reports instead of vanishing.
    """
    groups: dict[tuple[str, str], list[ScoredRecord]] = defaultdict(list)
    for r in records:
        groups[(r.model_name, r.template_id)].append(r)
    if not groups:
        raise ValueError("no records to aggregate")

    out = []
    for (model, tid), recs in sorted(groups.items()):
        ok = [r for r in recs if not r.failed]
        n_failed = len(recs) - len(ok)
        if not ok:
            logger.warning("%s / %s: no successful records (%d failed)", model, tid, n_failed)
            out.append(PromptAggregate(tid, model, 0, n_failed, None, None))
            continue
        # fsum is exactly rounded, so means do not depend on record order
        acc = _fmean(r.accuracy for r in ok)
        t = _fmean(r.latency_s for r in ok)
        out.append(PromptAggregate(tid, model, len(ok), n_failed, acc, t))
    return out


def _fmean(values: Iterable[float]) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals)


def _sort_key(a: PromptAggregate, key: RankKey):
    if not a.has_scores:
        return (1, 0.0, a.template_id)
    if key is RankKey.ACCURACY:
        return (0, -a.avg_accuracy, a.template_id)
    if key is RankKey.TIME:
        return (0, a.avg_time_s, a.template_id)
    return (0, -a.efficiency, a.template_id)


def rank(aggregates: Iterable[PromptAggregate], key: RankKey | str = RankKey.ACCURACY) -> Leaderboard:
    """Order one model's aggregates; ties fall back to template id.

    Accuracy and efficiency sort descending, time ascending. Aggregates
    without scores go last.
    """
    aggs = list(aggregates)
    if not aggs:
        raise ValueError("nothing to rank")
    models = {a.model_name for a in aggs}
    if len(models) > 1:
        raise ValueError(f"rank() needs a single model, got {sorted(models)}")
    key = RankKey(key)
    ordered = sorted(aggs, key=lambda a: _sort_key(a, key))
    entries = tuple(LeaderboardEntry(i, a) for i, a in enumerate(ordered, start=1))
    return Leaderboard(model_name=models.pop(), key=key, entries=entries)


def baseline_delta(
    aggregates: Iterable[PromptAggregate], baseline_id: str
) -> list[tuple[str, float]]:
    """Accuracy difference of every template against the baseline template."""
    aggs = list(aggregates)
    base = next((a for a in aggs if a.template_id == baseline_id), None)
    if base is None:
        raise KeyError(f"baseline {baseline_id!r} not among aggregates")
    if not base.has_scores:
        raise ValueError(f"baseline {baseline_id!r} has no successful records")
    return [(a.template_id, a.avg_accuracy - base.avg_accuracy) for a in aggs if a.has_scores]


def by_category(aggregates: Iterable[PromptAggregate], categories: dict[str, str]) -> dict[str, float]:
    """Mean of template accuracies within each category (convenience roll-up)."""
    buckets: dict[str, list[float]] = defaultdict(list)
    for a in aggregates:
        if a.has_scores and a.template_id in categories:
            buckets[categories[a.template_id]].append(a.avg_accuracy)
    return {c: _fmean(v) for c, v in sorted(buckets.items())}
