"""Matrix orchestration: render, generate, judge, aggregate, export.

Each (model, template, instance, repeat) cell is cached in its own JSON
file keyed by a digest of its inputs, so an interrupted run resumes
without repeating finished cells. Generation and judging are separate
passes: a judge outage never wastes generator calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, Iterator, TypeVar

import httpx

from . import __version__
from .corpus import BenchmarkInstance, load_dataset, sample_instances
from .judge import JudgeScore, ParseStatus, judge
from .metrics import Leaderboard, PromptAggregate, ScoredRecord, aggregate, rank
from .mock import MockBehavior, MockEndpoint, mock_generator, mock_judge, sentinel_line
from .modelclient import (
    ConfigError,
    FixedClock,
    GenerationRecord,
    GenParams,
    ModelClient,
    ModelEndpointConfig,
    SystemClock,
)
from .reporting import RunManifest, export, run_lock
from .templates import PromptTemplate, RenderedPrompt, load_template_dir, registry, render

logger = logging.getLogger(__name__)

# a failed cell is attempted at most this many times across runs
MAX_CELL_RUNS = 2

T = TypeVar("T")
R = TypeVar("R")


class EndpointUnreachable(RuntimeError):
    pass


@dataclass
class RunConfig:
    dataset: Path
    models: list[ModelEndpointConfig]
    judge: ModelEndpointConfig | None = None
    template_ids: list[str] | None = None
    template_dir: Path | None = None
    gen_params: GenParams = field(default_factory=GenParams)
    concurrency: int = 1
    judge_concurrency: int = 1
    limit: int | None = None
    seed: int | None = None
    repeats: int = 1
    cache_dir: Path = Path(".promptrag-cache")
    out_dir: Path = Path("results")
    skip_judge: bool = False
    mock: MockBehavior | None = None
    fixed_clock: bool = False

    def __post_init__(self) -> None:
        self.dataset = Path(self.dataset)
        self.cache_dir = Path(self.cache_dir)
        self.out_dir = Path(self.out_dir)
        if not self.models:
            raise ConfigError("at least one model endpoint is required")
        names = [m.model_name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names: {names}")
        if self.judge is None and not self.skip_judge:
            raise ConfigError("a judge endpoint is required unless skip_judge is set")
        if self.concurrency < 1 or self.judge_concurrency < 1:
            raise ConfigError("concurrency caps must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.seed is not None and self.limit is None:
            raise ConfigError("seed only applies together with limit")


@dataclass(frozen=True)
class Cell:
    model: ModelEndpointConfig
    template: PromptTemplate
    instance: BenchmarkInstance
    repeat: int = 0

    def key_payload(self, params: GenParams) -> dict:
        return {
            "model_name": self.model.model_name,
            "template_id": self.template.id,
            "instance_id": self.instance.id,
            "gen_params": params.to_dict(),
            "template_body_digest": hashlib.sha256(self.template.body.encode("utf-8")).hexdigest(),
            "repeat": self.repeat,
        }


def cache_key(cell: Cell, params: GenParams) -> str:
    canonical = json.dumps(cell.key_payload(params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CellCache:
    """One JSON file per cell; writes are serialized and atomic."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root) / "cells"
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cache directory not writable: {exc}") from None
        if not os.access(self.root, os.W_OK):
            raise ConfigError(f"cache directory not writable: {self.root}")
        self._lock = threading.Lock()

    def path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        p = self.path(digest)
        try:
            return json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except ValueError:
            logger.warning("discarding corrupt cache entry %s", p)
            return None

    def put(self, digest: str, entry: dict) -> None:
        p = self.path(digest)
        data = json.dumps(entry, indent=1, sort_keys=True, ensure_ascii=False)
        with self._lock:
            p.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.replace(tmp, p)


@dataclass
class RunResult:
    records: list[ScoredRecord]
    aggregates: list[PromptAggregate]
    leaderboards: dict[str, Leaderboard]
    manifest: RunManifest
    cell_count: int
    generation_calls: int = 0
    judge_calls: int = 0

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.records)

    @property
    def exit_code(self) -> int:
        return 2 if self.n_failed else 0


def model_slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _run_bounded(
    items: Iterable[T], fn: Callable[[T], R], cap: int, on_done: Callable[[T, R], None]
) -> None:
    """Apply ``fn`` with at most ``cap`` in flight; ``on_done`` runs on the
    calling thread, so exceptions raised there stop new submissions."""
    it = iter(items)
    if cap == 1:
        for item in it:
            on_done(item, fn(item))
        return
    with ThreadPoolExecutor(max_workers=cap) as pool:
        pending = {pool.submit(fn, item): item for item in islice(it, cap)}
        try:
            while pending:
                done, _ = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    item = pending.pop(fut)
                    on_done(item, fut.result())
                    nxt = next(it, None)
                    if nxt is not None:
                        pending[pool.submit(fn, nxt)] = nxt
        except BaseException:
            for fut in pending:
                fut.cancel()
            raise


class Runner:
    """Runs one configured matrix.

    ``transports`` maps model names to httpx transports and
    ``judge_transport`` overrides the judge's; in mock mode, missing ones
    are filled with in-process mock endpoints. ``on_cell_done(stage, n)``
    is called after the n-th cell of a stage has been persisted.
    """

    def __init__(
        self,
        config: RunConfig,
        *,
        transports: dict[str, httpx.BaseTransport] | None = None,
        judge_transport: httpx.BaseTransport | None = None,
        on_cell_done: Callable[[str, int], None] | None = None,
        backoff_s: float = 0.5,
    ) -> None:
        self.config = config
        self.on_cell_done = on_cell_done
        self.clock = FixedClock() if config.fixed_clock else SystemClock()
        self.mock_endpoints: dict[str, MockEndpoint] = {}
        self.mock_judge_endpoint: MockEndpoint | None = None
        transports = dict(transports or {})

        if config.mock is not None:
            for m in config.models:
                if m.model_name not in transports:
                    ep = mock_generator(_with_model(config.mock, m.model_name))
                    self.mock_endpoints[m.model_name] = ep
                    transports[m.model_name] = ep.transport()
            if config.judge is not None and judge_transport is None:
                self.mock_judge_endpoint = mock_judge(_with_model(config.mock, config.judge.model_name))
                judge_transport = self.mock_judge_endpoint.transport()
        self.inject_sentinel = config.mock is not None
        self._live = config.mock is None and not transports
        self._transports = transports
        self._judge_transport = judge_transport
        self._backoff_s = backoff_s
        self._clients: dict[str, ModelClient] = {}
        self._judge_client: ModelClient | None = None

        self.templates = self._select_templates()
        self.instances, self.dataset_manifest = self._load_instances()
        self.cache = CellCache(config.cache_dir)
        self.generation_calls = 0
        self.judge_calls = 0
        self._counter_lock = threading.Lock()

    # --- setup ---------------------------------------------------------------

    def _select_templates(self) -> list[PromptTemplate]:
        available = registry()
        if self.config.template_dir is not None:
            available += load_template_dir(self.config.template_dir)
        by_id: dict[str, PromptTemplate] = {}
        for t in available:
            by_id[t.id] = t
        if self.config.template_ids is None:
            return list(by_id.values())
        missing = [t for t in self.config.template_ids if t not in by_id]
        if missing:
            raise ConfigError(f"unknown template id(s): {missing}")
        return [by_id[t] for t in dict.fromkeys(self.config.template_ids)]

    def _load_instances(self):
        cfg = self.config
        if cfg.seed is None:
            return load_dataset(cfg.dataset, cfg.limit)
        instances, manifest = load_dataset(cfg.dataset)
        return sample_instances(instances, cfg.limit, cfg.seed), manifest

    def _client(self, cfg: ModelEndpointConfig) -> ModelClient:
        if cfg.model_name not in self._clients:
            self._clients[cfg.model_name] = ModelClient(
                cfg, transport=self._transports.get(cfg.model_name), clock=self.clock, backoff_s=self._backoff_s
            )
        return self._clients[cfg.model_name]

    def _judge(self) -> ModelClient:
        if self._judge_client is None:
            self._judge_client = ModelClient(
                self.config.judge, transport=self._judge_transport, clock=self.clock, backoff_s=self._backoff_s
            )
        return self._judge_client

    def close(self) -> None:
        for c in self._clients.values():
            c.close()
        if self._judge_client is not None:
            self._judge_client.close()

    def __enter__(self) -> Runner:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # --- matrix --------------------------------------------------------------

    def cells(self) -> Iterator[Cell]:
        for model in self.config.models:
            for tpl in self.templates:
                for inst in self.instances:
                    for r in range(self.config.repeats):
                        yield Cell(model, tpl, inst, r)

    @property
    def cell_count(self) -> int:
        return len(self.config.models) * len(self.templates) * len(self.instances) * self.config.repeats

    def _prompt(self, cell: Cell) -> RenderedPrompt:
        p = render(cell.template, cell.instance)
        if self.inject_sentinel:
            p = RenderedPrompt(p.template_id, p.instance_id, f"{sentinel_line(cell.instance.id)}\n{p.text}")
        return p

    def _probe(self, client: ModelClient) -> None:
        report = client.probe()
        if not report.reachable:
            raise EndpointUnreachable(f"{client.cfg.model_name} at {client.cfg.base_url}: {report.error}")

    def _notify(self, stage: str, n: int) -> None:
        if self.on_cell_done is not None:
            self.on_cell_done(stage, n)

    @staticmethod
    def _needs_generation(entry: dict | None) -> bool:
        if entry is None or entry.get("generation") is None:
            return True
        return entry["generation"]["error"] is not None and entry.get("gen_runs", 1) < MAX_CELL_RUNS

    def _needs_judging(self, entry: dict | None, force: bool) -> bool:
        if entry is None or entry.get("generation") is None or entry["generation"]["error"] is not None:
            return False
        if force:
            return True
        j = entry.get("judge")
        if j is None or entry.get("judge_model") != self.config.judge.model_name:
            return True
        return j["parse_status"] == ParseStatus.FAILED.value and entry.get("judge_runs", 1) < MAX_CELL_RUNS

    def generate_stage(self) -> int:
        """Generate every cell lacking a usable cached answer."""
        params = self.config.gen_params
        pending = []
        for cell in self.cells():
            digest = cache_key(cell, params)
            entry = self.cache.get(digest)
            if self._needs_generation(entry):
                pending.append((cell, digest, entry))
        if not pending:
            return 0
        if self._live:
            for m in {c.model.model_name: c.model for c, _, _ in pending}.values():
                self._probe(self._client(m))

        def work(item):
            cell, digest, entry = item
            return self._client(cell.model).generate(params, self._prompt(cell))

        done = 0

        def persist(item, rec: GenerationRecord) -> None:
            nonlocal done
            cell, digest, entry = item
            runs = (entry or {}).get("gen_runs", 0) + 1 if entry and entry.get("generation") else 1
            self.cache.put(
                digest,
                {
                    "key": cell.key_payload(params),
                    "generation": rec.to_dict(),
                    "gen_runs": runs,
                    "judge": None,
                    "judge_model": None,
                    "judge_runs": 0,
                },
            )
            with self._counter_lock:
                self.generation_calls += 1
            done += 1
            self._notify("generate", done)

        _run_bounded(pending, work, self.config.concurrency, persist)
        return done

    def judge_stage(self, force: bool = False) -> int:
        """Score every successfully generated cell lacking a usable score."""
        if self.config.judge is None:
            raise ConfigError("no judge endpoint configured")
        params = self.config.gen_params
        pending = []
        for cell in self.cells():
            digest = cache_key(cell, params)
            entry = self.cache.get(digest)
            if self._needs_judging(entry, force):
                pending.append((cell, digest, entry))
        if not pending:
            return 0
        if self._live:
            self._probe(self._judge())

        def work(item):
            cell, digest, entry = item
            sentinel = sentinel_line(cell.instance.id) if self.inject_sentinel else None
            return judge(
                self._judge(),
                cell.instance.question,
                cell.instance.ground_truth,
                entry["generation"]["answer_text"],
                sentinel=sentinel,
            )

        done = 0

        def persist(item, score: JudgeScore) -> None:
            nonlocal done
            cell, digest, entry = item
            same_judge = entry.get("judge_model") == self.config.judge.model_name and not force
            entry = dict(entry)
            entry["judge"] = score.to_dict()
            entry["judge_runs"] = entry.get("judge_runs", 0) + 1 if same_judge else 1
            entry["judge_model"] = self.config.judge.model_name
            self.cache.put(digest, entry)
            with self._counter_lock:
                self.judge_calls += score.attempts
            done += 1
            self._notify("judge", done)

        _run_bounded(pending, work, self.config.judge_concurrency, persist)
        return done

    def collect(self) -> list[ScoredRecord]:
        """Build scored records from the cache; missing work counts as failed."""
        params = self.config.gen_params
        judge_model = self.config.judge.model_name if self.config.judge else None
        out = []
        for cell in self.cells():
            entry = self.cache.get(cache_key(cell, params)) or {}
            gen = entry.get("generation")
            j = entry.get("judge")
            ok = (
                gen is not None
                and gen["error"] is None
                and j is not None
                and entry.get("judge_model") == judge_model
                and j["value"] is not None
            )
            out.append(
                ScoredRecord(
                    template_id=cell.template.id,
                    instance_id=cell.instance.id,
                    model_name=cell.model.model_name,
                    accuracy=j["value"] if ok else None,
                    latency_s=gen["latency_s"] if gen else 0.0,
                    failed=not ok,
                )
            )
        return out

    def manifest(self, started_at: str, finished_at: str) -> RunManifest:
        cfg = self.config
        return RunManifest(
            dataset_digest=self.dataset_manifest.content_digest,
            dataset_path=str(cfg.dataset),
            instance_count=len(self.instances),
            template_ids=[t.id for t in self.templates],
            models=[m.redacted() for m in cfg.models],
            judge=cfg.judge.redacted() if cfg.judge else None,
            gen_params=cfg.gen_params.to_dict(),
            concurrency={
                "generator": cfg.concurrency,
                "judge": cfg.judge_concurrency,
                "timing": "serial" if cfg.concurrency == 1 else "concurrent",
            },
            harness_version=__version__,
            started_at=started_at,
            finished_at=finished_at,
            repeats=cfg.repeats,
            extra={"mock": cfg.mock is not None, "instance_ids": [i.id for i in self.instances]},
        )

    def report(self, started_at: str | None = None) -> RunResult:
        """Aggregate cached results and write per-model exports."""
        started_at = started_at or self.clock.now()
        records = self.collect()
        aggs = aggregate(records)
        boards = {}
        for m in self.config.models:
            boards[m.model_name] = rank([a for a in aggs if a.model_name == m.model_name], "accuracy")
        manifest = self.manifest(started_at, self.clock.now())
        for name, board in boards.items():
            export(board, manifest, self.config.out_dir / model_slug(name))
        return RunResult(
            records=records,
            aggregates=aggs,
            leaderboards=boards,
            manifest=manifest,
            cell_count=self.cell_count,
            generation_calls=self.generation_calls,
            judge_calls=self.judge_calls,
        )

    def run(self) -> RunResult | None:
        """Full pipeline. Returns ``None`` when judging is skipped."""
        started = self.clock.now()
        lock = run_lock(self.config.out_dir)
        try:
            self.generate_stage()
            if self.config.skip_judge:
                return None
            self.judge_stage()
            return self.report(started)
        finally:
            lock.release()


def _with_model(behavior: MockBehavior, model_name: str) -> MockBehavior:
    d = dict(behavior.__dict__)
    d["model_name"] = model_name
    return MockBehavior(**d)


def run_matrix(config: RunConfig, **kwargs) -> RunResult | None:
    with Runner(config, **kwargs) as runner:
        return runner.run()
