from __future__ import annotations

import json
from pathlib import Path

import pytest

from promptrag.corpus import BenchmarkInstance

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def golden_instance() -> BenchmarkInstance:
    d = json.loads((DATA / "golden_instance.json").read_text())
    return BenchmarkInstance(d["id"], d["question"], d["ground_truth"], tuple(d["documents"]))


@pytest.fixture
def instance() -> BenchmarkInstance:
    return BenchmarkInstance("i1", "Q?", "A", ("C1",))


def mock_config(tmp: Path, dataset: Path = DATA / "e2e_5.jsonl", **kw):
    """RunConfig for a mock run rooted in ``tmp``."""
    from promptrag.mock import load_behavior
    from promptrag.modelclient import ModelEndpointConfig
    from promptrag.runner import RunConfig

    base = dict(
        dataset=dataset,
        models=[ModelEndpointConfig("http://mock.invalid/v1", "mock-model", None)],
        judge=ModelEndpointConfig("http://mock.invalid/v1", "mock-judge", None),
        template_ids=["standard_context_aware", "hierarchical_synthesis", "slm_hotpot_smec"],
        cache_dir=tmp / "cache",
        out_dir=tmp / "out",
        mock=load_behavior(DATA / "e2e_behavior.json"),
        fixed_clock=True,
    )
    base.update(kw)
    return RunConfig(**base)


def export_bytes(out_dir: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(out_dir)): p.read_bytes()
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and not p.name.startswith(".")
    }
