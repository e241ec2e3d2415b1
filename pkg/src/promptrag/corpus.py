"""Loading, validation and sampling of line-delimited QA datasets."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

KNOWN_FIELDS = frozenset({"id", "question", "ground_truth", "documents"})


class DatasetError(ValueError):
    """Raised when a dataset file cannot be loaded or fails validation."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class BenchmarkInstance:
    id: str
    question: str
    ground_truth: str
    documents: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "ground_truth": self.ground_truth,
            "documents": list(self.documents),
        }


@dataclass(frozen=True)
class DatasetManifest:
    source_path: str
    instance_count: int
    content_digest: str
    unknown_field_count: int = 0
    unknown_fields: tuple[str, ...] = field(default=())


def _parse_record(raw: object, lineno: int) -> BenchmarkInstance:
    if not isinstance(raw, dict):
        raise DatasetError("record is not an object", lineno)

    for name in ("question", "ground_truth"):
        value = raw.get(name)
        if not isinstance(value, str):
            raise DatasetError(f"field {name!r} missing or not a string", lineno)
        if not value.strip():
            raise DatasetError(f"field {name!r} is empty", lineno)

    docs = raw.get("documents")
    if not isinstance(docs, list) or not docs:
        raise DatasetError("field 'documents' must be a non-empty array", lineno)
    for i, doc in enumerate(docs):
        if not isinstance(doc, str):
            raise DatasetError(f"documents[{i}] is not a string", lineno)
        # whitespace-only passages are rejected, never dropped
        if not doc.strip():
            raise DatasetError(f"documents[{i}] is empty", lineno)

    ident = raw.get("id")
    if ident is None:
        ident = f"row-{lineno}"
    elif not isinstance(ident, (str, int)) or isinstance(ident, bool) or not str(ident).strip():
        raise DatasetError("field 'id' must be a non-empty string", lineno)

    return BenchmarkInstance(
        id=str(ident),
        question=raw["question"],
        ground_truth=raw["ground_truth"],
        documents=tuple(docs),
    )


def load_dataset(
    path: str | Path, limit: int | None = None
) -> tuple[list[BenchmarkInstance], DatasetManifest]:
    """Read a JSONL dataset, validating every record.

    Blank lines are skipped. ``limit`` keeps the first ``limit`` records.
    The manifest digest covers exactly the lines that produced the
    returned instances, with CRLF folded to LF.
    """
    if limit is not None and (isinstance(limit, bool) or limit < 1):
        raise DatasetError(f"limit must be a positive integer, got {limit!r}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")

    instances: list[BenchmarkInstance] = []
    seen: dict[str, int] = {}
    unknown: dict[str, int] = {}
    digest = hashlib.sha256()

    with path.open("r", encoding="utf-8-sig", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if limit is not None and len(instances) >= limit:
                break
            text = line.rstrip("\r\n")
            if not text.strip():
                continue
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"malformed JSON ({exc.msg})", lineno) from None
            inst = _parse_record(raw, lineno)
            if inst.id in seen:
                raise DatasetError(
                    f"duplicate id {inst.id!r} (first seen on line {seen[inst.id]})", lineno
                )
            seen[inst.id] = lineno
            for key in raw:
                if key not in KNOWN_FIELDS:
                    unknown[key] = unknown.get(key, 0) + 1
            digest.update(text.encode("utf-8"))
            digest.update(b"\n")
            instances.append(inst)

    if unknown:
        logger.warning("ignored unknown fields in %s: %s", path, sorted(unknown))
    manifest = DatasetManifest(
        source_path=str(path),
        instance_count=len(instances),
        content_digest=digest.hexdigest(),
        unknown_field_count=sum(unknown.values()),
        unknown_fields=tuple(sorted(unknown)),
    )
    return instances, manifest


def dump_dataset(instances: Iterable[BenchmarkInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")


def sample_instances(
    instances: list[BenchmarkInstance], n: int, seed: int
) -> list[BenchmarkInstance]:
    """Pick ``n`` distinct instances, keeping their original relative order."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n > len(instances):
        raise ValueError(f"cannot sample {n} from {len(instances)} instances")
    picked = sorted(random.Random(seed).sample(range(len(instances)), n))
    return [instances[i] for i in picked]
