"""Deterministic stand-ins for generator and judge endpoints.

A :class:`MockEndpoint` answers the chat-completions wire format either
in-process (``transport()``, an ``httpx.MockTransport``) or on a loopback
HTTP listener (``serve()``).
"""

from __future__ import annotations

import contextlib
import enum
import json
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Iterator, Mapping

import httpx

SENTINEL_PREFIX = "@@instance: "
_SENTINEL = re.compile(r"^@@instance: (.+)$", re.MULTILINE)
_TOKEN = re.compile(r"\w+")
_JUDGE_SECTIONS = re.compile(
    r"\nGROUND TRUTH:\n(?P<gt>.*?)\n\nRAG ANSWER:\n(?P<ans>.*)\n\nYour Numeric Evaluation",
    re.DOTALL,
)


class JudgeMode(str, enum.Enum):
    LOOKUP = "lookup"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class MockBehavior:
    answers: Mapping[str, str] = field(default_factory=dict)
    default_answer: str = "I do not know."
    delay_ms: float = 0.0
    judge_mode: JudgeMode = JudgeMode.OVERLAP
    scores: Mapping[str, float] = field(default_factory=dict)
    default_score: float = 0.5
    model_name: str = "mock-model"

    def __post_init__(self) -> None:
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        object.__setattr__(self, "judge_mode", JudgeMode(self.judge_mode))
        for k, v in list(self.scores.items()) + [("default", self.default_score)]:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"lookup score for {k} must be in [0, 1], got {v}")

    @classmethod
    def from_dict(cls, d: dict) -> MockBehavior:
        return cls(**d)


def load_behavior(path: str | Path) -> MockBehavior:
    return MockBehavior.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def sentinel_line(instance_id: str) -> str:
    return f"{SENTINEL_PREFIX}{instance_id}"


def find_instance(prompt: str) -> str | None:
    m = _SENTINEL.search(prompt)
    return m.group(1).strip() if m else None


def token_overlap(answer: str, ground_truth: str) -> float:
    """Jaccard ratio of lower-cased word tokens."""
    a = set(_TOKEN.findall(answer.lower()))
    b = set(_TOKEN.findall(ground_truth.lower()))
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


Responder = Callable[[dict], str]


class MockEndpoint:
    """Serves canned chat completions and counts the requests it answers."""

    def __init__(self, responder: Responder, model_name: str = "mock-model", delay_ms: float = 0.0):
        self.responder = responder
        self.model_name = model_name
        self.delay_ms = delay_ms
        self._lock = threading.Lock()
        self.calls = 0
        self.calls_by_instance: Counter[str] = Counter()

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0
            self.calls_by_instance.clear()

    def handle(self, payload: dict) -> tuple[int, dict]:
        try:
            prompt = payload["messages"][-1]["content"]
        except (KeyError, IndexError, TypeError):
            return 400, {"error": {"message": "messages[-1].content is required"}}
        if self.delay_ms:
            time.sleep(self.delay_ms / 1000.0)
        text = self.responder(payload)
        with self._lock:
            self.calls += 1
            iid = find_instance(prompt)
            if iid is not None:
                self.calls_by_instance[iid] += 1
        return 200, {
            "id": "mock-completion",
            "object": "chat.completion",
            "model": self.model_name,
            "choices": [
                {"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}
            ],
        }

    def transport(self) -> httpx.MockTransport:
        def _handler(request: httpx.Request) -> httpx.Response:
            if request.method == "GET" and request.url.path.endswith("/models"):
                return httpx.Response(200, json={"data": [{"id": self.model_name}]})
            if not request.url.path.endswith("/chat/completions"):
                return httpx.Response(404, json={"error": {"message": "not found"}})
            try:
                payload = json.loads(request.content)
            except ValueError:
                return httpx.Response(400, json={"error": {"message": "invalid JSON"}})
            status, body = self.handle(payload)
            return httpx.Response(status, json=body)

        return httpx.MockTransport(_handler)

    @contextlib.contextmanager
    def serve(self, host: str = "127.0.0.1") -> Iterator[str]:
        """Run a loopback HTTP listener; yields its base URL."""
        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def _reply(self, status: int, body: dict) -> None:
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self) -> None:  # noqa: N802
                if self.path.rstrip("/").endswith("/models"):
                    self._reply(200, {"data": [{"id": endpoint.model_name}]})
                else:
                    self._reply(404, {"error": {"message": "not found"}})

            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length)
                if not self.path.rstrip("/").endswith("/chat/completions"):
                    self._reply(404, {"error": {"message": "not found"}})
                    return
                try:
                    payload = json.loads(raw)
                except ValueError:
                    self._reply(400, {"error": {"message": "invalid JSON"}})
                    return
                self._reply(*endpoint.handle(payload))

            def log_message(self, *args) -> None:
                pass

        server = ThreadingHTTPServer((host, 0), Handler)
        server.daemon_threads = True
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            yield f"http://{host}:{server.server_address[1]}/v1"
        finally:
            server.shutdown()
            server.server_close()
            thread.join()


def _prompt(payload: dict) -> str:
    return payload["messages"][-1]["content"]


def mock_generator(behavior: MockBehavior) -> MockEndpoint:
    """Answers with the canned text for the instance named by the sentinel line."""

    def respond(payload: dict) -> str:
        iid = find_instance(_prompt(payload))
        if iid is not None and iid in behavior.answers:
            return behavior.answers[iid]
        return behavior.default_answer

    return MockEndpoint(respond, behavior.model_name, behavior.delay_ms)


def mock_judge(behavior: MockBehavior) -> MockEndpoint:
    """Scores by instance lookup or by answer/ground-truth token overlap."""

    def respond(payload: dict) -> str:
        prompt = _prompt(payload)
        if behavior.judge_mode is JudgeMode.LOOKUP:
            iid = find_instance(prompt)
            score = behavior.scores.get(iid, behavior.default_score) if iid else behavior.default_score
        else:
            m = _JUDGE_SECTIONS.search(prompt)
            score = token_overlap(m.group("ans"), m.group("gt")) if m else 0.0
        return f"{score:.2f}"

    return MockEndpoint(respond, behavior.model_name, behavior.delay_ms)


def scripted(replies: list[str], model_name: str = "mock-model") -> MockEndpoint:
    """Endpoint replying with ``replies`` in order, repeating the last one."""
    state = {"i": 0}
    lock = threading.Lock()

    def respond(payload: dict) -> str:
        with lock:
            i = min(state["i"], len(replies) - 1)
            state["i"] += 1
        return replies[i]

    return MockEndpoint(respond, model_name)
