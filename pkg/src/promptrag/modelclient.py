"""OpenAI-compatible chat-completions client with wall-clock latency timing."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import httpx

from .templates import RenderedPrompt

logger = logging.getLogger(__name__)

MAX_RETRIES_CAP = 5
TRANSIENT_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


class ConfigError(ValueError):
    """Invalid endpoint configuration or missing credentials."""


class EndpointError(RuntimeError):
    pass


# --- clocks ------------------------------------------------------------------


class SystemClock:
    """Monotonic timer for latency, UTC wall time for timestamps."""

    def monotonic(self) -> float:
        return time.perf_counter()

    def now(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")


class FixedClock:
    """Deterministic clock for reproducible runs.

    Every ``monotonic()`` call advances a per-thread counter by ``step``,
    so a dispatch/receipt pair always measures exactly ``step`` seconds.
    """

    def __init__(self, step: float = 0.25, stamp: str = "1970-01-01T00:00:00+00:00") -> None:
        if step <= 0:
            raise ValueError("step must be positive")
        self.step = step
        self.stamp = stamp
        self._local = threading.local()

    def monotonic(self) -> float:
        t = getattr(self._local, "t", 0.0) + self.step
        self._local.t = t
        return t

    def now(self) -> str:
        return self.stamp


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ModelEndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str | None = "MODEL_API_KEY"
    timeout_s: float = 120.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("base_url is required")
        if not self.model_name:
            raise ConfigError("model_name is required")
        if not self.timeout_s > 0:
            raise ConfigError(f"timeout_s must be > 0, got {self.timeout_s}")
        if not 0 <= self.max_retries <= MAX_RETRIES_CAP:
            raise ConfigError(f"max_retries must be in [0, {MAX_RETRIES_CAP}], got {self.max_retries}")

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        return key

    def redacted(self) -> dict:
        # only the variable name is recorded, never its value
        return asdict(self)


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.0
    max_new_tokens: int = 1024
    stop_sequences: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not 0 <= self.temperature <= 2:
            raise ConfigError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ConfigError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
            "stop_sequences": list(self.stop_sequences),
        }


@dataclass(frozen=True)
class GenerationRecord:
    template_id: str
    instance_id: str
    model_name: str
    answer_text: str
    latency_s: float
    attempts: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GenerationRecord:
        return cls(**d)


@dataclass(frozen=True)
class ProbeReport:
    reachable: bool
    reported_model: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class Completion:
    text: str
    model: str | None
    latency_s: float
    attempts: int
    error: str | None = None


def request_body(model: str, prompt: str, params: GenParams) -> bytes:
    payload = {
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "max_tokens": params.max_new_tokens,
    }
    if params.stop_sequences:
        payload["stop"] = list(params.stop_sequences)
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def _extract(resp: httpx.Response) -> tuple[str, str | None]:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EndpointError(f"malformed response body: {exc!r}") from None
    if content is None:
        content = ""
    if not isinstance(content, str):
        raise EndpointError("malformed response body: content is not a string")
    model = data.get("model") if isinstance(data, dict) else None
    return content, model if isinstance(model, str) else None


class ModelClient:
    """Blocking client for one endpoint; safe to share between threads."""

    def __init__(
        self,
        cfg: ModelEndpointConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        clock: SystemClock | FixedClock | None = None,
        backoff_s: float = 0.5,
    ) -> None:
        self.cfg = cfg
        self.clock = clock or SystemClock()
        self.backoff_s = backoff_s
        headers = {"Content-Type": "application/json"}
        key = cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(
            base_url=cfg.base_url.rstrip("/"),
            headers=headers,
            timeout=cfg.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ModelClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, prompt: str, params: GenParams, max_retries: int | None = None) -> Completion:
        """POST one chat completion, retrying transient failures.

        Latency covers dispatch to full-body receipt of the final attempt.
        """
        retries = self.cfg.max_retries if max_retries is None else max_retries
        body = request_body(self.cfg.model_name, prompt, params)
        attempt = 0
        while True:
            attempt += 1
            start = self.clock.monotonic()
            transient = True
            try:
                resp = self._http.post("/chat/completions", content=body)
            except httpx.TimeoutException as exc:
                latency = self.clock.monotonic() - start
                error = f"timeout after {self.cfg.timeout_s}s: {exc}"
            except httpx.TransportError as exc:
                latency = self.clock.monotonic() - start
                error = f"transport error: {exc!r}"
            else:
                latency = self.clock.monotonic() - start
                if resp.status_code >= 300:
                    transient = resp.status_code in TRANSIENT_STATUS
                    error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                else:
                    try:
                        text, model = _extract(resp)
                    except EndpointError as exc:
                        transient = False
                        error = str(exc)
                    else:
                        return Completion(text, model, latency, attempt)
            if not transient or attempt > retries:
                return Completion("", None, latency, attempt, error)
            delay = self.backoff_s * 2 ** (attempt - 1)
            logger.info("retrying %s after %s (attempt %d)", self.cfg.model_name, error, attempt)
            if delay > 0:
                time.sleep(delay)

    def generate(self, params: GenParams, prompt: RenderedPrompt) -> GenerationRecord:
        if not prompt.text:
            raise ValueError("prompt text is empty")
        c = self.complete(prompt.text, params)
        error = c.error
        if error is None and not c.text:
            error = "empty completion"
        return GenerationRecord(
            template_id=prompt.template_id,
            instance_id=prompt.instance_id,
            model_name=self.cfg.model_name,
            answer_text=c.text if error is None else "",
            latency_s=max(c.latency_s, 1e-9),
            attempts=c.attempts,
            error=error,
        )

    def probe(self) -> ProbeReport:
        c = self.complete("ping", GenParams(temperature=0.0, max_new_tokens=1), max_retries=1)
        if c.error is not None:
            return ProbeReport(reachable=False, error=c.error)
        return ProbeReport(reachable=True, reported_model=c.model)


def generate(
    cfg: ModelEndpointConfig,
    params: GenParams,
    prompt: RenderedPrompt,
    *,
    transport: httpx.BaseTransport | None = None,
) -> GenerationRecord:
    with ModelClient(cfg, transport=transport) as client:
        return client.generate(params, prompt)


def probe(cfg: ModelEndpointConfig, *, transport: httpx.BaseTransport | None = None) -> ProbeReport:
    try:
        client = ModelClient(cfg, transport=transport, backoff_s=0.1)
    except ConfigError as exc:
        return ProbeReport(reachable=False, error=str(exc))
    with client:
        return client.probe()
