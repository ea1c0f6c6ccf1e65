"""Chat-completion client for the teacher judges.

Speaks the OpenAI-compatible JSON wire shape, retries transient failures
with jittered exponential backoff, rate-limits per endpoint, and supports
record/replay cassettes keyed by a stable prompt digest so the whole
pipeline can run hermetically.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Any, Callable, Iterable

import httpx

try:
    import tomllib
except ImportError:  # Python 3.10
    try:
        import tomli as tomllib  # type: ignore[no-redef]
    except ImportError:
        tomllib = None  # type: ignore[assignment]


class TransportError(Exception):
    pass


class AuthError(Exception):
    pass


class ReplayMiss(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ModelEndpoint:
    judge_id: str
    base_url: str
    model_name: str
    api_key_env: str = ""
    max_tokens: int = 1024
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3
    requests_per_second: float = 2.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelEndpoint":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        for required in ("judge_id", "base_url", "model_name"):
            if required not in known:
                raise ConfigError(f"endpoint config missing {required!r}")
        return cls(**known)


def load_endpoints(path: str | Path) -> list[ModelEndpoint]:
    """Read endpoint definitions from a JSON or TOML config file."""
    path = Path(path)
    if path.suffix == ".toml":
        if tomllib is None:
            raise ConfigError("TOML endpoint configs need tomllib/tomli; use JSON")
        obj = tomllib.loads(path.read_text(encoding="utf-8"))
    else:
        obj = json.loads(path.read_text(encoding="utf-8"))
    entries = obj["endpoints"] if isinstance(obj, dict) else obj
    return [ModelEndpoint.from_dict(e) for e in entries]


def request_digest(judge_id: str, prompt: str) -> str:
    """Stable cassette key: endpoint identity plus prompt text."""
    return hashlib.sha256(f"{judge_id}\x00{prompt}".encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CassetteEntry:
    response: str
    latency_ms: int


class Cassette:
    """Digest-keyed recording of judge responses, persisted as JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, CassetteEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self.entries[obj["digest"]] = CassetteEntry(
                        response=obj["response"],
                        latency_ms=int(obj.get("latency_ms", 0)),
                    )

    def get(self, digest: str) -> CassetteEntry | None:
        return self.entries.get(digest)

    def record(self, digest: str, response: str, latency_ms: int) -> None:
        with self._lock:
            if digest in self.entries:
                return
            self.entries[digest] = CassetteEntry(response, latency_ms)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "digest": digest,
                                "response": response,
                                "latency_ms": latency_ms,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )


class TokenBucket:
    """Blocking token bucket; clock/sleep are injectable for tests."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(
                    self.capacity, self.tokens + (now - self._updated) * self.rate
                )
                self._updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency: float
    from_cache: bool = False


@dataclass(frozen=True)
class FanOutResult:
    judge_id: str
    text: str | None
    latency: float = 0.0
    error: Exception | None = None


def _http_transport(
    endpoint: ModelEndpoint, payload: dict, headers: dict
) -> tuple[int, Any]:
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    response = httpx.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
    try:
        body = response.json()
    except ValueError:
        body = response.text
    return response.status_code, body


_TRANSIENT_EXCEPTIONS = (httpx.TimeoutException, httpx.TransportError, ConnectionError)


class LlmClient:
    """Completion client with modes: live, record (live + cassette append),
    and replay (cassette only; misses raise ReplayMiss)."""

    def __init__(
        self,
        mode: str = "live",
        cassette: Cassette | None = None,
        transport: Callable[[ModelEndpoint, dict, dict], tuple[int, Any]] | None = None,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if mode not in ("live", "record", "replay"):
            raise ConfigError(f"unknown client mode {mode!r}")
        if mode in ("record", "replay") and cassette is None:
            raise ConfigError(f"mode {mode!r} requires a cassette")
        self.mode = mode
        self.cassette = cassette
        self._transport = transport or _http_transport
        self._backoff_base = backoff_base
        self._sleep = sleep
        self._rng = Random(0)
        self._buckets: dict[str, TokenBucket] = {}
        self._bucket_lock = threading.Lock()

    def _bucket(self, endpoint: ModelEndpoint) -> TokenBucket:
        with self._bucket_lock:
            if endpoint.judge_id not in self._buckets:
                self._buckets[endpoint.judge_id] = TokenBucket(
                    endpoint.requests_per_second
                )
            return self._buckets[endpoint.judge_id]

    def _headers(self, endpoint: ModelEndpoint) -> dict:
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env)
            if not key:
                raise AuthError(
                    f"environment variable {endpoint.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _backoff(self, attempt: int) -> float:
        jitter = 0.9 + 0.2 * self._rng.random()  # bounded +/-10%
        return self._backoff_base * (2**attempt) * jitter

    def _complete_live(self, endpoint: ModelEndpoint, prompt: str) -> tuple[str, float]:
        payload = {
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
        }
        headers = self._headers(endpoint)
        bucket = self._bucket(endpoint)
        last_error = "no attempt made"
        for attempt in range(endpoint.max_retries + 1):
            bucket.acquire()
            started = time.monotonic()
            try:
                status, body = self._transport(endpoint, payload, headers)
            except _TRANSIENT_EXCEPTIONS as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                if attempt < endpoint.max_retries:
                    self._sleep(self._backoff(attempt))
                continue
            latency = time.monotonic() - started
            if status in (401, 403):
                raise AuthError(f"{endpoint.judge_id}: HTTP {status}")
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
                if attempt < endpoint.max_retries:
                    self._sleep(self._backoff(attempt))
                continue
            if status != 200:
                raise TransportError(f"{endpoint.judge_id}: HTTP {status}: {body}")
            try:
                return body["choices"][0]["message"]["content"], latency
            except (KeyError, IndexError, TypeError):
                raise TransportError(
                    f"{endpoint.judge_id}: malformed completion body"
                ) from None
        raise TransportError(
            f"{endpoint.judge_id}: exhausted {endpoint.max_retries + 1} attempts "
            f"(last: {last_error})"
        )

    def complete(self, endpoint: ModelEndpoint, prompt: str) -> CompletionResult:
        digest = request_digest(endpoint.judge_id, prompt)
        if self.mode == "replay":
            entry = self.cassette.get(digest)
            if entry is None:
                raise ReplayMiss(f"{endpoint.judge_id}: digest {digest[:12]} not recorded")
            return CompletionResult(
                text=entry.response,
                latency=entry.latency_ms / 1000.0,
                from_cache=True,
            )
        text, latency = self._complete_live(endpoint, prompt)
        if self.mode == "record":
            self.cassette.record(digest, text, int(latency * 1000))
        return CompletionResult(text=text, latency=latency, from_cache=False)

    def fan_out(
        self, endpoints: Iterable[ModelEndpoint], prompt: str
    ) -> list[FanOutResult]:
        """Issue all requests concurrently; results keep declaration order
        and per-endpoint errors are captured, never aborting siblings."""
        endpoints = list(endpoints)
        if not endpoints:
            raise ConfigError("fan_out requires at least one endpoint")
        with ThreadPoolExecutor(max_workers=len(endpoints)) as pool:
            futures = [pool.submit(self.complete, e, prompt) for e in endpoints]
            results = []
            for endpoint, future in zip(endpoints, futures):
                try:
                    done = future.result()
                    results.append(
                        FanOutResult(endpoint.judge_id, done.text, done.latency, None)
                    )
                except Exception as exc:  # captured as a value per contract
                    results.append(FanOutResult(endpoint.judge_id, None, 0.0, exc))
        return results
