"""Rate-limited HTTP access with exponential backoff and cassette replay.

One :class:`RateLimiter` is kept per remote host. It bounds the number of
requests in flight and spaces request starts by ``min_interval_ms``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable
from urllib.parse import urlsplit

import requests

from .errors import AuthError, CassetteMiss, RateLimited, TransportError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})
# query parameters never written to cassettes or used in their keys
SECRET_PARAMS = frozenset({"api-key", "api_key", "key"})


@dataclass(frozen=True)
class RatePolicy:
    max_concurrent: int = 4
    min_interval_ms: int = 0
    max_retries: int = 3
    base_backoff_ms: int = 500
    max_backoff_ms: int = 30_000

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be positive")
        if self.min_interval_ms < 0 or self.max_retries < 0:
            raise ValueError("min_interval_ms and max_retries must be non-negative")
        if self.base_backoff_ms < 1:
            raise ValueError("base_backoff_ms must be positive")

    def backoff_ms(self, attempt: int) -> int:
        return min(self.base_backoff_ms * 2**attempt, self.max_backoff_ms)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RatePolicy":
        return cls(**(data or {}))


class RateLimiter:
    """Concurrency gate plus minimum spacing between request starts.

    ``clock`` and ``sleep`` are injectable so tests can drive a fake clock.
    Every admitted start time is appended to ``starts``.
    """

    def __init__(
        self,
        policy: RatePolicy,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.policy = policy
        self._clock = clock
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(policy.max_concurrent)
        self._lock = threading.Lock()
        self._last_start: float | None = None
        self._in_flight = 0
        self.max_in_flight = 0
        self.starts: list[float] = []

    def acquire(self) -> None:
        self._slots.acquire()
        interval = self.policy.min_interval_ms / 1000.0
        # lock is held while waiting so starts are serialized
        with self._lock:
            now = self._clock()
            if self._last_start is not None:
                wait = self._last_start + interval - now
                if wait > 0:
                    self._sleep(wait)
                    now = self._clock()
            self._last_start = now
            self.starts.append(now)
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)

    def release(self) -> None:
        with self._lock:
            self._in_flight -= 1
        self._slots.release()

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()
        return False


class RetryableError(TransportError):
    """Internal marker for a failure that may succeed on a later attempt."""


def call_with_retry(
    fn: Callable[[], Any],
    policy: RatePolicy,
    *,
    sleep: Callable[[float], None] = time.sleep,
    on_retry: Callable[[int, Exception], None] | None = None,
    what: str = "request",
):
    """Run ``fn`` up to ``max_retries + 1`` times.

    Only :class:`RetryableError` triggers a retry; a final
    :class:`RateLimited` raised by a nested retry loop propagates as is.
    The delay before retry ``k`` (0-based) is ``base_backoff_ms * 2**k``
    capped at ``max_backoff_ms``, or the server's ``retry_after`` if larger.
    """
    attempt = 0
    while True:
        try:
            return fn()
        except RetryableError as exc:
            if attempt >= policy.max_retries:
                if exc.status == 429:
                    raise RateLimited(
                        f"{what}: still rate limited after {attempt} retries", status=429
                    ) from exc
                raise TransportError(
                    f"{what}: failed after {attempt} retries: {exc}", status=exc.status
                ) from exc
            delay = policy.backoff_ms(attempt) / 1000.0
            retry_after = getattr(exc, "retry_after", None)
            if retry_after:
                delay = max(delay, min(retry_after, policy.max_backoff_ms / 1000.0))
            logger.warning("%s failed (%s); retry %d in %.3fs", what, exc, attempt + 1, delay)
            if on_retry is not None:
                on_retry(attempt, exc)
            sleep(delay)
            attempt += 1


@dataclass
class Reply:
    status: int
    text: str
    url: str = ""

    def json(self):
        return json.loads(self.text)


def _public_params(params: dict | None) -> dict:
    return {k: v for k, v in sorted((params or {}).items()) if k not in SECRET_PARAMS}


def exchange_key(method: str, url: str, params: dict | None = None, body: Any = None) -> str:
    payload = json.dumps(
        {"method": method, "url": url, "params": _public_params(params), "body": body},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Cassette:
    """Recorded HTTP exchanges for deterministic offline replay.

    ``mode`` is ``"record"`` (pass through and store) or ``"replay"``
    (never touch the network; unknown requests raise :class:`CassetteMiss`).
    """

    def __init__(self, path: str | Path, mode: str = "replay"):
        if mode not in ("record", "replay"):
            raise ValueError("cassette mode must be 'record' or 'replay'")
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._exchanges: dict[str, dict] = {}
        if self.path.exists():
            data = json.loads(self.path.read_text(encoding="utf-8"))
            self._exchanges = {e["key"]: e for e in data.get("exchanges", [])}
        elif mode == "replay":
            raise FileNotFoundError(f"cassette not found: {self.path}")

    def lookup(self, key: str) -> Reply:
        try:
            entry = self._exchanges[key]
        except KeyError:
            raise CassetteMiss(f"no recorded exchange for key {key[:12]}") from None
        return Reply(entry["status"], entry["body"], entry.get("url", ""))

    def store(self, key: str, method: str, url: str, params: dict | None, reply: Reply) -> None:
        with self._lock:
            self._exchanges[key] = {
                "key": key,
                "method": method,
                "url": url,
                "params": _public_params(params),
                "status": reply.status,
                "body": reply.text,
            }

    def save(self) -> None:
        with self._lock:
            exchanges = [self._exchanges[k] for k in sorted(self._exchanges)]
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(
                json.dumps({"exchanges": exchanges}, indent=1, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )


class HttpClient:
    """Thread-safe HTTP client sharing one rate limiter per host."""

    def __init__(
        self,
        policy: RatePolicy | None = None,
        *,
        timeout: float = 30.0,
        cassette: Cassette | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        headers: dict | None = None,
    ):
        self.policy = policy or RatePolicy()
        self.timeout = timeout
        self.cassette = cassette
        self._clock = clock
        self._sleep = sleep
        self._headers = dict(headers or {})
        self._limiters: dict[str, RateLimiter] = {}
        self._lock = threading.Lock()
        self._local = threading.local()
        self.requests_sent = 0
        self.retries = 0

    def limiter(self, url: str) -> RateLimiter:
        host = urlsplit(url).netloc
        with self._lock:
            if host not in self._limiters:
                self._limiters[host] = RateLimiter(self.policy, self._clock, self._sleep)
            return self._limiters[host]

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            session.headers.update(self._headers)
            self._local.session = session
        return session

    def _send(self, method: str, url: str, params: dict | None, body: Any, headers: dict | None) -> Reply:
        key = exchange_key(method, url, params, body)
        retry_after = None
        if self.cassette is not None and self.cassette.mode == "replay":
            reply = self.cassette.lookup(key)
        else:
            with self.limiter(url):
                with self._lock:
                    self.requests_sent += 1
                try:
                    resp = self._session().request(
                        method, url, params=params, json=body, headers=headers, timeout=self.timeout
                    )
                except requests.RequestException as exc:
                    raise RetryableError(f"{method} {url}: {exc}") from exc
                reply = Reply(resp.status_code, resp.text, resp.url)
                retry_after = resp.headers.get("Retry-After")
            if self.cassette is not None and reply.status < 500 and reply.status != 429:
                self.cassette.store(key, method, url, params, reply)
        return self._check(method, url, reply, retry_after)

    @staticmethod
    def _check(method: str, url: str, reply: Reply, retry_after: str | None) -> Reply:
        if reply.status in (401, 403):
            raise AuthError(f"{method} {url}: HTTP {reply.status}", status=reply.status)
        if reply.status == 429:
            err = RetryableError(f"{method} {url}: HTTP 429", status=429)
            try:
                err.retry_after = float(retry_after) if retry_after else None
            except ValueError:
                err.retry_after = None
            raise err
        if reply.status in RETRYABLE_STATUS:
            raise RetryableError(f"{method} {url}: HTTP {reply.status}", status=reply.status)
        if reply.status >= 400:
            raise TransportError(f"{method} {url}: HTTP {reply.status}", status=reply.status)
        return reply

    def _count_retry(self, attempt, exc):
        with self._lock:
            self.retries += 1

    def request(self, method: str, url: str, *, params=None, json_body=None, headers=None) -> Reply:
        return call_with_retry(
            lambda: self._send(method, url, params, json_body, headers),
            self.policy,
            sleep=self._sleep,
            on_retry=self._count_retry,
            what=f"{method} {url}",
        )

    def get(self, url: str, params: dict | None = None) -> Reply:
        return self.request("GET", url, params=params)

    def post_json(self, url: str, body: Any, headers: dict | None = None) -> Reply:
        return self.request("POST", url, json_body=body, headers=headers)
