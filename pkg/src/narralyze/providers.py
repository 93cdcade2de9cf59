"""Remote-service client plumbing shared by the embedding and chat backends.

One client class handles everything the two wire protocols need: bearer-token
auth from an environment variable, bounded retries with exponential backoff
and jitter on 429/5xx/timeouts, an in-flight request limit, and a persistent
content-addressed cache storing full request/response pairs for audit.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional


class ProviderError(Exception):
    """Base class for remote-provider failures."""


class AuthError(ProviderError):
    """Authentication rejected (401/403); never retried."""


class RetryExhaustedError(ProviderError):
    """All retry attempts failed."""


class OfflineCacheMissError(ProviderError):
    """Offline mode requested a response that is not in the cache."""


class CacheCollisionError(ProviderError):
    """A cache file's stored request does not match the incoming request."""


@dataclass
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 30.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class ProviderConfig:
    base_url: str = "https://api.openai.com/v1"
    model_id: str = ""
    api_key_env: str = "NARRALYZE_API_KEY"
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    cache_dir: Optional[str] = None
    offline: bool = False
    timeout: float = 60.0


Transport = Callable[[str, dict, dict, float], "tuple[int, dict]"]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise TimeoutError(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    return resp.status_code, body


def request_hash(path: str, payload: dict) -> str:
    """Stable content address for one request."""
    blob = json.dumps({"path": path, "payload": payload},
                      sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class CachedClient:
    """HTTP POST client with retries and a persistent request/response cache.

    Thread-safe: at most ``max_in_flight`` requests run concurrently and
    cache writes are serialized. With ``offline=True`` no network call is
    ever issued; a cache miss raises :class:`OfflineCacheMissError`.
    """

    def __init__(self, config: ProviderConfig, transport: Transport | None = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.config = config
        self._transport = transport or _requests_transport
        self._sleep = sleeper
        self._gate = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._cache_lock = threading.Lock()
        self.network_calls = 0
        self.cache_hits = 0

    # -- cache ---------------------------------------------------------

    def _cache_path(self, key: str) -> Optional[Path]:
        if not self.config.cache_dir:
            return None
        return Path(self.config.cache_dir) / key[:2] / f"{key}.json"

    def _cache_read(self, key: str, path: str, payload: dict):
        loc = self._cache_path(key)
        if loc is None or not loc.exists():
            return None
        with open(loc, encoding="utf-8") as fh:
            entry = json.load(fh)
        if entry.get("request") != {"path": path, "payload": payload}:
            raise CacheCollisionError(f"cache entry {key} stores a different request")
        return entry["response"]

    def _cache_write(self, key: str, path: str, payload: dict, response: dict) -> None:
        loc = self._cache_path(key)
        if loc is None:
            return
        with self._cache_lock:
            loc.parent.mkdir(parents=True, exist_ok=True)
            tmp = loc.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump({"request": {"path": path, "payload": payload},
                           "response": response},
                          fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, loc)

    # -- calls ---------------------------------------------------------

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def call(self, path: str, payload: dict) -> dict:
        """POST ``payload`` to ``base_url + path``, serving from cache when possible."""
        key = request_hash(path, payload)
        cached = self._cache_read(key, path, payload)
        if cached is not None:
            self.cache_hits += 1
            return cached
        if self.config.offline:
            raise OfflineCacheMissError(
                f"offline mode: no cached response for {path} (hash {key[:12]})")
        response = self._call_with_retries(path, payload)
        self._cache_write(key, path, payload, response)
        return response

    def _call_with_retries(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        policy = self.config.retry
        last_error = "no attempt made"
        for attempt in range(policy.max_attempts):
            if attempt > 0:
                delay = min(policy.max_delay,
                            policy.base_delay * (2 ** (attempt - 1)))
                self._sleep(delay * (1.0 + 0.1 * random.random()))
            with self._gate:
                try:
                    status, body = self._transport(url, self._headers(), payload,
                                                   self.config.timeout)
                    self.network_calls += 1
                except TimeoutError as exc:
                    last_error = f"timeout: {exc}"
                    continue
            if status == 200:
                return body
            if status in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {status})")
            if status == 429 or 500 <= status < 600:
                last_error = f"HTTP {status}"
                continue
            raise ProviderError(f"provider returned HTTP {status}: {body}")
        raise RetryExhaustedError(
            f"gave up after {policy.max_attempts} attempts ({last_error})")
