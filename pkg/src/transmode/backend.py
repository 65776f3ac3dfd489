"""Chat-completion transport, response cache and the offline mock backend."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .codes import Mode
from .errors import BackendTimeout, CacheMiss, ConfigError, CredentialError, ParseError, TransportError
from .prompting import PromptSpec, parse_prediction

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_PARALLELISM = 4


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    supports_temperature: bool = True
    max_output_tokens: int = 1024
    request_timeout: float = 60.0

    def __post_init__(self):
        if is_o_series(self.model_id) and self.supports_temperature:
            raise ConfigError(f"{self.model_id} does not accept a temperature parameter")


def is_o_series(model_id: str) -> bool:
    return re.match(r"o\d", model_id) is not None


PROFILES = {
    "gpt-4o": ModelProfile("gpt-4o"),
    "gpt-4o-mini": ModelProfile("gpt-4o-mini"),
    "o3-mini": ModelProfile("o3-mini", supports_temperature=False, max_output_tokens=4096, request_timeout=120.0),
    "o4-mini": ModelProfile("o4-mini", supports_temperature=False, max_output_tokens=4096, request_timeout=120.0),
}


def profile_for(model_id: str, **overrides) -> ModelProfile:
    base = PROFILES.get(model_id) or ModelProfile(model_id, supports_temperature=not is_o_series(model_id))
    return ModelProfile(**{**asdict(base), **overrides})


# --------------------------------------------------------------------------
# request bodies and digests


def request_body(prompt: PromptSpec, profile: ModelProfile) -> dict:
    body = {"model": profile.model_id, "messages": prompt.to_messages()}
    if profile.supports_temperature:
        body["temperature"] = 0
        body["max_tokens"] = profile.max_output_tokens
    else:
        # reasoning models take a completion budget instead of max_tokens
        body["max_completion_tokens"] = profile.max_output_tokens
    return body


def serialize_body(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def cache_key(prompt: PromptSpec, profile: ModelProfile) -> str:
    return digest(serialize_body(request_body(prompt, profile)))


@dataclass(frozen=True)
class CompletionRecord:
    cache_key: str
    model_id: str
    request_time: str
    raw_reply: str
    parsed: str | None
    reply_digest: str

    @classmethod
    def create(cls, key: str, model_id: str, raw_reply: str) -> "CompletionRecord":
        try:
            parsed = parse_prediction(raw_reply).value
        except ParseError:
            parsed = None
        return cls(key, model_id, datetime.now(timezone.utc).isoformat(timespec="seconds"),
                   raw_reply, parsed, digest(raw_reply.encode("utf-8")))

    def verify(self, key: str) -> bool:
        return self.cache_key == key and self.reply_digest == digest(self.raw_reply.encode("utf-8"))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


# --------------------------------------------------------------------------
# backends


class Backend(Protocol):
    def complete(self, prompt: PromptSpec, profile: ModelProfile) -> str: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * 2.0 ** attempt)

    def schedule(self) -> list[float]:
        return [self.delay(i) for i in range(self.max_retries)]


def _transient(status: int) -> bool:
    return status == 429 or 500 <= status < 600


class OpenAICompatibleBackend:
    """POSTs chat-completion requests to ``{base_url}/chat/completions``.

    The bearer token is read from ``key_env`` when the first request is
    made; a missing key raises CredentialError before anything is sent.
    """

    def __init__(self, base_url: str = DEFAULT_BASE_URL, key_env: str = DEFAULT_KEY_ENV,
                 retry: RetryPolicy = RetryPolicy(), sleep: Callable[[float], None] = time.sleep,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.key_env = key_env
        self.retry = retry
        self.sleep = sleep
        self.transport = transport
        self.requests_sent = 0
        self._lock = threading.Lock()
        self._client: httpx.Client | None = None

    def _api_key(self) -> str:
        key = os.environ.get(self.key_env, "").strip()
        if not key:
            raise CredentialError(f"environment variable {self.key_env} is not set")
        return key

    def _http(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(transport=self.transport)
            return self._client

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def send(self, body: bytes, timeout: float) -> str:
        headers = {"Authorization": f"Bearer {self._api_key()}", "Content-Type": "application/json"}
        url = f"{self.base_url}/chat/completions"
        last: Exception | None = None
        for attempt in range(self.retry.max_retries + 1):
            if attempt:
                self.sleep(self.retry.delay(attempt - 1))
            with self._lock:
                self.requests_sent += 1
            try:
                resp = self._http().post(url, content=body, headers=headers, timeout=timeout)
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out after {timeout}s")
                last.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                last = TransportError(f"connection failed: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise CredentialError(f"authentication rejected ({resp.status_code})")
            if _transient(resp.status_code):
                last = TransportError(f"HTTP {resp.status_code} after {attempt + 1} attempts")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
        raise last

    def complete(self, prompt: PromptSpec, profile: ModelProfile) -> str:
        return self.send(serialize_body(request_body(prompt, profile)), profile.request_timeout)


_AGE = re.compile(r"(\d+)-year-old")
_DISTANCE = re.compile(r"distance of (\d+(?:\.\d+)?) miles?")
_VEHICLES = re.compile(r"(\d+) vehicles?\b")
_FALLBACK = ((Mode.CAR, 4), (Mode.SUV_CROSSOVER, 3), (Mode.PICKUP_TRUCK, 2), (Mode.VAN, 1))


def mock_reply(text: str) -> Mode:
    """Deterministic rule-based guess from query narrative text."""
    age = _AGE.search(text)
    dist = _DISTANCE.search(text)
    veh = _VEHICLES.search(text)
    if dist and veh and float(dist.group(1)) < 1.0 and int(veh.group(1)) == 0:
        return Mode.WALK
    if "traveling for school" in text and age and int(age.group(1)) < 18:
        return Mode.SCHOOL_BUS
    h = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    total = sum(w for _, w in _FALLBACK)
    pick = h % total
    for mode, w in _FALLBACK:
        if pick < w:
            return mode
        pick -= w
    raise AssertionError("unreachable")


def mock_complete(prompt: PromptSpec) -> str:
    mode = mock_reply(prompt.query.text)
    if prompt.strategy.domain_enhanced:
        return ("Step 1: the implied speed is feasible for the candidate modes.\n"
                "Step 2: the listed factors were weighed in order.\n"
                f"Step 3: the most practical choice follows.\n{mode.value}")
    return mode.value


class MockBackend:
    def __init__(self):
        self.requests_sent = 0
        self._lock = threading.Lock()

    def complete(self, prompt: PromptSpec, profile: ModelProfile) -> str:
        with self._lock:
            self.requests_sent += 1
        return mock_complete(prompt)


# --------------------------------------------------------------------------
# caching


@dataclass
class CachedBackend:
    """Content-addressed response cache in front of another backend.

    Records live at ``cache_dir/ab/cd/<key>.json``. Writes are atomic and
    serialized per key; corrupt entries are logged, dropped and refetched.
    With ``offline`` set, a miss raises CacheMiss instead of calling out.
    """
    inner: Backend | None
    cache_dir: Path
    offline: bool = False
    hits: int = 0
    misses: int = 0
    _locks: dict = field(default_factory=dict, repr=False)
    _guard: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.cache_dir = Path(self.cache_dir)

    def path_for(self, key: str) -> Path:
        return self.cache_dir / key[:2] / key[2:4] / f"{key}.json"

    def _key_lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def lookup(self, key: str) -> CompletionRecord | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            rec = CompletionRecord(**json.loads(path.read_text(encoding="utf-8")))
            if rec.verify(key):
                return rec
        except (ValueError, TypeError) as exc:
            log.warning("unreadable cache entry %s: %s", path.name, exc)
        else:
            log.warning("cache entry %s failed its digest check", path.name)
        path.unlink(missing_ok=True)
        return None

    def store(self, rec: CompletionRecord) -> None:
        path = self.path_for(rec.cache_key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(rec.to_json())
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def complete_cached(self, prompt: PromptSpec, profile: ModelProfile) -> tuple[str, bool]:
        key = cache_key(prompt, profile)
        with self._key_lock(key):
            rec = self.lookup(key)
            if rec is not None:
                with self._guard:
                    self.hits += 1
                return rec.raw_reply, True
            if self.offline or self.inner is None:
                raise CacheMiss(f"no cached response for {key[:12]} and network access is disabled")
            reply = self.inner.complete(prompt, profile)
            self.store(CompletionRecord.create(key, profile.model_id, reply))
            with self._guard:
                self.misses += 1
            return reply, False

    def complete(self, prompt: PromptSpec, profile: ModelProfile) -> str:
        return self.complete_cached(prompt, profile)[0]


def cached_complete(prompt: PromptSpec, profile: ModelProfile, cache_dir, inner: Backend | None = None,
                    offline: bool = False) -> str:
    return CachedBackend(inner, cache_dir, offline).complete(prompt, profile)


def complete_batch(backend: CachedBackend, prompts: Sequence[PromptSpec], profile: ModelProfile,
                   parallelism: int = DEFAULT_PARALLELISM) -> list[tuple[str, bool]]:
    """Replies in input order, at most ``parallelism`` requests in flight."""
    if parallelism <= 1:
        return [backend.complete_cached(p, profile) for p in prompts]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda p: backend.complete_cached(p, profile), prompts))
