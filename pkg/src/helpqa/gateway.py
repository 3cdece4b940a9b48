"""Uniform, cached, mockable access to chat and embedding models.

All model traffic flows through ModelGateway, which content-addresses every request
into a file cache so warm reruns are byte-identical and free. Backends speak the
OpenAI-compatible wire shapes; the scripted MockBackend lets tests run whole
pipelines offline and inspect the call trace.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import requests

from .errors import (
    GatewayError,
    ModelRefusal,
    RateLimited,
    TransportError,
    UnscriptedPrompt,
)

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call; the full payload participates in the cache key."""

    model_id: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def payload(self) -> dict:
        messages = []
        if self.system_prompt:
            messages.append({"role": "system", "content": self.system_prompt})
        messages.append({"role": "user", "content": self.user_prompt})
        body = {
            "model": self.model_id,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }
        if self.seed is not None:
            body["seed"] = self.seed
        return body


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length unit-normalized embedding."""

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def dot(self, other: "EmbeddingVector") -> float:
        return float(np.dot(self.values, other.values))

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    @classmethod
    def unit(cls, raw: Sequence[float]) -> "EmbeddingVector":
        arr = np.asarray(raw, dtype=np.float64)
        n = float(np.linalg.norm(arr))
        if n == 0.0 or not math.isfinite(n):
            raise GatewayError("embedding has zero or non-finite norm")
        return cls(values=tuple(float(v) for v in arr / n))


def request_digest(kind: str, model_id: str, payload: object) -> str:
    """Collision-resistant content hash of one request; doubles as the cache key."""
    blob = json.dumps(
        {"kind": kind, "model": model_id, "payload": payload},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class ResponseCache:
    """Append-only content-addressed cache: one file per entry, named by hex key."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def get(self, key: str) -> bytes | None:
        path = self.root / key
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None

    def put(self, key: str, value: bytes) -> None:
        path = self.root / key
        with self._lock:
            if path.exists():
                return  # entries are immutable once written
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as f:
                    f.write(value)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


@dataclass(frozen=True)
class CallRecord:
    endpoint: str
    digest: str


def _hash_embedding(text: str, dim: int, seed: int) -> list[float]:
    """Deterministic pseudo-embedding: same text always maps to the same vector."""
    h = hashlib.sha256(f"{seed}|{text}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(h[:8], "big"))
    return [float(v) for v in rng.standard_normal(dim)]


class MockBackend:
    """Scripted offline backend.

    `script` is an ordered sequence of (pattern, response) pairs. A pattern matches
    when it occurs as a substring of "system\\nuser"; the first match wins. A response
    may be a string or a callable taking the matched prompt text (for constructed
    fixtures such as position-sensitive judges). Unmatched prompts raise
    UnscriptedPrompt so tests must script pipelines fully.

    Embeddings are derived from a seeded hash of each input text. The instance keeps
    a call trace of (endpoint, request digest) plus the full requests for assertions.
    """

    def __init__(
        self,
        script: Iterable[tuple[str, str | Callable[[str], str]]] | None = None,
        embedding_dim: int = 64,
        seed: int = 0,
    ):
        self.script = list(script or [])
        self.embedding_dim = embedding_dim
        self.seed = seed
        self.trace: list[CallRecord] = []
        self.chat_requests: list[ChatRequest] = []
        self.embed_requests: list[list[str]] = []
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> bytes:
        digest = request_digest("chat", req.model_id, req.payload())
        with self._lock:
            self.trace.append(CallRecord("chat", digest))
            self.chat_requests.append(req)
        text = f"{req.system_prompt}\n{req.user_prompt}"
        for pattern, response in self.script:
            if pattern in text:
                reply = response(text) if callable(response) else response
                body = {
                    "model": req.model_id,
                    "choices": [
                        {
                            "index": 0,
                            "message": {"role": "assistant", "content": reply},
                            "finish_reason": "stop",
                        }
                    ],
                }
                return json.dumps(body, ensure_ascii=False).encode("utf-8")
        raise UnscriptedPrompt(
            f"no script pattern matches prompt {digest} ({text[:120]!r}...)"
        )

    def embed(self, model_id: str, texts: Sequence[str]) -> bytes:
        digest = request_digest("embeddings", model_id, {"input": list(texts)})
        with self._lock:
            self.trace.append(CallRecord("embeddings", digest))
            self.embed_requests.append(list(texts))
        data = [
            {"index": i, "embedding": _hash_embedding(t, self.embedding_dim, self.seed)}
            for i, t in enumerate(texts)
        ]
        return json.dumps({"model": model_id, "data": data}).encode("utf-8")


class OpenAIHttpBackend:
    """OpenAI-compatible HTTP endpoints (/chat/completions, /embeddings)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        if api_key:
            self.session.headers["Authorization"] = f"Bearer {api_key}"

    @classmethod
    def from_env(cls) -> "OpenAIHttpBackend":
        base = os.environ.get("HELPQA_API_BASE", "")
        if not base:
            raise GatewayError("HELPQA_API_BASE is not set")
        return cls(base, api_key=os.environ.get("HELPQA_API_KEY", ""))

    def _post(self, path: str, body: dict) -> bytes:
        try:
            resp = self.session.post(f"{self.base_url}{path}", json=body, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"request to {path} failed: {e}") from e
        if resp.status_code == 429:
            hint = resp.headers.get("Retry-After")
            raise RateLimited(
                f"rate limited on {path}",
                retry_after=float(hint) if hint else None,
            )
        if resp.status_code >= 500:
            raise TransportError(f"{path} returned {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"{path} returned {resp.status_code}: {resp.text[:300]}")
        return resp.content

    def complete(self, req: ChatRequest) -> bytes:
        return self._post("/chat/completions", req.payload())

    def embed(self, model_id: str, texts: Sequence[str]) -> bytes:
        return self._post("/embeddings", {"model": model_id, "input": list(texts)})


class ModelGateway:
    """Caching, retrying front door for chat and embedding calls.

    Safe for concurrent callers; a semaphore bounds in-flight backend requests and
    cache writes are atomic. Identical requests return byte-identical responses,
    the second one without touching the backend.
    """

    def __init__(
        self,
        backend,
        cache_dir: str | Path | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        batch_size: int = 128,
        max_concurrency: int = 8,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.batch_size = batch_size
        self._sem = threading.Semaphore(max_concurrency)
        self._sleep = sleeper
        self._rng = rng or random.Random(0)

    def _fetch(self, key: str, call: Callable[[], bytes]) -> bytes:
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        raw = self._call_with_retry(call)
        if self.cache is not None:
            self.cache.put(key, raw)
        return raw

    def _call_with_retry(self, call: Callable[[], bytes]) -> bytes:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                with self._sem:
                    return call()
            except RateLimited as e:
                last = e
                delay = e.retry_after if e.retry_after is not None else self._backoff(attempt)
            except TransportError as e:
                last = e
                delay = self._backoff(attempt)
            if attempt < self.max_attempts - 1:
                self._sleep(delay)
        raise TransportError(
            f"giving up after {self.max_attempts} attempts: {last}"
        ) from last

    def _backoff(self, attempt: int) -> float:
        base = min(self.backoff_cap, self.backoff_base * (2**attempt))
        return base * (0.5 + 0.5 * self._rng.random())  # jitter in [base/2, base]

    def chat(self, req: ChatRequest) -> str:
        key = request_digest("chat", req.model_id, req.payload())
        raw = self._fetch(key, lambda: self.backend.complete(req))
        return self._parse_chat(raw)

    @staticmethod
    def _parse_chat(raw: bytes) -> str:
        try:
            body = json.loads(raw)
            choice = body["choices"][0]
            content = choice["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
            raise GatewayError(f"malformed chat response: {e}") from e
        if content is None or not str(content).strip() or choice.get("finish_reason") == "content_filter":
            raise ModelRefusal("model returned empty or filtered output")
        return str(content)

    def embed(self, texts: Sequence[str], model_id: str = "embed-default") -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("embed requires a non-empty list of texts")
        if any(not t for t in texts):
            raise ValueError("embed inputs must all be non-empty")
        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            key = request_digest("embeddings", model_id, {"input": batch})
            raw = self._fetch(key, lambda b=batch: self.backend.embed(model_id, b))
            out.extend(self._parse_embeddings(raw, expected=len(batch)))
        return out

    @staticmethod
    def _parse_embeddings(raw: bytes, expected: int) -> list[EmbeddingVector]:
        try:
            body = json.loads(raw)
            data = sorted(body["data"], key=lambda d: d["index"])
            vectors = [EmbeddingVector.unit(d["embedding"]) for d in data]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise GatewayError(f"malformed embeddings response: {e}") from e
        if len(vectors) != expected:
            raise GatewayError(f"expected {expected} embeddings, got {len(vectors)}")
        return vectors
