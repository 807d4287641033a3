"""Pluggable completion and embedding providers.

The scripted provider replays canned responses deterministically and is the
backbone of every regression suite: exact-match entries are consumed once, in
order; pattern entries (glob style, `*` crosses newlines) are reusable. An
unmatched request is a hard error, never a silent default. The mock embedder
derives unit vectors from an integer-only seeded hash, so embeddings are
stable across runs and platforms.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass, field

import requests

ENV_URL = "KGRAG_LLM_URL"
ENV_TIMEOUT = "KGRAG_LLM_TIMEOUT_MS"


class ProviderError(Exception):
    """Provider could not produce a response."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ScriptExhaustedError(ProviderError):
    """No scripted entry matches the request."""


@dataclass
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_length: int = 8192
    role: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be nonempty")


@dataclass
class ScriptEntry:
    match: str
    kind: str  # exact | pattern
    response: str


@dataclass
class Script:
    entries: list[ScriptEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)


def load_script(path) -> Script:
    """Read a newline-delimited JSON script file."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProviderError(f"{path}: malformed script entry at line {lineno}: {exc.msg}")
            kind = rec.get("kind", "exact")
            if kind not in ("exact", "pattern") or "match" not in rec or "response" not in rec:
                raise ProviderError(f"{path}: malformed script entry at line {lineno}")
            entries.append(ScriptEntry(rec["match"], kind, rec["response"]))
    return Script(entries)


def save_script(script: Script, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in script.entries:
            fh.write(json.dumps({"match": entry.match, "kind": entry.kind,
                                 "response": entry.response},
                                sort_keys=True, ensure_ascii=False) + "\n")


class ScriptedProvider:
    """Deterministic provider: a pure function of (script, request sequence)."""

    def __init__(self, script: Script):
        self.script = script
        self._used: set[int] = set()
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        prompt = request.prompt
        with self._lock:
            for i, entry in enumerate(self.script.entries):
                if entry.kind == "exact" and i not in self._used and entry.match == prompt:
                    self._used.add(i)
                    return entry.response
            for entry in self.script.entries:
                if entry.kind == "pattern" and fnmatch.fnmatchcase(prompt, entry.match):
                    return entry.response
        head = prompt if len(prompt) <= 200 else prompt[:200] + "..."
        raise ScriptExhaustedError(f"script exhausted: no entry matches request {head!r}")

    def reset(self) -> None:
        with self._lock:
            self._used.clear()


class HttpProvider:
    """Minimal adapter endpoint: POST {"prompt": ...} -> {"text": ...}."""

    def __init__(self, url: str | None = None, timeout_ms: int | None = None):
        self.url = url or os.environ.get(ENV_URL, "")
        if not self.url:
            raise ProviderError(f"no provider URL configured ({ENV_URL})")
        if timeout_ms is None:
            timeout_ms = int(os.environ.get(ENV_TIMEOUT, "30000"))
        self.timeout = timeout_ms / 1000.0

    def complete(self, request: CompletionRequest) -> str:
        try:
            resp = requests.post(self.url, json={"prompt": request.prompt},
                                 timeout=self.timeout)
        except requests.Timeout:
            raise ProviderError("provider timed out", retryable=True)
        except requests.RequestException as exc:
            raise ProviderError(f"provider request failed: {exc}", retryable=True)
        if resp.status_code != 200:
            raise ProviderError(f"provider returned HTTP {resp.status_code}")
        return resp.json()["text"]


class MockEmbedder:
    """Seeded hash embeddings: unit norm, deterministic, integer math first."""

    def __init__(self, dimension: int = 16, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.seed = seed

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ProviderError("cannot embed empty text")
        raw = []
        for i in range(self.dimension):
            digest = hashlib.sha256(f"{self.seed}:{i}:{text}".encode("utf-8")).digest()
            # signed 63-bit integer from the first 8 bytes, centered on zero
            raw.append(int.from_bytes(digest[:8], "big") - (1 << 63))
        norm = math.sqrt(sum(x * x for x in raw))
        if norm == 0:  # astronomically unlikely; keep cosine total anyway
            raw[0] = 1
            norm = 1.0
        return [x / norm for x in raw]


class HttpEmbedder:
    """POST {"text": ...} -> {"vector": [...]} adapter."""

    def __init__(self, url: str, dimension: int, timeout_ms: int = 30000):
        self.url = url
        self.dimension = dimension
        self.timeout = timeout_ms / 1000.0

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ProviderError("cannot embed empty text")
        try:
            resp = requests.post(self.url, json={"text": text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProviderError(f"embedder request failed: {exc}", retryable=True)
        vector = resp.json()["vector"]
        if len(vector) != self.dimension:
            raise ProviderError(
                f"embedder returned dimension {len(vector)}, expected {self.dimension}")
        return [float(x) for x in vector]


@dataclass
class ProviderSet:
    """Providers by role. Unset roles raise when used."""

    extractor: object = None
    planner: object = None
    synthesizer: object = None
    judge: object = None
    memory: object = None  # falls back to extractor
    embedder: object = None

    def require(self, role: str):
        provider = getattr(self, role, None)
        if role == "memory" and provider is None:
            provider = self.extractor
        if provider is None:
            raise ProviderError(f"no provider configured for role {role!r}")
        return provider

    def complete(self, role: str, prompt: str) -> str:
        return self.require(role).complete(CompletionRequest(prompt, role=role))

    def embed(self, text: str) -> list[float]:
        return self.require("embedder").embed(text)
