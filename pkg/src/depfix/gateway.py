"""Completion backends behind one interface.

Three backend kinds exist:

``scripted``
    Deterministic responses read from a JSON file. Used by tests and for
    replaying recorded runs.
``http-raw``
    A completions endpoint fed the prompt verbatim. Supports continuing from a
    forced prefix.
``http-instruct``
    A chat endpoint; the prompt is wrapped in the instruction template. Cannot
    continue from a prefix because the decoding is not under our control.

Decoding is always greedy: temperature 0 and a 50 token cap unless
configured otherwise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

import httpx

from depfix.errors import (
    BackendConfigError,
    BackendError,
    ScriptedMiss,
    StrategyUnsupported,
    TransportError,
)

log = logging.getLogger(__name__)

INSTRUCTION_TEMPLATE = "Complete and output the next line for the following Python function: {pmpt}"
API_KEY_ENV = "DEPFIX_API_KEY"
BACKEND_KINDS = ("http-raw", "http-instruct", "scripted")
RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class DecodingParams:
    max_new_tokens: int = 50
    strategy: str = "greedy"
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.strategy != "greedy":
            raise ValueError(f"unsupported decoding strategy {self.strategy!r}")
        if self.temperature != 0:
            # greedy decoding is realised as temperature 0
            object.__setattr__(self, "temperature", 0.0)

    def to_dict(self) -> dict:
        return {"max_new_tokens": self.max_new_tokens, "strategy": self.strategy, "temperature": self.temperature}


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str
    supports_continuation: bool
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise BackendConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "scripted" and not self.supports_continuation:
            raise BackendConfigError("scripted backends always support continuation")
        if self.kind == "http-instruct" and self.supports_continuation:
            raise BackendConfigError("instruction backends cannot continue from a prefix")


@dataclass(frozen=True)
class Completion:
    text: str
    backend: str
    params: DecodingParams
    raw: str
    truncated: bool = False


def first_line(raw: str) -> str:
    """First non-blank line of model output, code fences skipped, newline stripped."""
    for line in raw.splitlines():
        if not line.strip() or line.lstrip().startswith("```"):
            continue
        return line.rstrip("\r\n")
    return ""


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class Backend:
    descriptor: BackendDescriptor

    @property
    def name(self) -> str:
        return self.descriptor.name

    @property
    def kind(self) -> str:
        return self.descriptor.kind

    @property
    def supports_continuation(self) -> bool:
        return self.descriptor.supports_continuation

    def generate(self, prompt: str, params: DecodingParams, key: str | None = None) -> tuple[str, bool]:
        """Return (raw text, hit token budget)."""
        raise NotImplementedError

    def generate_continuation(self, prompt: str, prefix: str, params: DecodingParams, key: str | None = None) -> tuple[str, bool]:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Serves canned responses.

    Completions are looked up by caller key (usually the sample id), then by
    :func:`prompt_hash`, then by the exact prompt text. Continuations are
    looked up by the forced prefix, exact first and then whitespace-stripped.
    """

    def __init__(self, completions: dict[str, str], continuations: dict[str, str] | None = None, name: str = "scripted"):
        self.descriptor = BackendDescriptor(name, "scripted", True)
        self._completions = dict(completions)
        self._continuations = dict(continuations or {})
        self._lock = threading.Lock()
        self.requests: list[tuple[str, str, str | None]] = []

    def _log(self, op: str, text: str, key: str | None) -> None:
        with self._lock:
            self.requests.append((op, text, key))

    def generate(self, prompt, params, key=None):
        self._log("complete", prompt, key)
        for k in (key, prompt_hash(prompt), prompt):
            if k is not None and k in self._completions:
                return self._completions[k], False
        raise ScriptedMiss(key if key is not None else prompt_hash(prompt))

    def generate_continuation(self, prompt, prefix, params, key=None):
        self._log("continue", prompt + "\n" + prefix, key)
        for k in (prefix, prefix.strip()):
            if k in self._continuations:
                return self._continuations[k], False
        raise ScriptedMiss(prefix)


def load_scripted_backend(path: str | Path, name: str | None = None) -> ScriptedBackend:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BackendConfigError(f"cannot load script {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise BackendConfigError(f"{path}: script must be a JSON object")
    if "completions" in doc or "continuations" in doc:
        completions = doc.get("completions", {})
        continuations = doc.get("continuations", {})
        name = name or doc.get("name")
    else:
        completions, continuations = doc, {}
    for table in (completions, continuations):
        if not isinstance(table, dict) or not all(isinstance(v, str) for v in table.values()):
            raise BackendConfigError(f"{path}: script tables must map strings to strings")
    return ScriptedBackend(completions, continuations, name=name or Path(path).stem)


def _dig(doc: Any, dotted: str) -> Any:
    cur = doc
    for part in dotted.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


_DEFAULT_FIELDS = {
    "http-raw": {
        "path": "/completions",
        "model": "model",
        "prompt": "prompt",
        "max_tokens": "max_tokens",
        "temperature": "temperature",
        "text": "choices.0.text",
        "finish_reason": "choices.0.finish_reason",
    },
    "http-instruct": {
        "path": "/chat/completions",
        "model": "model",
        "messages": "messages",
        "max_tokens": "max_tokens",
        "temperature": "temperature",
        "text": "choices.0.message.content",
        "finish_reason": "choices.0.finish_reason",
    },
}


class HttpBackend(Backend):
    def __init__(
        self,
        name: str,
        kind: str,
        base_url: str,
        model: str,
        field_map: dict | None = None,
        *,
        supports_continuation: bool | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        extra_body: dict | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if kind not in _DEFAULT_FIELDS:
            raise BackendConfigError(f"{name}: HTTP backend kind must be http-raw or http-instruct, got {kind!r}")
        if supports_continuation is None:
            supports_continuation = kind == "http-raw"
        self.descriptor = BackendDescriptor(
            name, kind, supports_continuation, {"base_url": base_url, "model": model}
        )
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.fields = {**_DEFAULT_FIELDS[kind], **(field_map or {})}
        self.max_retries = max_retries
        self.backoff = backoff
        self.extra_body = dict(extra_body or {})
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def build_request(self, prompt: str, params: DecodingParams) -> tuple[str, dict, dict]:
        f = self.fields
        body: dict[str, Any] = {f["model"]: self.model}
        if self.kind == "http-instruct":
            body[f["messages"]] = [{"role": "user", "content": INSTRUCTION_TEMPLATE.format(pmpt=prompt)}]
        else:
            body[f["prompt"]] = prompt
        body[f["max_tokens"]] = params.max_new_tokens
        body[f["temperature"]] = params.temperature
        body.update(self.extra_body)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return self.base_url + f["path"], headers, body

    def _post(self, url: str, headers: dict, body: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(url, headers=headers, json=body)
                if resp.status_code in RETRY_STATUS:
                    last = BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    if resp.status_code >= 400:
                        # context-length and auth errors are surfaced verbatim, not retried
                        raise BackendError(f"HTTP {resp.status_code}: {resp.text[:500]}")
                    return resp.json()
            except httpx.HTTPError as exc:
                last = exc
            if attempt < self.max_retries:
                self._sleep(self.backoff * (2**attempt))
        raise TransportError(f"{self.name}: giving up after {self.max_retries + 1} attempts: {last}")

    def _call(self, prompt: str, params: DecodingParams) -> tuple[str, bool]:
        url, headers, body = self.build_request(prompt, params)
        doc = self._post(url, headers, body)
        try:
            text = _dig(doc, self.fields["text"]) or ""
        except (KeyError, IndexError, TypeError, ValueError):
            raise BackendError(f"{self.name}: response lacks {self.fields['text']}") from None
        try:
            finish = _dig(doc, self.fields["finish_reason"])
        except (KeyError, IndexError, TypeError, ValueError):
            finish = None
        return text, finish == "length"

    def generate(self, prompt, params, key=None):
        return self._call(prompt, params)

    def generate_continuation(self, prompt, prefix, params, key=None):
        return self._call(prompt + "\n" + prefix, params)

    def close(self) -> None:
        self._client.close()


def _is_line_cut(raw: str, line: str, budget_hit: bool) -> bool:
    if not budget_hit:
        return False
    idx = raw.find(line)
    return idx >= 0 and "\n" not in raw[idx + len(line) :]


def complete(pmpt: str, backend: Backend, params: DecodingParams | None = None, key: str | None = None) -> Completion:
    params = params or DecodingParams()
    raw, budget_hit = backend.generate(pmpt, params, key)
    text = first_line(raw)
    return Completion(text, backend.name, params, raw, _is_line_cut(raw, text, budget_hit))


def continue_from(pmpt: str, prefix: str, backend: Backend, params: DecodingParams | None = None, key: str | None = None) -> str:
    """Text generated after ``pmpt`` + newline + ``prefix``, up to the end of that line."""
    if not backend.supports_continuation:
        raise StrategyUnsupported(f"backend {backend.name} ({backend.kind}) cannot continue from a prefix")
    params = params or DecodingParams()
    raw, _ = backend.generate_continuation(pmpt, prefix, params, key)
    return raw.split("\n", 1)[0].rstrip("\r")


def load_backend_config(path: str | Path, name: str | None = None, **http_kwargs) -> Backend:
    """Build a backend from a config file.

    The file holds one backend object, a list of them, or ``{"backends": [...]}``.
    Scripted entries name their script with a ``script`` path, relative to
    the config file.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BackendConfigError(f"cannot load backend config {path}: {exc}") from None
    entries = doc.get("backends", doc) if isinstance(doc, dict) and "kind" not in doc else doc
    if isinstance(entries, dict):
        entries = [entries]
    if not isinstance(entries, list) or not entries:
        raise BackendConfigError(f"{path}: no backends defined")
    if name is None:
        if len(entries) > 1:
            raise BackendConfigError(f"{path}: several backends defined, pick one by name")
        entry = entries[0]
    else:
        matches = [e for e in entries if isinstance(e, dict) and e.get("name") == name]
        if not matches:
            raise BackendConfigError(f"{path}: no backend named {name!r}")
        entry = matches[0]
    return backend_from_entry(entry, path.parent, **http_kwargs)


def backend_from_entry(entry: dict, base_dir: Path = Path("."), **http_kwargs) -> Backend:
    kind = entry.get("kind")
    name = entry.get("name") or kind
    if kind == "scripted":
        script = entry.get("script")
        if not script:
            raise BackendConfigError(f"{name}: scripted backend needs a 'script' path")
        return load_scripted_backend(base_dir / script, name=name)
    if kind in ("http-raw", "http-instruct"):
        for req in ("base_url", "model"):
            if not entry.get(req):
                raise BackendConfigError(f"{name}: missing {req}")
        opts = {k: entry[k] for k in ("max_retries", "backoff", "timeout", "supports_continuation") if k in entry}
        opts.update(http_kwargs)
        return HttpBackend(
            name, kind, entry["base_url"], entry["model"], entry.get("field_map"),
            extra_body=entry.get("extra_body"), **opts,
        )
    raise BackendConfigError(f"{name}: unknown backend kind {kind!r}")


T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], concurrency: int = 4) -> list[R | BaseException]:
    """Apply ``fn`` with bounded parallelism; results (or raised exceptions) keep input order."""
    items = list(items)

    def guarded(item):
        try:
            return fn(item)
        except Exception as exc:  # noqa: BLE001 - recorded per item
            return exc

    if concurrency <= 1 or len(items) <= 1:
        return [guarded(i) for i in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(guarded, items))
