"""JSONL persistence between pipeline stages.

Each output file may start with one header record ``{"_header": {...}}``
carrying the stage name and a timestamp. Readers skip it.
"""

from __future__ import annotations

import datetime as _dt
import json
from pathlib import Path
from typing import Iterable, Sequence

from depfix import __version__
from depfix.errors import DepfixError


class JsonlError(DepfixError):
    pass


class SchemaError(DepfixError):
    pass


STAGE_FIELDS = {
    "functions": ("file", "function", "span", "kind", "reference_line", "deprecated", "replacement", "library", "source_lines"),
    "prompts": ("id", "origin", "library", "deprecated", "replacement", "prompt_lines", "context_imports", "ground_truth_line"),
    "completions": ("id", "origin", "library", "deprecated", "replacement", "prompt_lines", "ground_truth_line", "completion", "backend"),
    "annotated": ("id", "origin", "library", "deprecated", "replacement", "prompt_lines", "ground_truth_line", "completion", "backend", "label"),
    "fixed": ("id", "strategy", "original_completion", "fixed_completion", "fixed_label", "status"),
}


def header(stage: str) -> dict:
    now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    return {"_header": {"stage": stage, "tool": "depfix", "version": __version__, "created": now}}


def dumps(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(", ", ": "))


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise JsonlError(f"{path}:{lineno}: expected a JSON object")
            if "_header" in rec:
                continue
            out.append(rec)
    return out


def check_schema(records: Sequence[dict], stage: str, path: str | Path = "<input>") -> None:
    need = STAGE_FIELDS[stage]
    for i, rec in enumerate(records, 1):
        missing = [f for f in need if f not in rec]
        if missing:
            raise SchemaError(f"{path}: record {i} is not a {stage} record; missing field(s): {', '.join(missing)}")


def existing_ids(path: str | Path) -> set[str]:
    p = Path(path)
    if not p.exists():
        return set()
    return {r["id"] for r in read_jsonl(p) if "id" in r}


class JsonlWriter:
    """Writes records; in resume mode appends to an existing file without a second header."""

    def __init__(self, path: str | Path, stage: str, *, with_header: bool = True, resume: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        appending = resume and self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "a" if appending else "w", encoding="utf-8", newline="\n")
        if with_header and not appending:
            self._fh.write(dumps(header(stage)) + "\n")

    def write(self, rec: dict) -> None:
        self._fh.write(dumps(rec) + "\n")
        self._fh.flush()

    def write_all(self, recs: Iterable[dict]) -> None:
        for r in recs:
            self.write(r)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
