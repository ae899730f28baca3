"""Line-level completion prompts built from matched functions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable

from depfix.mappings import ApiMapping
from depfix.resolver import MatchedFunction

ORIGIN_BY_KIND = {"outdated": "O", "up-to-dated": "U"}
DATASET_LABELS = ("O", "U", "All")


class PromptRejected(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def sample_id(file: str, function: str, reference_line: int) -> str:
    key = f"{file}\0{function}\0{reference_line}".encode("utf-8")
    return hashlib.sha1(key).hexdigest()[:16]


@dataclass(frozen=True)
class PromptSample:
    id: str
    prompt_lines: tuple[str, ...]
    mapping: ApiMapping
    origin: str
    ground_truth_line: str
    context_imports: tuple[str, ...] = ()
    file: str = ""
    function: str = ""
    reference_line: int = 0
    tail_lines: tuple[str, ...] = field(default=(), compare=False)

    @property
    def pmpt(self) -> str:
        return "\n".join(self.prompt_lines)

    def to_record(self) -> dict:
        m = self.mapping
        return {
            "id": self.id,
            "origin": self.origin,
            "library": m.library,
            "deprecated": str(m.deprecated),
            "replacement": str(m.replacement),
            "version": m.deprecated_in_version,
            "prompt_lines": list(self.prompt_lines),
            "context_imports": list(self.context_imports),
            "ground_truth_line": self.ground_truth_line,
            "file": self.file,
            "function": self.function,
            "reference_line": self.reference_line,
        }

    @classmethod
    def from_record(cls, rec: dict) -> PromptSample:
        return cls(
            id=rec["id"],
            prompt_lines=tuple(rec["prompt_lines"]),
            mapping=ApiMapping.from_record(rec),
            origin=rec["origin"],
            ground_truth_line=rec["ground_truth_line"],
            context_imports=tuple(rec.get("context_imports", ())),
            file=rec.get("file", ""),
            function=rec.get("function", ""),
            reference_line=rec.get("reference_line", 0),
        )


@dataclass
class PromptDataset:
    samples: list[PromptSample]
    label: str

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def slice_function(lines: list[str], start: int, reference_line: int, body_start: int) -> tuple[list[str], str, list[str]]:
    """Split function lines into (prompt, ground truth, tail) at ``reference_line``.

    Line numbers are file-absolute; ``start`` is the file line of ``lines[0]``.
    """
    if reference_line <= body_start:
        raise PromptRejected("empty prompt")
    k = reference_line - start
    if not 0 <= k < len(lines):
        raise PromptRejected("reference line outside function span")
    return lines[:k], lines[k], lines[k + 1 :]


def build_prompt(m: MatchedFunction) -> PromptSample:
    f = m.function
    head, truth, tail = slice_function(f.lines, f.start, m.reference_call.line_number, f.body_start)
    return PromptSample(
        id=sample_id(f.path, f.qualname, m.reference_call.line_number),
        prompt_lines=tuple(head),
        mapping=m.mapping,
        origin=ORIGIN_BY_KIND[m.kind],
        ground_truth_line=truth,
        context_imports=f.context_imports,
        file=f.path,
        function=f.qualname,
        reference_line=m.reference_call.line_number,
        tail_lines=tuple(tail),
    )


def prompt_from_function_record(rec: dict) -> PromptSample:
    """Same as :func:`build_prompt`, from a ``functions.jsonl`` record."""
    start = rec["span"][0]
    head, truth, tail = slice_function(
        rec["source_lines"], start, rec["reference_line"], rec.get("body_start", start + 1)
    )
    mapping = ApiMapping.from_record(rec)
    return PromptSample(
        id=sample_id(rec["file"], rec["function"], rec["reference_line"]),
        prompt_lines=tuple(head),
        mapping=mapping,
        origin=ORIGIN_BY_KIND[rec["kind"]],
        ground_truth_line=truth,
        context_imports=tuple(rec.get("context_imports", ())),
        file=rec["file"],
        function=rec["function"],
        reference_line=rec["reference_line"],
        tail_lines=tuple(tail),
    )


def partition(samples: Iterable[PromptSample]) -> tuple[PromptDataset, PromptDataset]:
    outdated, uptodate = [], []
    for s in samples:
        (outdated if s.origin == "O" else uptodate).append(s)
    return PromptDataset(outdated, "O"), PromptDataset(uptodate, "U")
