"""Completion verdicts: good, bad or irrelevant against a sample's mapping."""

from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, replace
from functools import lru_cache

from depfix.errors import SourceParseError
from depfix.gateway import Completion
from depfix.mappings import Fqn, MappingSet
from depfix.prompts import PromptSample
from depfix.textutil import close_brackets
from depfix.resolver import (
    MODULE_SCOPE,
    AliasTable,
    ModuleIndex,
    ObjectTypeTable,
    ResolvedCall,
    build_alias_table,
    build_object_type_table,
    parse_module,
    resolve_call_fqn,
)

log = logging.getLogger(__name__)

LABELS = ("good", "bad", "irrelevant")
_KEEP_STMTS = (ast.Import, ast.ImportFrom, ast.Assign, ast.AnnAssign)


@dataclass(frozen=True)
class Verdict:
    label: str
    matched_call: ResolvedCall | None = None
    unparsable: bool = False
    other_deprecated: tuple[str, ...] = ()

    @property
    def plausible(self) -> bool:
        return self.label in ("good", "bad")

    @property
    def matched_fqn(self) -> str | None:
        return str(self.matched_call.fqn) if self.matched_call else None


def _indent_of(line: str) -> str:
    return line[: len(line) - len(line.lstrip())]


def _snippet_candidates(stripped: str):
    """(source, first line of the completion in it, column shift) in trial order."""
    bodies = [stripped]
    closed = close_brackets(stripped)
    if closed is not None:
        bodies.append(closed)
    for body in bodies:
        yield body, 1, 0
        yield body + "\n    pass", 1, 0
        yield "if True:\n    pass\n" + body + "\n    pass", 3, 0
        yield "try:\n    pass\n" + body + "\n    pass", 3, 0
        yield "if True:\n    pass\n" + body, 3, 0
        yield "try:\n    pass\n" + body, 3, 0
        yield "def _f():\n    " + body, 2, 4
        yield "async def _f():\n    " + body, 2, 4


@lru_cache(maxsize=4096)
def _parse_line(text: str, feature_version) -> tuple[ModuleIndex, int, int] | None:
    stripped = text.strip()
    if not stripped:
        return None
    for src, line, shift in _snippet_candidates(stripped):
        try:
            return parse_module(src, feature_version=feature_version), line, shift
        except SourceParseError:
            continue
    return None


def _context_index(lines: list[str], feature_version) -> tuple[ModuleIndex, int]:
    """Parse the prompt context; return the index and the line the completion would occupy."""
    n = len(lines)
    code = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    indent = _indent_of(code[-1]) if code else ""
    if code and code[-1].rstrip().endswith(":"):
        indent += "    "
    text = "\n".join(lines)
    for candidate in (text + ("\n" if lines else "") + indent + "pass", text):
        try:
            return parse_module(candidate, feature_version=feature_version), n + 1
        except SourceParseError:
            continue
    # keep the single-line imports and assignments; everything else becomes blank
    kept = []
    for ln in lines:
        s = ln.strip()
        keep = ""
        if s:
            try:
                tree = ast.parse(s, feature_version=feature_version)
                if len(tree.body) == 1 and isinstance(tree.body[0], _KEEP_STMTS):
                    keep = s
            except SyntaxError:
                pass
        kept.append(keep)
    return parse_module("\n".join(kept), feature_version=feature_version), n + 1


class SampleContext:
    """Alias and object-type tables in force at the completion line of a sample."""

    def __init__(self, context_imports, prompt_lines, feature_version=None):
        lines = list(context_imports) + list(prompt_lines)
        self.feature_version = feature_version
        index, self.line = _context_index(lines, feature_version)
        func = index.innermost_function(self.line)
        scope = func.qualname if func else MODULE_SCOPE
        self.aliases: AliasTable = build_alias_table(index, scope)
        self.objects: ObjectTypeTable = build_object_type_table(index, scope, self.aliases)

    @classmethod
    def for_sample(cls, sample: PromptSample, feature_version=None) -> SampleContext:
        return cls(sample.context_imports, sample.prompt_lines, feature_version)

    def resolve_line(self, text: str) -> list[ResolvedCall] | None:
        """Resolve every call of a completion line, left to right; None if it cannot be parsed.

        Columns of the returned calls index into ``text``.
        """
        parsed = _parse_line(text, self.feature_version)
        if parsed is None:
            return None
        index, first, shift = parsed
        lead = len(text) - len(text.lstrip())
        out = []
        for call in index.calls:
            if call.lineno != first:
                continue
            rc = resolve_call_fqn(call, self.aliases, self.objects, lineno=self.line)
            out.append(
                replace(
                    rc,
                    line_number=1,
                    end_line=1 + call.end_lineno - first,
                    column=call.col - shift + lead,
                    end_column=call.end_col - (shift if call.end_lineno == first else 0) + lead,
                )
            )
        return out

    def bindings(self) -> dict[str, Fqn]:
        """Local names usable to spell an FQN at the completion line."""
        out = {k: b.target for k, b in self.aliases.effective(self.line).items()}
        for name, fqn in self.objects.as_dict(self.line).items():
            out[name] = Fqn.parse(fqn)
        return out


def _text(comp: Completion | str) -> str:
    return comp.text if isinstance(comp, Completion) else comp


def find_call(comp: Completion | str, fqn: Fqn, ctx: SampleContext) -> ResolvedCall | None:
    for call in ctx.resolve_line(_text(comp)) or ():
        if call.fqn == fqn:
            return call
    return None


def annotate(
    comp: Completion | str,
    sample: PromptSample,
    mappings: MappingSet | None = None,
    ctx: SampleContext | None = None,
) -> Verdict:
    ctx = ctx or SampleContext.for_sample(sample)
    calls = ctx.resolve_line(_text(comp))
    if calls is None:
        return Verdict("irrelevant", unparsable=True)
    dep, rep = sample.mapping.deprecated, sample.mapping.replacement
    others = []
    if mappings is not None:
        for c in calls:
            if c.fqn is not None and c.fqn not in (dep, rep) and mappings.find_by_deprecated(c.fqn):
                others.append(str(c.fqn))
    for c in calls:
        if c.fqn == rep:
            return Verdict("good", c, other_deprecated=tuple(others))
        if c.fqn == dep:
            return Verdict("bad", c, other_deprecated=tuple(others))
    return Verdict("irrelevant", other_deprecated=tuple(others))


def contains(comp: Completion | str, dep: Fqn, sample: PromptSample, ctx: SampleContext | None = None) -> bool:
    ctx = ctx or SampleContext.for_sample(sample)
    return find_call(comp, dep, ctx) is not None
