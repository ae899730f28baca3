"""Lightweight alias and object-type resolution of call sites.

The analysis is intraprocedural. Import bindings and constructor-style
assignments are tracked in textual order, so a later ``import x as pd``
shadows an earlier ``import pandas as pd`` for the lines that follow it.
"""

from __future__ import annotations

import ast
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from depfix.errors import SourceParseError
from depfix.mappings import ApiMapping, Fqn, MappingSet

log = logging.getLogger(__name__)

MODULE_SCOPE = "<module>"

RESOLUTION_KINDS = ("direct", "alias", "from-import", "object-type", "unresolved")

_BINDING_KIND_TO_RESOLUTION = {
    "import": "direct",
    "import-as": "alias",
    "from-import": "from-import",
    "from-import-as": "from-import",
}


@dataclass(frozen=True)
class ImportBinding:
    local: str
    target: Fqn
    kind: str
    lineno: int
    scope: str
    statement: str


@dataclass(frozen=True)
class ObjectBinding:
    """``name = <call>`` seen at ``lineno``; ``fqn`` is None when the value is not resolvable."""

    name: str
    fqn: Fqn | None
    lineno: int
    end_lineno: int
    statement: str


class AliasTable:
    """Import bindings visible from one scope, in textual order."""

    def __init__(self, bindings: Iterable[ImportBinding] = ()):
        self.bindings: list[ImportBinding] = sorted(bindings, key=lambda b: b.lineno)
        self.warnings: list[str] = []

    def lookup(self, name: str, lineno: int | None = None) -> ImportBinding | None:
        found = None
        later = None
        for b in self.bindings:
            if b.local != name:
                continue
            if lineno is None or b.lineno <= lineno:
                found = b
            elif b.scope == MODULE_SCOPE and later is None:
                # module-level imports placed below a function are bound by call time
                later = b
        return found or later

    def effective(self, lineno: int | None = None) -> dict[str, ImportBinding]:
        names = dict.fromkeys(b.local for b in self.bindings)
        out = {}
        for n in names:
            b = self.lookup(n, lineno)
            if b is not None:
                out[n] = b
        return out

    def as_dict(self, lineno: int | None = None) -> dict[str, str]:
        return {k: str(b.target) for k, b in self.effective(lineno).items()}

    def __len__(self) -> int:
        return len(self.bindings)


class ObjectTypeTable:
    """Variable -> constructing FQN, scoped to one function body."""

    def __init__(self, entries: Iterable[ObjectBinding] = ()):
        self.entries: list[ObjectBinding] = sorted(entries, key=lambda e: e.lineno)

    def lookup(self, name: str, lineno: int | None = None) -> ObjectBinding | None:
        """Latest assignment to ``name`` that completed before ``lineno``, tombstones included."""
        found = None
        for e in self.entries:
            if e.name == name and (lineno is None or e.end_lineno < lineno):
                found = e
        return found

    def as_dict(self, lineno: int | None = None) -> dict[str, str]:
        out = {}
        for e in self.entries:
            if lineno is None or e.end_lineno < lineno:
                if e.fqn is None:
                    out.pop(e.name, None)
                else:
                    out[e.name] = str(e.fqn)
        return out

    def __len__(self) -> int:
        return sum(1 for _ in self.as_dict())


@dataclass(frozen=True)
class CallSite:
    """A call expression; line numbers are 1-based, columns 0-based characters."""

    lineno: int
    col: int
    end_lineno: int
    end_col: int
    callee: str
    parts: tuple[str, ...] | None
    scope: str


@dataclass(frozen=True)
class ResolvedCall:
    fqn: Fqn | None
    line_number: int
    column: int
    end_line: int
    end_column: int
    callee: str
    resolution_kind: str
    head: str | None = None
    head_target: Fqn | None = None
    evidence: tuple[str, ...] = ()

    @property
    def resolved(self) -> bool:
        return self.fqn is not None


@dataclass
class FunctionInfo:
    qualname: str
    start: int
    end: int
    body_start: int
    parent: str | None


@dataclass
class AssignInfo:
    targets: tuple[str, ...]
    value: ast.expr
    lineno: int
    end_lineno: int
    scope: str
    statement: str


@dataclass
class ModuleIndex:
    source: str
    lines: list[str]
    functions: list[FunctionInfo]
    imports: list[ImportBinding]
    assigns: list[AssignInfo]
    calls: list[CallSite]
    warnings: list[str] = field(default_factory=list)

    def function(self, qualname: str) -> FunctionInfo | None:
        for f in self.functions:
            if f.qualname == qualname:
                return f
        return None

    def scope_chain(self, scope: str) -> list[str]:
        chain = []
        cur: str | None = scope
        while cur is not None and cur != MODULE_SCOPE:
            chain.append(cur)
            info = self.function(cur)
            cur = info.parent if info else None
        chain.append(MODULE_SCOPE)
        return chain

    def innermost_function(self, lineno: int) -> FunctionInfo | None:
        best = None
        for f in self.functions:
            if f.start <= lineno <= f.end and (best is None or f.start >= best.start):
                best = f
        return best


@dataclass
class SourceFunction:
    path: str
    qualname: str
    start: int
    end: int
    body_start: int
    lines: list[str]
    calls: list[ResolvedCall]
    context_imports: tuple[str, ...] = ()


@dataclass(frozen=True)
class MatchedFunction:
    function: SourceFunction
    reference_call: ResolvedCall
    mapping: ApiMapping
    kind: str

    def to_record(self) -> dict:
        f = self.function
        return {
            "file": f.path,
            "function": f.qualname,
            "span": [f.start, f.end],
            "body_start": f.body_start,
            "kind": self.kind,
            "reference_line": self.reference_call.line_number,
            "reference_col": self.reference_call.column,
            "reference_callee": self.reference_call.callee,
            "reference_fqn": str(self.reference_call.fqn),
            "deprecated": str(self.mapping.deprecated),
            "replacement": str(self.mapping.replacement),
            "library": self.mapping.library,
            "version": self.mapping.deprecated_in_version,
            "source_lines": f.lines,
            "context_imports": list(f.context_imports),
        }


def parse_feature_version(grammar: str | None) -> tuple[int, int] | None:
    if not grammar:
        return None
    major, minor = grammar.split(".")[:2]
    return int(major), int(minor)


def dotted_parts(expr: ast.expr) -> tuple[str, ...] | None:
    parts = []
    while isinstance(expr, ast.Attribute):
        parts.append(expr.attr)
        expr = expr.value
    if not isinstance(expr, ast.Name):
        return None
    parts.append(expr.id)
    return tuple(reversed(parts))


class _Indexer(ast.NodeVisitor):
    def __init__(self, source: str, lines: list[str]):
        self.source = source
        self.lines = lines
        self.scope = [MODULE_SCOPE]
        self.functions: list[FunctionInfo] = []
        self.imports: list[ImportBinding] = []
        self.assigns: list[AssignInfo] = []
        self.calls: list[CallSite] = []
        self.warnings: list[str] = []
        self._name_stack: list[str] = []

    def _char_col(self, lineno: int, byte_col: int) -> int:
        line = self.lines[lineno - 1] if 0 < lineno <= len(self.lines) else ""
        return len(line.encode("utf-8")[:byte_col].decode("utf-8", errors="replace"))

    def _segment(self, node: ast.AST) -> str:
        return ast.get_source_segment(self.source, node) or ""

    def _visit_function(self, node: ast.FunctionDef | ast.AsyncFunctionDef) -> None:
        # decorators and defaults are evaluated in the enclosing scope
        for d in node.decorator_list:
            self.visit(d)
        self.visit(node.args)
        if node.returns is not None:
            self.visit(node.returns)
        qualname = ".".join(self._name_stack + [node.name])
        body_start = node.body[0].lineno if node.body else node.lineno
        parent = self.scope[-1]
        self.functions.append(
            FunctionInfo(
                qualname=qualname,
                start=node.lineno,
                end=node.end_lineno or node.lineno,
                body_start=body_start,
                parent=None if parent == MODULE_SCOPE else parent,
            )
        )
        self.scope.append(qualname)
        self._name_stack.append(node.name)
        for stmt in node.body:
            self.visit(stmt)
        self._name_stack.pop()
        self.scope.pop()

    visit_FunctionDef = _visit_function
    visit_AsyncFunctionDef = _visit_function

    def visit_ClassDef(self, node: ast.ClassDef) -> None:
        for d in node.decorator_list:
            self.visit(d)
        for b in node.bases:
            self.visit(b)
        for k in node.keywords:
            self.visit(k)
        self._name_stack.append(node.name)
        for stmt in node.body:
            self.visit(stmt)
        self._name_stack.pop()

    def visit_Import(self, node: ast.Import) -> None:
        stmt = self._segment(node)
        for alias in node.names:
            try:
                target = Fqn.parse(alias.name)
            except ValueError:
                continue
            if alias.asname:
                self.imports.append(
                    ImportBinding(alias.asname, target, "import-as", node.lineno, self.scope[-1], stmt)
                )
            else:
                # `import a.b` binds only `a`
                self.imports.append(
                    ImportBinding(target.root, Fqn((target.root,)), "import", node.lineno, self.scope[-1], stmt)
                )

    def visit_ImportFrom(self, node: ast.ImportFrom) -> None:
        stmt = self._segment(node)
        if node.level or not node.module:
            self.warnings.append(f"line {node.lineno}: relative import ignored")
            return
        base = Fqn.parse(node.module)
        for alias in node.names:
            if alias.name == "*":
                self.warnings.append(f"line {node.lineno}: star import from {node.module} ignored")
                continue
            target = base.child(alias.name)
            if alias.asname:
                self.imports.append(
                    ImportBinding(alias.asname, target, "from-import-as", node.lineno, self.scope[-1], stmt)
                )
            else:
                self.imports.append(
                    ImportBinding(alias.name, target, "from-import", node.lineno, self.scope[-1], stmt)
                )

    def _record_assign(self, targets: Sequence[ast.expr], value: ast.expr | None, node: ast.stmt) -> None:
        names: list[str] = []
        for t in targets:
            for sub in ast.walk(t):
                if isinstance(sub, ast.Name) and isinstance(sub.ctx, ast.Store):
                    names.append(sub.id)
        if not names:
            return
        # tuple targets never carry a single constructed type
        simple = value is not None and all(isinstance(t, ast.Name) for t in targets)
        self.assigns.append(
            AssignInfo(
                targets=tuple(names),
                value=value if simple else ast.Constant(value=None),
                lineno=node.lineno,
                end_lineno=node.end_lineno or node.lineno,
                scope=self.scope[-1],
                statement=self._segment(node),
            )
        )

    def visit_Assign(self, node: ast.Assign) -> None:
        self.visit(node.value)
        self._record_assign(node.targets, node.value, node)

    def visit_AnnAssign(self, node: ast.AnnAssign) -> None:
        if node.value is not None:
            self.visit(node.value)
            self._record_assign([node.target], node.value, node)

    def visit_Call(self, node: ast.Call) -> None:
        func = node.func
        lineno = func.lineno
        end_lineno = func.end_lineno or lineno
        self.calls.append(
            CallSite(
                lineno=lineno,
                col=self._char_col(lineno, func.col_offset),
                end_lineno=end_lineno,
                end_col=self._char_col(end_lineno, func.end_col_offset or 0),
                callee=self._segment(func),
                parts=dotted_parts(func),
                scope=self.scope[-1],
            )
        )
        self.generic_visit(node)


def parse_module(source: str, *, feature_version: tuple[int, int] | None = None, filename: str = "<source>") -> ModuleIndex:
    """Index functions, imports, assignments and calls of one source file."""
    try:
        tree = ast.parse(source, filename=filename, feature_version=feature_version)
    except SyntaxError as exc:
        raise SourceParseError(f"{filename}:{exc.lineno}:{exc.offset}: {exc.msg}", exc.lineno, exc.offset) from None
    lines = source.splitlines()
    indexer = _Indexer(source, lines)
    indexer.visit(tree)
    calls = sorted(indexer.calls, key=lambda c: (c.lineno, c.col))
    return ModuleIndex(
        source=source,
        lines=lines,
        functions=sorted(indexer.functions, key=lambda f: (f.start, f.qualname)),
        imports=indexer.imports,
        assigns=indexer.assigns,
        calls=calls,
        warnings=indexer.warnings,
    )


def build_alias_table(index: ModuleIndex, scope: str = MODULE_SCOPE) -> AliasTable:
    """Import bindings visible from ``scope``: its own plus every enclosing scope's."""
    chain = set(index.scope_chain(scope))
    table = AliasTable(b for b in index.imports if b.scope in chain)
    table.warnings = list(index.warnings)
    return table


def _resolve_via_aliases(parts: tuple[str, ...] | None, aliases: AliasTable, lineno: int | None) -> tuple[Fqn, ImportBinding] | None:
    if not parts:
        return None
    b = aliases.lookup(parts[0], lineno)
    if b is None:
        return None
    return b.target.child(*parts[1:]), b


def build_object_type_table(index: ModuleIndex, scope: str, aliases: AliasTable) -> ObjectTypeTable:
    entries = []
    for a in index.assigns:
        if a.scope != scope:
            continue
        fqn = None
        if isinstance(a.value, ast.Call):
            hit = _resolve_via_aliases(dotted_parts(a.value.func), aliases, a.lineno)
            if hit is not None:
                fqn = hit[0]
        for name in a.targets:
            entries.append(ObjectBinding(name, fqn, a.lineno, a.end_lineno, a.statement))
    return ObjectTypeTable(entries)


def resolve_call_fqn(call: CallSite, aliases: AliasTable, objects: ObjectTypeTable, lineno: int | None = None) -> ResolvedCall:
    """Resolve one call site; ``lineno`` overrides the position used for table lookups."""
    at = call.lineno if lineno is None else lineno
    base = dict(
        line_number=call.lineno,
        column=call.col,
        end_line=call.end_lineno,
        end_column=call.end_col,
        callee=call.callee,
    )
    parts = call.parts
    if not parts:
        return ResolvedCall(fqn=None, resolution_kind="unresolved", **base)
    head, rest = parts[0], parts[1:]
    obj = objects.lookup(head, at)
    binding = aliases.lookup(head, at)
    if obj is not None and obj.fqn is not None and rest:
        return ResolvedCall(
            fqn=obj.fqn.child(*rest),
            resolution_kind="object-type",
            head=head,
            head_target=obj.fqn,
            evidence=(obj.statement,),
            **base,
        )
    if obj is not None and (binding is None or obj.lineno >= binding.lineno):
        # a local assignment shadows the import binding
        return ResolvedCall(fqn=None, resolution_kind="unresolved", head=head, **base)
    if binding is not None:
        return ResolvedCall(
            fqn=binding.target.child(*rest),
            resolution_kind=_BINDING_KIND_TO_RESOLUTION[binding.kind],
            head=head,
            head_target=binding.target,
            evidence=(binding.statement,),
            **base,
        )
    return ResolvedCall(fqn=None, resolution_kind="unresolved", head=head, **base)


def resolve_module_calls(index: ModuleIndex) -> list[ResolvedCall]:
    """Resolve every call of a module in (line, column) order."""
    tables: dict[str, tuple[AliasTable, ObjectTypeTable]] = {}
    out = []
    for call in index.calls:
        if call.scope not in tables:
            aliases = build_alias_table(index, call.scope)
            tables[call.scope] = (aliases, build_object_type_table(index, call.scope, aliases))
        aliases, objects = tables[call.scope]
        out.append(resolve_call_fqn(call, aliases, objects))
    return out


def extract_functions(index: ModuleIndex, path: str = "<source>") -> list[SourceFunction]:
    resolved = resolve_module_calls(index)
    by_scope: dict[str, list[ResolvedCall]] = {}
    for call, rc in zip(index.calls, resolved):
        by_scope.setdefault(call.scope, []).append(rc)
    out = []
    for f in index.functions:
        chain = index.scope_chain(f.qualname)[1:]
        ctx = []
        for b in index.imports:
            if b.scope in chain and b.statement not in ctx:
                ctx.append(b.statement)
        calls = [c for c in by_scope.get(f.qualname, []) if f.start <= c.line_number <= f.end]
        out.append(
            SourceFunction(
                path=path,
                qualname=f.qualname,
                start=f.start,
                end=f.end,
                body_start=f.body_start,
                lines=index.lines[f.start - 1 : f.end],
                calls=calls,
                context_imports=tuple(ctx),
            )
        )
    return out


def match_function(func: SourceFunction, mappings: MappingSet) -> MatchedFunction | None:
    for call in func.calls:
        if call.fqn is None:
            continue
        hit = mappings.side_of(call.fqn)
        if hit is not None:
            mapping, kind = hit
            return MatchedFunction(func, call, mapping, kind)
    return None


def match_source(source: str, mappings: MappingSet, path: str = "<source>", *, feature_version=None) -> list[MatchedFunction]:
    index = parse_module(source, feature_version=feature_version, filename=path)
    out = []
    for func in extract_functions(index, path):
        m = match_function(func, mappings)
        if m is not None:
            out.append(m)
    return out


def iter_source_files(root: str | Path, ext: str = ".py") -> list[Path]:
    root = Path(root)
    exts = tuple(e if e.startswith(".") else "." + e for e in ext.split(","))
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            if name.endswith(exts):
                found.append(Path(dirpath) / name)
    return sorted(found, key=lambda p: p.relative_to(root).as_posix())


@dataclass
class ScanResult:
    matches: list[MatchedFunction]
    files_scanned: int = 0
    warnings: list[str] = field(default_factory=list)


def _scan_file(path: Path, root: Path, mappings: MappingSet, feature_version) -> tuple[list[MatchedFunction], list[str]]:
    rel = path.relative_to(root).as_posix()
    try:
        source = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return [], [f"{rel}: unreadable: {exc}"]
    try:
        index = parse_module(source, feature_version=feature_version, filename=rel)
    except SourceParseError as exc:
        return [], [f"skipped {exc}"]
    warnings = [f"{rel}: {w}" for w in index.warnings]
    out = []
    for func in extract_functions(index, rel):
        m = match_function(func, mappings)
        if m is not None:
            out.append(m)
    return out, warnings


def scan_corpus(root: str | Path, mappings: MappingSet, *, ext: str = ".py", grammar: str | None = None, workers: int = 1) -> ScanResult:
    root = Path(root)
    files = iter_source_files(root, ext)
    fv = parse_feature_version(grammar)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _scan_file(p, root, mappings, fv), files))
    else:
        results = [_scan_file(p, root, mappings, fv) for p in files]
    matches: list[MatchedFunction] = []
    warnings: list[str] = []
    for found, warns in results:
        matches.extend(found)
        warnings.extend(warns)
    for w in warnings:
        log.warning(w)
    matches.sort(key=lambda m: (m.function.path, m.function.start, m.function.qualname))
    return ScanResult(matches, len(files), warnings)


def match_corpus(root: str | Path, mappings: MappingSet, **kwargs) -> list[MatchedFunction]:
    return scan_corpus(root, mappings, **kwargs).matches


def shift_call(call: CallSite, lines: int) -> CallSite:
    return replace(call, lineno=call.lineno + lines, end_lineno=call.end_lineno + lines)
