"""Deprecated -> replacement API mappings.

The on-disk format is a JSON array of objects::

    [{"library": "torch", "deprecated": "torch.lstsq",
      "replacements": ["torch.linalg.lstsq"], "version": "1.9.0"}]

One-to-many entries are split into one-to-one :class:`ApiMapping` values, in
file order.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from depfix.errors import MappingLoadError, MappingValidationError

log = logging.getLogger(__name__)

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True, order=True)
class Fqn:
    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("an FQN needs at least one segment")
        for seg in self.segments:
            if not isinstance(seg, str) or not _IDENT.match(seg):
                raise ValueError(f"invalid identifier {seg!r} in FQN")

    @classmethod
    def parse(cls, dotted: str) -> Fqn:
        if not isinstance(dotted, str):
            raise ValueError(f"FQN must be a string, got {type(dotted).__name__}")
        return cls(tuple(dotted.strip().split(".")))

    @property
    def root(self) -> str:
        return self.segments[0]

    def startswith(self, other: Fqn) -> bool:
        """Segment-wise prefix test (``torch`` prefixes ``torch.linalg`` but not ``torchvision``)."""
        n = len(other.segments)
        return self.segments[:n] == other.segments

    def child(self, *names: str) -> Fqn:
        return Fqn(self.segments + tuple(names))

    def __len__(self) -> int:
        return len(self.segments)

    def __str__(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True)
class ApiMapping:
    library: str
    deprecated: Fqn
    replacement: Fqn
    deprecated_in_version: str | None = None

    def __post_init__(self) -> None:
        if self.deprecated == self.replacement:
            raise ValueError(f"{self.deprecated} maps to itself")

    def to_dict(self) -> dict:
        d = {
            "library": self.library,
            "deprecated": str(self.deprecated),
            "replacements": [str(self.replacement)],
        }
        if self.deprecated_in_version is not None:
            d["version"] = self.deprecated_in_version
        return d

    @classmethod
    def from_record(cls, rec: dict) -> ApiMapping:
        """Rebuild from the flat fields carried by pipeline JSONL records."""
        return cls(
            library=rec["library"],
            deprecated=Fqn.parse(rec["deprecated"]),
            replacement=Fqn.parse(rec["replacement"]),
            deprecated_in_version=rec.get("version"),
        )


@dataclass(frozen=True)
class MappingSet:
    """Immutable, ordered collection of one-to-one mappings."""

    mappings: tuple[ApiMapping, ...] = ()
    _by_deprecated: dict = field(default_factory=dict, repr=False, compare=False)
    _by_replacement: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for m in self.mappings:
            self._by_deprecated.setdefault(m.deprecated, m)
            self._by_replacement.setdefault(m.replacement, m)

    def __iter__(self) -> Iterator[ApiMapping]:
        return iter(self.mappings)

    def __len__(self) -> int:
        return len(self.mappings)

    def __getitem__(self, i: int) -> ApiMapping:
        return self.mappings[i]

    def find_by_deprecated(self, fqn: Fqn) -> ApiMapping | None:
        return self._by_deprecated.get(fqn)

    def find_by_replacement(self, fqn: Fqn) -> ApiMapping | None:
        return self._by_replacement.get(fqn)

    def side_of(self, fqn: Fqn) -> tuple[ApiMapping, str] | None:
        """Return the first mapping that mentions ``fqn`` and which side it is on.

        Deprecated matches win over replacement matches when an FQN is both
        (chained deprecations such as ``torch.gels -> torch.lstsq -> ...``).
        """
        m = self._by_deprecated.get(fqn)
        if m is not None:
            return m, "outdated"
        m = self._by_replacement.get(fqn)
        if m is not None:
            return m, "up-to-dated"
        return None

    def libraries(self) -> list[str]:
        return list(dict.fromkeys(m.library for m in self.mappings))

    def to_json(self) -> list[dict]:
        return [m.to_dict() for m in self.mappings]


def find_by_deprecated(mset: MappingSet, fqn: Fqn) -> ApiMapping | None:
    return mset.find_by_deprecated(fqn)


def _parse_fqn(value, what: str, index: int) -> Fqn:
    try:
        return Fqn.parse(value)
    except ValueError as exc:
        raise MappingValidationError(f"entry {index}: bad {what} {value!r}: {exc}") from None


def mappings_from_json(doc) -> MappingSet:
    if not isinstance(doc, list):
        raise MappingValidationError("mapping file must hold a JSON array")
    out: list[ApiMapping] = []
    seen: set[tuple[Fqn, Fqn]] = set()
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise MappingValidationError(f"entry {i}: expected an object")
        library = entry.get("library")
        if not isinstance(library, str) or not library:
            raise MappingValidationError(f"entry {i}: missing library name")
        dep = _parse_fqn(entry.get("deprecated"), "deprecated FQN", i)
        reps = entry.get("replacements")
        if not isinstance(reps, list) or not reps:
            raise MappingValidationError(f"entry {i} ({dep}): replacements must be a non-empty array")
        version = entry.get("version")
        if version is not None and not isinstance(version, str):
            raise MappingValidationError(f"entry {i} ({dep}): version must be a string")
        for raw in reps:
            rep = _parse_fqn(raw, "replacement FQN", i)
            if rep == dep:
                raise MappingValidationError(f"entry {i}: {dep} maps to itself")
            if (dep, rep) in seen:
                raise MappingValidationError(f"entry {i}: duplicate mapping {dep} -> {rep}")
            seen.add((dep, rep))
            root = library.split(".")[0]
            if dep.root != root and rep.root != root:
                log.warning("entry %d: neither %s nor %s is rooted in library %r", i, dep, rep, library)
            out.append(ApiMapping(library, dep, rep, version))
    return MappingSet(tuple(out))


def load_mappings(path: str | Path) -> MappingSet:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MappingLoadError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return mappings_from_json(doc)


def dump_mappings(mset: MappingSet | Sequence[ApiMapping], path: str | Path) -> None:
    data = [m.to_dict() for m in mset]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
