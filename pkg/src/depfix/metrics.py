"""AUP, DUR, FR, ES and EM, plus grouped JSON/CSV reports.

Ratios are kept as :class:`fractions.Fraction` until they are rendered.
Undefined ratios render as an em dash, never as zero.
"""

from __future__ import annotations

import ast
import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from depfix._kernels import levenshtein
from depfix.errors import UndefinedMetric
from depfix.textutil import close_brackets

UNDEFINED = "—"
GROUP_KEYS = ("backend", "library", "dataset")
DATASET_ORDER = {"O": 0, "U": 1, "All": 2}


def _label(v) -> str:
    return v if isinstance(v, str) else v.label


def aup(verdicts: Iterable) -> Fraction:
    labels = [_label(v) for v in verdicts]
    if not labels:
        raise UndefinedMetric("AUP of an empty dataset")
    return Fraction(sum(1 for l in labels if l in ("good", "bad")), len(labels))


def dur(verdicts: Iterable) -> Fraction:
    labels = [_label(v) for v in verdicts]
    plausible = sum(1 for l in labels if l in ("good", "bad"))
    if not plausible:
        raise UndefinedMetric("DUR without plausible completions")
    return Fraction(sum(1 for l in labels if l == "bad"), plausible)


def _status(o) -> str:
    return o if isinstance(o, str) else getattr(o, "status", None) or o["status"]


def fixed_rate(outcomes: Iterable) -> Fraction:
    statuses = [_status(o) for o in outcomes]
    attempted = [s for s in statuses if s != "strategy-unsupported"]
    if not attempted:
        raise UndefinedMetric("FR without attempted fixes")
    return Fraction(sum(1 for s in attempted if s == "fixed"), len(attempted))


def edit_similarity(a: str, b: str) -> Fraction:
    a, b = a.strip(), b.strip()
    longest = max(len(a), len(b))
    if longest == 0:
        return Fraction(1)
    return 1 - Fraction(levenshtein(a, b), longest)


def _byte_to_char(line: str, byte_col: int) -> int:
    return len(line.encode("utf-8")[:byte_col].decode("utf-8", errors="replace"))


def _target_spans(target: ast.expr) -> list[ast.expr]:
    if isinstance(target, (ast.Tuple, ast.List)):
        out = []
        for elt in target.elts:
            out.extend(_target_spans(elt))
        return out
    if isinstance(target, ast.Starred):
        return _target_spans(target.value)
    return [target]


def normalize_return_values_checked(line: str) -> tuple[str, bool]:
    """Like :func:`normalize_return_values`; the flag is False when the line did not parse."""
    lead = line[: len(line) - len(line.lstrip())]
    body = line.strip()
    if not body:
        return line, True
    tree = None
    for candidate in (body, close_brackets(body)):
        if candidate is None:
            continue
        try:
            tree = ast.parse(candidate)
            break
        except SyntaxError:
            continue
    if tree is None or len(tree.body) != 1:
        return line, tree is not None
    stmt = tree.body[0]
    if isinstance(stmt, ast.Assign):
        targets = [t for tgt in stmt.targets for t in _target_spans(tgt)]
    elif isinstance(stmt, ast.AnnAssign) and stmt.value is not None:
        targets = _target_spans(stmt.target)
    else:
        return line, True
    out = body
    for t in sorted(targets, key=lambda n: n.col_offset, reverse=True):
        if t.lineno != 1 or t.end_lineno != 1:
            continue
        start, end = _byte_to_char(body, t.col_offset), _byte_to_char(body, t.end_col_offset)
        out = out[:start] + "_" + out[end:]
    return lead + out, True


def normalize_return_values(line: str) -> str:
    """Replace every element assigned on the left of ``=`` by ``_``.

    >>> normalize_return_values("x, y = torch.linalg.lstsq(a, b)")
    '_, _ = torch.linalg.lstsq(a, b)'
    """
    return normalize_return_values_checked(line)[0]


def exact_match(pred: str, truth: str) -> bool:
    return normalize_return_values(pred).strip() == normalize_return_values(truth).strip()


def fmt_fraction(x: Fraction | None, digits: int = 3) -> str:
    if x is None:
        return UNDEFINED
    return f"{float(x):.{digits}f}"


def fmt_percent(x: Fraction | None) -> str:
    return UNDEFINED if x is None else f"{float(x) * 100:.1f}"


def _json_number(x: Fraction | None):
    return UNDEFINED if x is None else round(float(x), 3)


@dataclass
class MetricRow:
    group: dict
    n_samples: int = 0
    n_good: int = 0
    n_bad: int = 0
    n_irrelevant: int = 0

    def add(self, label: str) -> None:
        self.n_samples += 1
        if label == "good":
            self.n_good += 1
        elif label == "bad":
            self.n_bad += 1
        else:
            self.n_irrelevant += 1

    @property
    def aup(self) -> Fraction | None:
        return Fraction(self.n_good + self.n_bad, self.n_samples) if self.n_samples else None

    @property
    def dur(self) -> Fraction | None:
        plausible = self.n_good + self.n_bad
        return Fraction(self.n_bad, plausible) if plausible else None

    def to_json(self) -> dict:
        return {
            "type": "completion",
            **self.group,
            "n_samples": self.n_samples,
            "n_good": self.n_good,
            "n_bad": self.n_bad,
            "n_irrelevant": self.n_irrelevant,
            "aup": _json_number(self.aup),
            "dur": _json_number(self.dur),
        }


@dataclass
class FixMetricRow:
    group: dict
    n: int = 0
    n_unsupported: int = 0
    n_fixed: int = 0
    es_values: list[Fraction] = field(default_factory=list)
    em_hits: int = 0

    def add(self, rec: dict) -> None:
        self.n += 1
        status = rec["status"]
        if status == "strategy-unsupported":
            self.n_unsupported += 1
            return
        if status == "fixed":
            self.n_fixed += 1
        pred = rec.get("fixed_completion") or ""
        truth = rec.get("ground_truth_line") or ""
        self.es_values.append(edit_similarity(pred, truth))
        self.em_hits += exact_match(pred, truth)

    @property
    def attempted(self) -> int:
        return self.n - self.n_unsupported

    @property
    def fr(self) -> Fraction | None:
        return Fraction(self.n_fixed, self.attempted) if self.attempted else None

    @property
    def es(self) -> Fraction | None:
        return sum(self.es_values, Fraction(0)) / len(self.es_values) if self.es_values else None

    @property
    def em(self) -> Fraction | None:
        return Fraction(self.em_hits, self.attempted) if self.attempted else None

    def to_json(self) -> dict:
        return {
            "type": "fix",
            **self.group,
            "n": self.n,
            "n_unsupported": self.n_unsupported,
            "n_fixed": self.n_fixed,
            "fr": _json_number(self.fr),
            "es": _json_number(self.es),
            "em": _json_number(self.em),
        }


@dataclass
class Report:
    rows: list[MetricRow]
    fix_rows: list[FixMetricRow]

    def to_json(self) -> str:
        doc = {"rows": [r.to_json() for r in self.rows] + [r.to_json() for r in self.fix_rows]}
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        cols = [
            "type", "backend", "library", "dataset", "strategy",
            "n_samples", "n_good", "n_bad", "n_irrelevant", "aup", "dur",
            "n", "n_unsupported", "n_fixed", "fr", "es", "em",
        ]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            d = {**r.to_json(), "aup": fmt_fraction(r.aup), "dur": fmt_fraction(r.dur)}
            w.writerow([d.get(c, "") for c in cols])
        for r in self.fix_rows:
            d = {**r.to_json(), "fr": fmt_fraction(r.fr), "es": fmt_fraction(r.es), "em": fmt_fraction(r.em)}
            w.writerow([d.get(c, "") for c in cols])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown report format {fmt!r}")


def _sort_key(group: dict) -> tuple:
    return tuple(
        (DATASET_ORDER.get(v, 9), v) if k == "dataset" else (0, str(v)) for k, v in group.items()
    )


def report(annotated: Iterable[dict], fixed: Iterable[dict] | None = None, group_by: Sequence[str] = ("backend", "dataset")) -> Report:
    """Aggregate annotated (and optionally fixed) records into metric rows.

    With ``dataset`` among the group keys every record counts towards its own
    origin (O or U) and towards ``All``.
    """
    bad = [k for k in group_by if k not in GROUP_KEYS]
    if bad:
        raise ValueError(f"unknown group key(s): {', '.join(bad)}")
    keys = [k for k in GROUP_KEYS if k in group_by]
    rows: dict[tuple, MetricRow] = {}
    for rec in annotated:
        datasets = [rec["origin"], "All"] if "dataset" in keys else ["All"]
        for ds in datasets:
            group = {k: (ds if k == "dataset" else rec.get(k, "")) for k in keys}
            if "dataset" not in keys:
                group["dataset"] = "All"
            key = tuple(group.items())
            if key not in rows:
                rows[key] = MetricRow(group)
            rows[key].add(rec["label"])
    fix_rows: dict[tuple, FixMetricRow] = {}
    for rec in fixed or ():
        group = {k: rec.get(k, "") for k in keys if k != "dataset"}
        group["dataset"] = "T"
        group["strategy"] = rec["strategy"]
        key = tuple(group.items())
        if key not in fix_rows:
            fix_rows[key] = FixMetricRow(group)
        fix_rows[key].add(rec)
    return Report(
        rows=sorted(rows.values(), key=lambda r: _sort_key(r.group)),
        fix_rows=sorted(fix_rows.values(), key=lambda r: _sort_key(r.group)),
    )
