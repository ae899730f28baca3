"""Deprecation-aware completion with two repair strategies.

``replace-api`` cuts the completion at the deprecated callee, splices in the
replacement and lets the model regenerate the rest of the line.
``insert-prompt`` appends two guidance comments to the prompt and asks for a
fresh completion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

from depfix.annotator import SampleContext, Verdict, annotate, find_call
from depfix.errors import BackendError, FixError, StrategyUnsupported
from depfix.gateway import Backend, Completion, DecodingParams, complete, continue_from
from depfix.mappings import ApiMapping, Fqn, MappingSet
from depfix.prompts import PromptDataset, PromptSample

log = logging.getLogger(__name__)

STRATEGIES = ("replace-api", "insert-prompt")
STATUSES = ("fixed", "not-fixed", "strategy-unsupported", "backend-error")
GUIDANCE = "{dep} is deprecated, use {rep} instead and revise the return value and arguments."


@dataclass
class FixOutcome:
    sample_id: str
    strategy: str
    original_comp: str
    fixed_comp: str | None
    fixed_verdict: Verdict | None
    ground_truth_line: str
    status: str
    mapping: ApiMapping | None = None
    prefix: str | None = None
    inserted_prompt: str | None = None
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "id": self.sample_id,
            "strategy": self.strategy,
            "original_completion": self.original_comp,
            "prefix": self.prefix,
            "inserted_prompt": self.inserted_prompt,
            "fixed_completion": self.fixed_comp,
            "fixed_label": self.fixed_verdict.label if self.fixed_verdict else None,
            "status": self.status,
            "ground_truth_line": self.ground_truth_line,
            "fixed_with": f"{self.mapping.deprecated} -> {self.mapping.replacement}" if self.mapping else None,
            "warnings": self.warnings,
            "error": self.error,
        }


@dataclass
class AwareResult:
    completion: Completion
    outcome: FixOutcome | None
    fix_calls: int


def render_replacement(rep: Fqn, ctx: SampleContext, prefer: str | None = None) -> tuple[str, bool]:
    """Spell ``rep`` with the names bound at the completion line.

    The binding whose target is the longest segment prefix of ``rep`` wins,
    ties going to ``prefer`` (the head name the deprecated call used). Returns
    the spelling and whether an import for ``rep`` is missing.
    """
    best: tuple[int, int, str, Fqn] | None = None
    for local, target in ctx.bindings().items():
        if not rep.startswith(target):
            continue
        rank = (len(target), 1 if local == prefer else 0)
        if best is None or rank > best[:2]:
            best = (*rank, local, target)
    if best is None:
        return str(rep), True
    _, _, local, target = best
    return ".".join((local,) + rep.segments[len(target) :]), False


def replace_dep(comp: Completion | str, dep: Fqn, rep: Fqn, sample: PromptSample, ctx: SampleContext | None = None) -> str:
    prefix, _ = _replace_dep(comp, dep, rep, sample, ctx)
    return prefix


def _replace_dep(comp, dep, rep, sample, ctx=None) -> tuple[str, list[str]]:
    ctx = ctx or SampleContext.for_sample(sample)
    text = comp.text if isinstance(comp, Completion) else comp
    call = find_call(text, dep, ctx)
    if call is None:
        raise FixError(f"no call to {dep} located in {text!r}")
    rendered, missing = render_replacement(rep, ctx, prefer=call.head)
    warnings = [f"needs import for {rep}"] if missing else []
    return text[: call.column] + rendered, warnings


def create_rep_pmpt(comp: Completion | str, dep: Fqn | str, rep: Fqn | str, pmpt: str) -> str:
    text = comp.text if isinstance(comp, Completion) else comp
    indent = ""
    for line in reversed(pmpt.split("\n")):
        if line.strip():
            indent = line[: len(line) - len(line.lstrip())]
            break
    return "\n".join(
        [
            f"{indent}# {text.strip()}",
            f"{indent}# " + GUIDANCE.format(dep=dep, rep=rep),
        ]
    )


def fix_replace_api(pmpt, comp, dep, rep, backend: Backend, sample, params=None, ctx=None) -> str:
    if not backend.supports_continuation:
        raise StrategyUnsupported(f"backend {backend.name} cannot continue from a prefix")
    prefix = replace_dep(comp, dep, rep, sample, ctx)
    return prefix + continue_from(pmpt, prefix, backend, params, key=sample.id)


def fix_insert_prompt(pmpt, comp, dep, rep, backend: Backend, sample, params=None) -> str:
    augmented = pmpt + "\n" + create_rep_pmpt(comp, dep, rep, pmpt)
    return complete(augmented, backend, params, key=f"{sample.id}#insert-prompt").text


def run_fix(
    strategy: str,
    sample: PromptSample,
    comp: Completion,
    mapping: ApiMapping,
    backend: Backend,
    params: DecodingParams | None = None,
    ctx: SampleContext | None = None,
    mappings: MappingSet | None = None,
) -> FixOutcome:
    """One Fix invocation, with failures folded into the outcome status."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    ctx = ctx or SampleContext.for_sample(sample)
    pmpt = sample.pmpt
    out = FixOutcome(
        sample_id=sample.id,
        strategy=strategy,
        original_comp=comp.text,
        fixed_comp=None,
        fixed_verdict=None,
        ground_truth_line=sample.ground_truth_line,
        status="not-fixed",
        mapping=mapping,
    )
    dep, rep = mapping.deprecated, mapping.replacement
    try:
        if strategy == "replace-api":
            if not backend.supports_continuation:
                raise StrategyUnsupported(f"backend {backend.name} cannot continue from a prefix")
            out.prefix, out.warnings = _replace_dep(comp, dep, rep, sample, ctx)
            fixed = out.prefix + continue_from(pmpt, out.prefix, backend, params, key=sample.id)
        else:
            out.inserted_prompt = create_rep_pmpt(comp, dep, rep, pmpt)
            fixed = complete(pmpt + "\n" + out.inserted_prompt, backend, params, key=f"{sample.id}#insert-prompt").text
    except StrategyUnsupported as exc:
        out.status, out.error = "strategy-unsupported", str(exc)
        return out
    except FixError as exc:
        out.error = str(exc)
        return out
    except BackendError as exc:
        out.status, out.error = "backend-error", str(exc)
        return out
    out.fixed_comp = fixed
    out.fixed_verdict = annotate(fixed, sample, mappings, ctx)
    out.status = "fixed" if out.fixed_verdict.label == "good" else "not-fixed"
    return out


def deprecation_aware_complete(
    sample: PromptSample,
    mappings: MappingSet,
    backend: Backend,
    strategy: str,
    params: DecodingParams | None = None,
    comp: Completion | None = None,
    fix: Callable[..., FixOutcome] = run_fix,
) -> AwareResult:
    """Complete ``sample`` and repair the first deprecated API found, at most once.

    ``comp`` reuses an earlier completion instead of querying the backend.
    """
    params = params or DecodingParams()
    if comp is None:
        comp = complete(sample.pmpt, backend, params, key=sample.id)
    ctx = SampleContext.for_sample(sample)
    for mapping in mappings:
        if find_call(comp, mapping.deprecated, ctx) is not None:
            outcome = fix(strategy, sample, comp, mapping, backend, params, ctx, mappings)
            fixed = comp
            if outcome.fixed_comp is not None:
                fixed = Completion(outcome.fixed_comp, backend.name, params, outcome.fixed_comp)
            return AwareResult(fixed, outcome, 1)
    return AwareResult(comp, None, 0)


def build_eval_set(
    uptodate: PromptDataset | Iterable[PromptSample],
    backend: Backend,
    params: DecodingParams | None = None,
) -> list[tuple[PromptSample, Completion]]:
    """Up-to-dated samples whose plain completion uses the deprecated API."""
    out = []
    for sample in uptodate:
        if sample.origin != "U":
            continue
        comp = complete(sample.pmpt, backend, params, key=sample.id)
        if annotate(comp, sample).label == "bad":
            out.append((sample, comp))
    return out


def select_eval_set(records: Iterable[dict]) -> list[dict]:
    """The same selection over ``annotated.jsonl`` records."""
    return [r for r in records if r.get("origin") == "U" and r.get("label") == "bad"]
