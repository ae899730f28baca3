"""Stage-oriented command line: scan, prompts, complete, annotate, fix, report.

Exit codes: 0 success (warnings allowed), 2 usage or configuration error,
3 backend failure that survived the retry budget.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from depfix.annotator import SampleContext, annotate
from depfix.errors import BackendConfigError, BackendError, DepfixError, MappingLoadError, MappingValidationError
from depfix.fixer import STRATEGIES, deprecation_aware_complete, select_eval_set
from depfix.gateway import (
    Backend,
    Completion,
    DecodingParams,
    backend_from_entry,
    complete,
    load_backend_config,
    load_scripted_backend,
    map_ordered,
)
from depfix.jsonl import JsonlError, JsonlWriter, SchemaError, check_schema, existing_ids, read_jsonl
from depfix.mappings import MappingSet, load_mappings
from depfix.metrics import report
from depfix.prompts import PromptRejected, PromptSample, prompt_from_function_record
from depfix.resolver import parse_feature_version, scan_corpus

log = logging.getLogger("depfix")

EXIT_OK, EXIT_USAGE, EXIT_BACKEND = 0, 2, 3


class UsageError(DepfixError):
    pass


@dataclass
class RunConfig:
    mappings: str | None = None
    corpus: str | None = None
    backends: list | None = None
    backend: str | None = None
    strategy: str | None = None
    concurrency: int = 4
    grammar: str | None = None
    ext: str = ".py"
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path: str | None) -> RunConfig:
        if not path:
            return cls()
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        known = {k: doc[k] for k in ("mappings", "corpus", "backends", "backend", "strategy", "concurrency", "grammar", "ext") if k in doc}
        cfg = cls(**known, base_dir=p.parent)
        if cfg.strategy is not None and cfg.strategy not in STRATEGIES:
            raise UsageError(f"config: unknown strategy {cfg.strategy!r}")
        return cfg

    def path(self, value: str | None) -> str | None:
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() else self.base_dir / p)


def _load_mappings(arg: str | None, cfg: RunConfig, required: bool = True) -> MappingSet | None:
    path = arg or cfg.path(cfg.mappings)
    if not path:
        if required:
            raise UsageError("--mappings is required")
        return None
    if not Path(path).exists():
        raise UsageError(f"mapping file not found: {path}")
    return load_mappings(path)


def resolve_backend(arg: str | None, cfg: RunConfig) -> Backend:
    """``--backend`` names a backend from the config, or points at a backend config or script file."""
    name = arg or cfg.backend
    if not name:
        raise UsageError("--backend is required")
    for entry in cfg.backends or ():
        if entry.get("name") == name:
            return backend_from_entry(entry, cfg.base_dir)
    p = Path(name)
    if not p.is_file():
        raise UsageError(f"unknown backend {name!r}: not in config and not a file")
    doc = json.loads(p.read_text(encoding="utf-8"))
    if isinstance(doc, (list,)) or (isinstance(doc, dict) and ("kind" in doc or "backends" in doc)):
        return load_backend_config(p)
    return load_scripted_backend(p)


def _read_stage(path: str, stage: str) -> list[dict]:
    if not Path(path).exists():
        raise UsageError(f"input not found: {path}")
    recs = read_jsonl(path)
    check_schema(recs, stage, path)
    return recs


def _writer(args, path: str, stage: str) -> JsonlWriter:
    return JsonlWriter(path, stage, with_header=not args.no_header, resume=args.resume)


def _pending(args, records: list[dict], out: str) -> list[dict]:
    if not args.resume:
        return records
    done = existing_ids(out)
    return [r for r in records if r["id"] not in done]


def cmd_scan(args, cfg: RunConfig) -> int:
    mappings = _load_mappings(args.mappings, cfg)
    corpus = args.corpus or cfg.path(cfg.corpus)
    if not corpus or not Path(corpus).is_dir():
        raise UsageError(f"corpus directory not found: {corpus}")
    result = scan_corpus(corpus, mappings, ext=args.ext or cfg.ext, grammar=args.grammar or cfg.grammar, workers=args.concurrency or cfg.concurrency)
    with JsonlWriter(args.out, "functions", with_header=not args.no_header) as w:
        w.write_all(m.to_record() for m in result.matches)
    counts = Counter((m.mapping.library, m.kind) for m in result.matches)
    print(f"scanned {result.files_scanned} files, {len(result.matches)} matched functions")
    print(f"{'library':<20}{'outdated':>10}{'up-to-dated':>13}")
    for lib in mappings.libraries():
        o, u = counts[(lib, "outdated")], counts[(lib, "up-to-dated")]
        if o or u:
            print(f"{lib:<20}{o:>10}{u:>13}")
    print(f"{'total':<20}{sum(v for (l, k), v in counts.items() if k == 'outdated'):>10}"
          f"{sum(v for (l, k), v in counts.items() if k == 'up-to-dated'):>13}")
    return EXIT_OK


def cmd_prompts(args, cfg: RunConfig) -> int:
    recs = _read_stage(args.functions, "functions")
    samples, rejected = [], 0
    for rec in recs:
        try:
            samples.append(prompt_from_function_record(rec))
        except PromptRejected as exc:
            rejected += 1
            log.warning("rejected %s:%s (line %s): %s", rec["file"], rec["function"], rec["reference_line"], exc.reason)
    done = existing_ids(args.out) if args.resume else set()
    with _writer(args, args.out, "prompts") as w:
        w.write_all(s.to_record() for s in samples if s.id not in done)
    n_o = sum(1 for s in samples if s.origin == "O")
    print(f"prompts: {len(samples)} (O={n_o}, U={len(samples) - n_o}), rejected: {rejected}")
    return EXIT_OK


def _params(args) -> DecodingParams:
    return DecodingParams(max_new_tokens=args.max_new_tokens)


def cmd_complete(args, cfg: RunConfig) -> int:
    recs = _read_stage(args.prompts, "prompts")
    backend = resolve_backend(args.backend, cfg)
    params = _params(args)
    todo = _pending(args, recs, args.out)

    def run(rec):
        sample = PromptSample.from_record(rec)
        return complete(sample.pmpt, backend, params, key=sample.id)

    results = map_ordered(run, todo, args.concurrency or cfg.concurrency)
    failures = 0
    with _writer(args, args.out, "completions") as w:
        for rec, res in zip(todo, results):
            if isinstance(res, BaseException):
                failures += 1
                log.error("sample %s: %s", rec["id"], res)
                continue
            w.write({
                **rec,
                "completion": res.text,
                "raw_completion": res.raw,
                "backend": res.backend,
                "params": res.params.to_dict(),
                "truncated": res.truncated,
            })
    print(f"completed {len(todo) - failures}/{len(todo)} samples with {backend.name}")
    return EXIT_BACKEND if failures else EXIT_OK


def cmd_annotate(args, cfg: RunConfig) -> int:
    recs = _read_stage(args.completions, "completions")
    mappings = _load_mappings(args.mappings, cfg, required=False)
    fv = parse_feature_version(args.grammar or cfg.grammar)
    todo = _pending(args, recs, args.out)
    counts = Counter()
    with _writer(args, args.out, "annotated") as w:
        for rec in todo:
            sample = PromptSample.from_record(rec)
            v = annotate(rec["completion"], sample, mappings, SampleContext.for_sample(sample, fv))
            counts[v.label] += 1
            mc = v.matched_call
            w.write({
                **rec,
                "label": v.label,
                "matched_fqn": v.matched_fqn,
                "matched_line_col": [mc.line_number, mc.column] if mc else None,
                "unparsable": v.unparsable,
                "other_deprecated": list(v.other_deprecated),
                "truncated": rec.get("truncated", False),
            })
    print("annotated: " + ", ".join(f"{k}={counts[k]}" for k in ("good", "bad", "irrelevant")))
    return EXIT_OK


def cmd_fix(args, cfg: RunConfig) -> int:
    recs = _read_stage(args.annotated, "annotated")
    strategy = args.strategy or cfg.strategy
    if strategy not in STRATEGIES:
        raise UsageError(f"--strategy must be one of {', '.join(STRATEGIES)}")
    backend = resolve_backend(args.backend, cfg)
    mappings = _load_mappings(args.mappings, cfg, required=False)
    params = _params(args)
    todo = _pending(args, select_eval_set(recs), args.out)

    def run(rec):
        sample = PromptSample.from_record(rec)
        mset = mappings if mappings is not None else MappingSet((sample.mapping,))
        comp = Completion(rec["completion"], rec["backend"], params, rec.get("raw_completion", rec["completion"]))
        return deprecation_aware_complete(sample, mset, backend, strategy, params, comp=comp)

    results = map_ordered(run, todo, args.concurrency or cfg.concurrency)
    statuses = Counter()
    hard = 0
    with _writer(args, args.out, "fixed") as w:
        for rec, res in zip(todo, results):
            if isinstance(res, BaseException):
                hard += 1
                log.error("sample %s: %s", rec["id"], res)
                continue
            if res.outcome is None:
                out = {
                    "id": rec["id"], "strategy": strategy, "original_completion": rec["completion"],
                    "prefix": None, "inserted_prompt": None, "fixed_completion": rec["completion"],
                    "fixed_label": rec["label"], "status": "not-fixed",
                    "ground_truth_line": rec["ground_truth_line"], "fixed_with": None, "warnings": [], "error": None,
                }
            else:
                out = res.outcome.to_record()
            out.update({"backend": backend.name, "library": rec["library"], "origin": rec["origin"],
                        "deprecated": rec["deprecated"], "replacement": rec["replacement"]})
            statuses[out["status"]] += 1
            w.write(out)
    print(f"fix ({strategy}) over {len(todo)} samples: " + ", ".join(f"{k}={v}" for k, v in sorted(statuses.items())))
    return EXIT_BACKEND if hard else EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    annotated = _read_stage(args.annotated, "annotated")
    fixed = _read_stage(args.fixed, "fixed") if args.fixed else None
    keys = [k.strip() for k in args.group_by.split(",") if k.strip()]
    try:
        rep = report(annotated, fixed, keys)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = rep.render(args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run configuration")
    p.add_argument("--no-header", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="omit the timestamped header record from JSONL outputs")
    p.add_argument("--resume", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="skip ids already present in the output file")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depfix", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        _global_flags(sp, suppress=True)
        sp.set_defaults(func=fn)
        return sp

    sp = add("scan", cmd_scan, "find outdated and up-to-dated functions in a corpus")
    sp.add_argument("--corpus")
    sp.add_argument("--mappings")
    sp.add_argument("--out", default="functions.jsonl")
    sp.add_argument("--ext", help="comma-separated file extensions (default .py)")
    sp.add_argument("--grammar", help="Python grammar version, e.g. 3.8")
    sp.add_argument("--concurrency", type=int)

    sp = add("prompts", cmd_prompts, "build line-level completion prompts")
    sp.add_argument("--functions", required=True)
    sp.add_argument("--out", default="prompts.jsonl")

    sp = add("complete", cmd_complete, "query a backend for each prompt")
    sp.add_argument("--prompts", required=True)
    sp.add_argument("--backend")
    sp.add_argument("--out", default="completions.jsonl")
    sp.add_argument("--concurrency", type=int)
    sp.add_argument("--max-new-tokens", type=int, default=50)

    sp = add("annotate", cmd_annotate, "label completions good, bad or irrelevant")
    sp.add_argument("--completions", required=True)
    sp.add_argument("--mappings")
    sp.add_argument("--out", default="annotated.jsonl")
    sp.add_argument("--grammar")

    sp = add("fix", cmd_fix, "repair bad completions of up-to-dated samples")
    sp.add_argument("--annotated", required=True)
    sp.add_argument("--strategy", choices=STRATEGIES)
    sp.add_argument("--backend")
    sp.add_argument("--mappings")
    sp.add_argument("--out", default="fixed.jsonl")
    sp.add_argument("--concurrency", type=int)
    sp.add_argument("--max-new-tokens", type=int, default=50)

    sp = add("report", cmd_report, "aggregate AUP/DUR and FR/ES/EM")
    sp.add_argument("--annotated", required=True)
    sp.add_argument("--fixed")
    sp.add_argument("--group-by", default="backend,dataset")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        return args.func(args, cfg)
    except (UsageError, SchemaError, JsonlError, MappingLoadError, MappingValidationError, BackendConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
