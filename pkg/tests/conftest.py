from __future__ import annotations

import sys
from pathlib import Path

import pytest

from depfix.mappings import ApiMapping, Fqn
from depfix.prompts import PromptSample

FIXTURES = Path(__file__).parent / "fixtures"


def mapping(dep: str, rep: str, library: str | None = None) -> ApiMapping:
    return ApiMapping(library or dep.split(".")[0], Fqn.parse(dep), Fqn.parse(rep))


def make_sample(
    dep: str = "torch.lstsq",
    rep: str = "torch.linalg.lstsq",
    prompt: str = "def f(A, B):\n    A = A.float()",
    imports: tuple[str, ...] = ("import torch",),
    truth: str = "    X = torch.linalg.lstsq(A, B)",
    origin: str = "U",
    id: str = "s1",
) -> PromptSample:
    return PromptSample(
        id=id,
        prompt_lines=tuple(prompt.split("\n")),
        mapping=mapping(dep, rep),
        origin=origin,
        ground_truth_line=truth,
        context_imports=imports,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def e2e_dir() -> Path:
    return FIXTURES / "e2e"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, what = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {what}")
