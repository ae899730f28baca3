import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depfix.annotator import SampleContext, annotate, contains, find_call
from depfix.gateway import Completion, DecodingParams
from depfix.mappings import Fqn, mappings_from_json
from depfix.resolver import parse_module, resolve_module_calls
from tests.conftest import make_sample

DEP, REP = Fqn.parse("torch.lstsq"), Fqn.parse("torch.linalg.lstsq")


@pytest.mark.parametrize(
    "line, label",
    [
        ("    X = torch.linalg.lstsq(A, B).solution", "good"),
        ("    X = torch.lstsq(B, A)[0]", "bad"),
        ("    X = torch.solve(B, A)", "irrelevant"),
        ("    return X", "irrelevant"),
        ("", "irrelevant"),
    ],
)
def test_three_labels(line, label):
    assert annotate(line, make_sample()).label == label


def test_accepts_completion_objects():
    c = Completion("    X = torch.lstsq(B, A)", "b", DecodingParams(), "raw")
    v = annotate(c, make_sample())
    assert v.label == "bad" and v.matched_fqn == "torch.lstsq"


def test_alias_in_context():
    s = make_sample(imports=("import torch as t",))
    assert contains("out = t.lstsq(b, a)", DEP, s)
    assert annotate("out = t.linalg.lstsq(a, b)", s).label == "good"
    assert annotate("out = torch.lstsq(b, a)", s).label == "irrelevant"


def test_from_import_in_prompt():
    s = make_sample(prompt="def f(A, B):\n    from torch.linalg import lstsq\n    A = A.float()", imports=())
    assert annotate("    X = lstsq(A, B)", s).label == "good"


def test_object_type_from_prompt():
    s = make_sample(
        dep="pandas.DataFrame.append", rep="pandas.concat",
        prompt="def f(rows, r):\n    df = pd.DataFrame(rows)", imports=("import pandas as pd",),
    )
    assert annotate("    df = df.append(r)", s).label == "bad"
    assert annotate("    df = pd.concat([df, r])", s).label == "good"


def test_first_mapped_call_decides_ties():
    s = make_sample()
    assert annotate("    X = torch.lstsq(torch.linalg.lstsq(A, B).solution, A)", s).label == "bad"
    assert annotate("    X = torch.linalg.lstsq(A, B); Y = torch.lstsq(B, A)", s).label == "good"


def test_other_deprecated_calls_reported():
    ms = mappings_from_json([
        {"library": "torch", "deprecated": "torch.lstsq", "replacements": ["torch.linalg.lstsq"]},
        {"library": "torch", "deprecated": "torch.symeig", "replacements": ["torch.linalg.eigh"]},
    ])
    v = annotate("    X = torch.linalg.lstsq(torch.symeig(A)[1], B)", make_sample(), ms)
    assert v.label == "good"
    assert v.other_deprecated == ("torch.symeig",)


@pytest.mark.parametrize(
    "line",
    [
        "    X = torch.lstsq(B,",              # truncated mid-call
        "    for r in torch.lstsq(B, A):",     # block opener
        "    else: torch.lstsq(B, A)",         # dangling clause
        "    return torch.lstsq(B, A)",        # return outside the wrapped snippet
        "    yield torch.lstsq(B, A)",
        "    await torch.lstsq(B, A)",
        "    elif torch.lstsq(B, A):",
        "    except torch.lstsq(B, A):",
    ],
)
def test_lenient_parsing(line):
    assert annotate(line, make_sample()).label == "bad"


def test_unparsable_is_irrelevant():
    v = annotate("    X = = torch.lstsq(", make_sample())
    assert v.label == "irrelevant" and v.unparsable


def test_broken_prompt_still_yields_imports():
    s = make_sample(prompt="def f(A, B):\n    A = [1, 2,\n    B = )", imports=("import torch as t",))
    assert annotate("    X = t.lstsq(B, A)", s).label == "bad"


def test_columns_index_into_completion():
    line = "    X, _ = torch.lstsq(B, A)"
    call = find_call(line, DEP, SampleContext.for_sample(make_sample()))
    assert line[call.column : call.end_column].startswith("torch.lstsq")


FUNC_TEMPLATE = """import torch
import torch as t
from torch import lstsq as ls
def f(A, B):
    A = A.float()
{line}
"""

callee = st.sampled_from(["torch.lstsq", "t.lstsq", "ls", "torch.linalg.lstsq", "t.linalg.lstsq", "np.lstsq", "foo"])
shape = st.sampled_from(["    X = {c}(A, B)", "    return {c}(A)", "    X, Y = g({c}(A), B)", "    {c}(A); h(B)"])


@settings(max_examples=80)
@given(callee, shape)
def test_parity_with_resolver(c, tmpl):
    # a completion line is annotated exactly as the resolver sees the same line in situ
    line = tmpl.format(c=c)
    sample = make_sample(imports=("import torch", "import torch as t", "from torch import lstsq as ls"))
    got = annotate(line, sample).label
    source = FUNC_TEMPLATE.format(line=line)
    fqns = [rc.fqn for rc in resolve_module_calls(parse_module(source)) if rc.line_number == 6]
    expected = "irrelevant"
    for f in fqns:
        if f == REP:
            expected = "good"
            break
        if f == DEP:
            expected = "bad"
            break
    assert got == expected
