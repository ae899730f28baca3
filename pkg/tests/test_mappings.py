import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from depfix.errors import MappingLoadError, MappingValidationError
from depfix.mappings import Fqn, dump_mappings, find_by_deprecated, load_mappings, mappings_from_json

# per-library mapping counts reported for the eight studied libraries
LIBRARY_COUNTS = {
    "numpy": 3, "pandas": 10, "sklearn": 18, "scipy": 4,
    "seaborn": 3, "tensorflow": 57, "torch": 21, "transformers": 29,
}


def write(tmp_path, doc, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc, encoding="utf-8")
    return p


def test_fqn_parse_and_render():
    f = Fqn.parse("torch.linalg.lstsq")
    assert f.segments == ("torch", "linalg", "lstsq")
    assert str(f) == "torch.linalg.lstsq"
    assert f.startswith(Fqn.parse("torch"))
    assert not Fqn.parse("torchvision.ops").startswith(Fqn.parse("torch"))


@pytest.mark.parametrize("bad", ["", "torch..lstsq", "1torch.x", "torch.lst-sq", "torch. x"])
def test_fqn_rejects_invalid_identifiers(bad):
    with pytest.raises(ValueError):
        Fqn.parse(bad)


def test_torch_lstsq_mapping(tmp_path):
    p = write(tmp_path, [{"library": "torch", "deprecated": "torch.lstsq", "replacements": ["torch.linalg.lstsq"], "version": "1.9.0"}])
    ms = load_mappings(p)
    assert len(ms) == 1
    m = ms[0]
    assert (str(m.deprecated), str(m.replacement), m.deprecated_in_version) == ("torch.lstsq", "torch.linalg.lstsq", "1.9.0")


def test_one_to_many_split_keeps_order(tmp_path):
    ms = load_mappings(write(tmp_path, [{"library": "x", "deprecated": "x.a", "replacements": ["x.b", "x.c"]}]))
    assert [(str(m.deprecated), str(m.replacement)) for m in ms] == [("x.a", "x.b"), ("x.a", "x.c")]
    assert str(find_by_deprecated(ms, Fqn.parse("x.a")).replacement) == "x.b"


def test_eight_libraries_145_mappings(tmp_path):
    doc = []
    for lib, n in LIBRARY_COUNTS.items():
        # split each library's count over one-to-one and one-to-two entries
        i = 0
        while i < n:
            k = 2 if n - i >= 2 and i % 3 == 0 else 1
            doc.append({"library": lib, "deprecated": f"{lib}.old_{i}", "replacements": [f"{lib}.new_{i}_{j}" for j in range(k)]})
            i += k
    ms = load_mappings(write(tmp_path, doc))
    assert len(ms) == 145
    assert len(ms) == sum(len(e["replacements"]) for e in doc)
    assert ms.libraries() == list(LIBRARY_COUNTS)


def test_lookups(tmp_path):
    ms = load_mappings(write(tmp_path, [
        {"library": "torch", "deprecated": "torch.lstsq", "replacements": ["torch.linalg.lstsq"]},
        {"library": "x", "deprecated": "x.a", "replacements": ["x.b", "x.c"]},
    ]))
    assert find_by_deprecated(ms, Fqn.parse("torch.lstsq")).library == "torch"
    assert find_by_deprecated(ms, Fqn.parse("torch.linalg.lstsq")) is None
    assert ms.find_by_replacement(Fqn.parse("x.c")).deprecated == Fqn.parse("x.a")
    assert ms.side_of(Fqn.parse("torch.linalg.lstsq"))[1] == "up-to-dated"
    assert ms.side_of(Fqn.parse("numpy.sum")) is None


def test_malformed_json_reports_position(tmp_path):
    with pytest.raises(MappingLoadError, match=r":2:"):
        load_mappings(write(tmp_path, '[\n  {"library": }\n]'))


@pytest.mark.parametrize(
    "entry, match",
    [
        ({"library": "x", "deprecated": "x.a", "replacements": []}, "non-empty"),
        ({"library": "x", "deprecated": "x.1a", "replacements": ["x.b"]}, "entry 0"),
        ({"library": "x", "deprecated": "x.a", "replacements": ["x.b-c"]}, "replacement"),
        ({"library": "x", "deprecated": "x.a", "replacements": ["x.a"]}, "itself"),
        ({"library": "", "deprecated": "x.a", "replacements": ["x.b"]}, "library"),
    ],
)
def test_validation_errors(tmp_path, entry, match):
    with pytest.raises(MappingValidationError, match=match):
        load_mappings(write(tmp_path, [entry]))


def test_duplicate_pairs_rejected():
    doc = [
        {"library": "x", "deprecated": "x.a", "replacements": ["x.b"]},
        {"library": "x", "deprecated": "x.a", "replacements": ["x.b"]},
    ]
    with pytest.raises(MappingValidationError, match="duplicate"):
        mappings_from_json(doc)


def test_root_mismatch_only_warns(caplog):
    ms = mappings_from_json([{"library": "sklearn", "deprecated": "joblib.load", "replacements": ["joblib.dump"]}])
    assert len(ms) == 1
    assert "is rooted in library" in caplog.text


ident = st.from_regex(r"[a-z_][a-z0-9_]{0,6}", fullmatch=True)
fqn = st.lists(ident, min_size=1, max_size=4).map(".".join)


@given(st.lists(st.tuples(fqn, st.lists(fqn, min_size=1, max_size=3, unique=True)), max_size=8))
def test_round_trip_and_size(tmp_path_factory, entries):
    doc = [
        {"library": dep.split(".")[0], "deprecated": dep, "replacements": [r for r in reps if r != dep]}
        for dep, reps in entries
    ]
    doc = [d for d in doc if d["replacements"]]
    seen, uniq = set(), []
    for d in doc:
        pairs = {(d["deprecated"], r) for r in d["replacements"]}
        if pairs & seen:
            continue
        seen |= pairs
        uniq.append(d)
    ms = mappings_from_json(uniq)
    assert len(ms) == sum(len(d["replacements"]) for d in uniq)
    assert all(m.deprecated != m.replacement for m in ms)
    path = tmp_path_factory.mktemp("rt") / "m.json"
    dump_mappings(ms, path)
    again = load_mappings(path)
    assert again.mappings == ms.mappings
