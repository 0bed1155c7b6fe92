import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cireg.errors import DocumentSyntaxError, InvariantError, StructureError
from cireg.model import (
    application_from_doc,
    canonical_json_bytes,
    canonical_serialize,
    compute_queue_problem,
    constraint_value_problem,
    decode_document,
    duplicate_index,
    identifier_problem,
    parse_application,
    parse_resource,
    resource_from_doc,
)
from cireg.schema import validate

from conftest import FIXTURE_KINDS, fixture_bytes, fixture_doc
from generators import application_doc, enumerate_mutations, resource_doc, shuffle_keys

PARSERS = {"resource": resource_from_doc, "application": application_from_doc}


# -- canonical encoding -------------------------------------------------------


def test_canonical_bytes_shape():
    raw = canonical_json_bytes({"b": 1, "a": [True, None, "é"], "c": {"y": 2, "x": 1.5}})
    assert raw == '{"a":[true,null,"é"],"b":1,"c":{"x":1.5,"y":2}}'.encode()
    assert b"\n" not in raw


def test_canonical_bytes_rejects_non_json():
    with pytest.raises(InvariantError):
        canonical_json_bytes({"x": float("nan")})
    with pytest.raises(InvariantError):
        canonical_json_bytes({"x": object()})


def test_decode_document_success():
    assert decode_document(b'{"a": 1}') == {"a": 1}
    assert decode_document('{"a": 1}') == {"a": 1}


def test_decode_document_syntax_error_location():
    with pytest.raises(DocumentSyntaxError) as exc:
        decode_document(b'{"a": 1,\n "b": }')
    assert exc.value.line == 2
    assert exc.value.column == 7


def test_decode_document_rejects_non_finite():
    with pytest.raises(DocumentSyntaxError):
        decode_document(b'{"a": NaN}')
    with pytest.raises(DocumentSyntaxError):
        decode_document(b'{"a": Infinity}')


def test_decode_document_rejects_bad_utf8():
    with pytest.raises(DocumentSyntaxError):
        decode_document(b'{"a": "\xff"}')


@given(
    st.recursive(
        st.none() | st.booleans() | st.integers() | st.text(max_size=8),
        lambda inner: st.lists(inner, max_size=4)
        | st.dictionaries(st.text(max_size=6), inner, max_size=4),
        max_leaves=20,
    )
)
def test_canonical_bytes_decode_round_trip(value):
    assert json.loads(canonical_json_bytes(value)) == value


# -- fixture round trips ------------------------------------------------------


@pytest.mark.parametrize("name", sorted(FIXTURE_KINDS))
def test_fixture_round_trip_identity(name):
    doc = fixture_doc(name)
    parsed = PARSERS[FIXTURE_KINDS[name]](doc)
    assert parsed.to_doc() == doc
    assert canonical_serialize(parsed) == canonical_json_bytes(doc)


@pytest.mark.parametrize("name", sorted(FIXTURE_KINDS))
def test_fixture_bytes_parse(name):
    parse = parse_resource if FIXTURE_KINDS[name] == "resource" else parse_application
    parsed = parse(fixture_bytes(name))
    assert parsed.id == fixture_doc(name)["id"]


def test_key_order_does_not_affect_canonical_bytes():
    rng = random.Random(4)
    for name, kind in FIXTURE_KINDS.items():
        doc = fixture_doc(name)
        shuffled = shuffle_keys(doc, rng)
        assert list(shuffled) != list(doc) or len(doc) < 2
        a = canonical_serialize(PARSERS[kind](doc))
        b = canonical_serialize(PARSERS[kind](shuffled))
        assert a == b


# -- strict vs lenient --------------------------------------------------------


def test_strict_rejects_unknown_root_key():
    doc = fixture_doc("jetstream")
    doc["vendor_notes"] = "ignore me"
    with pytest.raises(StructureError, match="vendor_notes"):
        resource_from_doc(doc)


def test_strict_rejects_unknown_nested_key():
    doc = fixture_doc("jetstream")
    doc["hardware"]["gpu_count"] = 4
    with pytest.raises(StructureError, match="hardware.gpu_count"):
        resource_from_doc(doc)


def test_lenient_preserves_unknown_keys():
    doc = fixture_doc("jetstream")
    doc["vendor_notes"] = {"rack": "b12"}
    parsed = resource_from_doc(doc, lenient=True)
    assert parsed.extensions == {"vendor_notes": {"rack": "b12"}}
    assert parsed.to_doc() == doc


def test_lenient_still_rejects_bad_values():
    doc = fixture_doc("jetstream")
    doc["hardware"]["cores_per_node"] = "many"
    with pytest.raises(StructureError):
        resource_from_doc(doc, lenient=True)


# -- structural invariants ----------------------------------------------------


def test_fork_scheduler_rejects_queues():
    doc = fixture_doc("jetstream")
    doc["scheduler"]["queues"] = [{"name": "batch", "default": True}]
    with pytest.raises(StructureError, match="fork"):
        resource_from_doc(doc)


def test_batch_scheduler_requires_queues_on_compute():
    doc = fixture_doc("frontera")
    doc["scheduler"]["queues"] = []
    with pytest.raises(StructureError, match="queue"):
        resource_from_doc(doc)


def test_duplicate_queue_names_rejected():
    doc = fixture_doc("frontera")
    doc["scheduler"]["queues"].append(dict(doc["scheduler"]["queues"][0]))
    with pytest.raises(StructureError, match="name"):
        resource_from_doc(doc)


def test_second_default_queue_rejected():
    doc = fixture_doc("frontera")
    for queue in doc["scheduler"]["queues"]:
        queue["default"] = True
    with pytest.raises(StructureError, match="default"):
        resource_from_doc(doc)


def test_bad_identifier_rejected():
    doc = fixture_doc("jetstream")
    doc["id"] = "Has Spaces"
    with pytest.raises(StructureError, match="id"):
        resource_from_doc(doc)


def test_constraint_value_coherence():
    doc = fixture_doc("fastqc")
    doc["architecture_hardware"][0]["predicate"] = "one_of"
    # equals -> one_of without turning the value into a list
    with pytest.raises(StructureError, match="value"):
        application_from_doc(doc)


def test_exists_constraint_takes_no_value():
    doc = fixture_doc("jupyter-lab")
    for constraint in doc["architecture_hardware"]:
        if constraint["predicate"] == "exists":
            constraint["value"] = "yes"
    with pytest.raises(StructureError, match="value"):
        application_from_doc(doc)


# -- invariant helper functions ----------------------------------------------


def test_identifier_problem():
    assert identifier_problem("frontera.tacc.utexas.edu") is None
    assert identifier_problem("a") is None
    assert identifier_problem("") is not None
    assert identifier_problem("UPPER") is not None
    assert identifier_problem("-leading") is not None
    assert identifier_problem("trailing-") is not None
    assert identifier_problem("a" * 300) is not None
    assert identifier_problem(42) is not None


def test_duplicate_index():
    assert duplicate_index((1, 2, 3), lambda x: x) is None
    assert duplicate_index((1, 2, 1), lambda x: x) == 2
    assert duplicate_index((), lambda x: x) is None


def test_constraint_value_problem_matrix():
    assert constraint_value_problem("equals", "x86_64", True) is None
    assert constraint_value_problem("equals", ["a"], True) is not None
    assert constraint_value_problem("equals", None, False) is not None
    assert constraint_value_problem("one_of", ["a", "b"], True) is None
    assert constraint_value_problem("one_of", [], True) is not None
    assert constraint_value_problem("one_of", "a", True) is not None
    assert constraint_value_problem("min_version", "1.2", True) is None
    assert constraint_value_problem("min_version", 7, True) is not None
    assert constraint_value_problem("min_value", 16, True) is None
    assert constraint_value_problem("min_value", True, True) is not None
    assert constraint_value_problem("min_value", "lots", True) is not None
    assert constraint_value_problem("exists", None, False) is None
    assert constraint_value_problem("exists", True, True) is not None


def test_compute_queue_problem_matrix():
    assert compute_queue_problem("compute", "slurm", ()) is not None
    assert compute_queue_problem("compute", "slurm", None) is not None
    assert compute_queue_problem("compute", "slurm", ({"name": "q"},)) is None
    assert compute_queue_problem("compute", "fork", None) is None
    assert compute_queue_problem("storage", "slurm", None) is None
    assert compute_queue_problem("compute", None, None) is None


# -- parser / validator parity ------------------------------------------------


def _parses(kind, doc):
    try:
        PARSERS[kind](doc)
        return True
    except (StructureError, InvariantError):
        return False


def test_parser_accepts_what_validator_accepts(catalog):
    rng = random.Random(11)
    for i in range(150):
        kind = "resource" if i % 2 else "application"
        doc = resource_doc(rng, i) if kind == "resource" else application_doc(rng, i)
        assert validate(doc, catalog.latest(kind)).valid
        assert _parses(kind, doc)


def test_parser_rejects_what_validator_rejects(catalog):
    rng = random.Random(12)
    checked = 0
    for name, kind in FIXTURE_KINDS.items():
        spec = catalog.latest(kind)
        mutants = list(enumerate_mutations(fixture_doc(name), spec))
        for mutation in rng.sample(mutants, min(25, len(mutants))):
            assert not validate(mutation.doc, spec).valid
            assert not _parses(kind, mutation.doc), (name, mutation.site, mutation.note)
            checked += 1
    assert checked >= 200
