import json
import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cireg.errors import PathError
from cireg.match import check_constraint_key, evaluate_constraint, match_application
from cireg.model import Constraint, application_from_doc, resource_from_doc

from conftest import fixture_doc
from generators import application_doc, resource_doc
from oracles import constraint_holds_reference, match_reference


@pytest.fixture(scope="module")
def frontera():
    return resource_from_doc(fixture_doc("frontera"))


@pytest.fixture(scope="module")
def stockyard():
    return resource_from_doc(fixture_doc("stockyard"))


def holds(resource, **kwargs):
    return evaluate_constraint(Constraint(**kwargs), resource).satisfied


# -- predicate semantics ------------------------------------------------------


def test_equals_scalar(frontera):
    assert holds(frontera, category="scheduler", key="scheduler_type",
                 predicate="equals", value="slurm")
    assert not holds(frontera, category="scheduler", key="scheduler_type",
                     predicate="equals", value="sge")


def test_equals_on_package_list_matches_name(frontera):
    assert holds(frontera, category="software", key="packages",
                 predicate="equals", value="cuda")
    assert not holds(frontera, category="software", key="packages",
                     predicate="equals", value="spark")


def test_one_of(frontera):
    assert holds(frontera, category="hardware", key="cpu_architecture",
                 predicate="one_of", value=["x86_64", "aarch64"])
    assert not holds(frontera, category="hardware", key="cpu_architecture",
                     predicate="one_of", value=["ppc64le", "riscv64"])
    assert holds(frontera, category="software", key="packages",
                 predicate="one_of", value=["spark", "cuda"])


def test_min_value_numeric_and_existential_over_lists(frontera):
    assert holds(frontera, category="hardware", key="cores_per_node",
                 predicate="min_value", value=56)
    assert not holds(frontera, category="hardware", key="cores_per_node",
                     predicate="min_value", value=57)
    # satisfied when any queue clears the bound
    assert holds(frontera, category="scheduler", key="queues.max_nodes",
                 predicate="min_value", value=500)
    assert not holds(frontera, category="scheduler", key="queues.max_nodes",
                     predicate="min_value", value=100000)


def test_min_version_on_string_leaf(frontera):
    assert holds(frontera, category="operating_system", key="kernel_version",
                 predicate="min_version", value="3.10")
    assert not holds(frontera, category="operating_system", key="kernel_version",
                     predicate="min_version", value="5.0")


def test_min_version_on_package_list(frontera):
    base = dict(category="software", key="packages", predicate="min_version")
    assert holds(frontera, **base, value="cuda:11.0")
    assert not holds(frontera, **base, value="cuda:99")
    assert not holds(frontera, **base, value="absent-package:1.0")
    # a package without a version never satisfies a version floor
    result = evaluate_constraint(
        Constraint(**base, value="openmp:1.0"), frontera
    )
    assert not result.satisfied
    assert "unversioned" in result.reason


def test_min_version_bare_value_against_package_list(frontera):
    # wrong shape is an unsatisfied verdict with an explanatory reason,
    # not an exception
    result = evaluate_constraint(
        Constraint(category="software", key="packages",
                   predicate="min_version", value="11.0"),
        frontera,
    )
    assert not result.satisfied
    assert "name:version" in result.reason


def test_exists(frontera, stockyard):
    probe = dict(category="hardware", key="accelerators", predicate="exists")
    assert holds(frontera, **probe)
    assert not holds(stockyard, **probe)


def test_absence_never_satisfies(stockyard):
    result = evaluate_constraint(
        Constraint(category="scheduler", key="scheduler_type",
                   predicate="equals", value="slurm"),
        stockyard,
    )
    assert not result.satisfied
    assert result.reason == "scheduler.scheduler_type: field absent"


def test_accepts_plain_dict_resource():
    doc = fixture_doc("frontera")
    constraint = Constraint(category="scheduler", key="scheduler_type",
                            predicate="equals", value="slurm")
    assert evaluate_constraint(constraint, doc).satisfied


def test_result_doc_shape(frontera):
    constraint = Constraint(category="hardware", key="cores_per_node",
                            predicate="min_value", value=8, preferred=True)
    doc = evaluate_constraint(constraint, frontera).to_doc()
    assert doc == {
        "constraint": {"category": "hardware", "key": "cores_per_node",
                       "predicate": "min_value", "value": 8, "preferred": True},
        "satisfied": True,
        "reason": "hardware.cores_per_node = 56 >= 8",
    }


# -- key checking -------------------------------------------------------------


def test_unknown_key_raises_path_error(frontera, resource_spec):
    constraint = Constraint(category="hardware", key="gpu_count", predicate="exists")
    with pytest.raises(PathError) as exc:
        check_constraint_key(constraint, resource_spec)
    assert exc.value.details() == {"category": "hardware", "key": "gpu_count"}
    with pytest.raises(PathError):
        evaluate_constraint(constraint, frontera)


def test_known_keys_pass(resource_spec):
    for category, key in [
        ("hardware", "cpu_architecture"),
        ("hardware", "accelerators.model"),
        ("scheduler", "queues.max_wallclock_minutes"),
        ("software", "packages"),
        ("software", "packages.version"),
        ("operating_system", "distribution_version"),
        ("high_level", "resource_type"),
    ]:
        check_constraint_key(
            Constraint(category=category, key=key, predicate="exists"), resource_spec
        )


def test_match_reports_offending_constraint_index():
    doc = fixture_doc("bwa-mem")
    doc["architecture_hardware"] = [
        {"category": "hardware", "key": "cpu_architecture", "predicate": "exists"},
        {"category": "hardware", "key": "made_up", "predicate": "exists"},
    ]
    app = application_from_doc(doc, lenient=True)
    with pytest.raises(PathError, match="constraint 1"):
        match_application(app, [])


# -- whole-application matching -----------------------------------------------


def make_population(seed, count):
    rng = random.Random(seed)
    docs = [resource_doc(rng, i) for i in range(count)]
    return docs, [resource_from_doc(d) for d in docs]


def test_ordering_compatible_then_score_then_id(frontera, stockyard):
    doc = fixture_doc("bwa-mem")
    app = application_from_doc(doc)
    jetstream = resource_from_doc(fixture_doc("jetstream"))
    results = match_application(app, [stockyard, frontera, jetstream])
    assert [r.resource_id for r in results] == sorted(
        (r.resource_id for r in results),
        key=lambda rid: (
            not next(x.compatible for x in results if x.resource_id == rid),
            -next(x.score for x in results if x.resource_id == rid),
            rid,
        ),
    )
    # compatible resources come first
    flags = [r.compatible for r in results]
    assert flags == sorted(flags, reverse=True)


def test_score_is_fraction_of_preferred(frontera):
    doc = fixture_doc("bwa-mem")
    del doc["software_dependencies"]
    doc["architecture_hardware"] = [
        {"category": "hardware", "key": "cores_per_node",
         "predicate": "min_value", "value": 1, "preferred": True},
        {"category": "hardware", "key": "cores_per_node",
         "predicate": "min_value", "value": 10**6, "preferred": True},
        {"category": "hardware", "key": "accelerators", "predicate": "exists",
         "preferred": True},
        {"category": "hardware", "key": "cpu_architecture",
         "predicate": "equals", "value": "x86_64"},
    ]
    app = application_from_doc(doc)
    result = match_application(app, [frontera])[0]
    assert result.compatible
    assert result.score == pytest.approx(2 / 3)


def test_no_preferred_scores_one(frontera):
    app = application_from_doc(fixture_doc("bwa-mem"))
    assert all(c.get("preferred") is not True
               for c in fixture_doc("bwa-mem")["software_dependencies"])
    result = match_application(app, [frontera])[0]
    assert result.score == 1.0


def test_required_only_skips_preferred(frontera):
    doc = fixture_doc("bwa-mem")
    doc["architecture_hardware"] = [
        {"category": "hardware", "key": "accelerators", "predicate": "exists",
         "preferred": True},
    ]
    app = application_from_doc(doc)
    full = match_application(app, [frontera])[0]
    trimmed = match_application(app, [frontera], required_only=True)[0]
    assert len(full.constraint_results) == len(trimmed.constraint_results) + 1
    assert trimmed.score == 1.0
    assert {c.constraint.preferred for c in trimmed.constraint_results} == {False}


def test_incompatible_when_any_required_fails(stockyard):
    app = application_from_doc(fixture_doc("fastqc"))
    result = match_application(app, [stockyard])[0]
    assert not result.compatible
    failed = [c for c in result.constraint_results
              if not c.satisfied and not c.constraint.preferred]
    assert failed


def test_unreadable_resource_skipped_with_warning(frontera, caplog):
    class Broken:
        id = "broken.example.org"

        def document(self):
            raise ValueError("payload is not valid JSON")

    app = application_from_doc(fixture_doc("bwa-mem"))
    with caplog.at_level(logging.WARNING, logger="cireg.match"):
        results = match_application(app, [Broken(), frontera])
    assert [r.resource_id for r in results] == [frontera.id]
    assert any("broken.example.org" in rec.message for rec in caplog.records)


def test_matches_reference_implementation():
    docs, parsed = make_population(77, 80)
    rng = random.Random(78)
    for i in range(30):
        app_doc = application_doc(rng, i)
        app = application_from_doc(app_doc)
        for required_only in (False, True):
            got = [
                (m.resource_id, m.compatible, m.score)
                for m in match_application(app, parsed, required_only=required_only)
            ]
            want = match_reference(
                app_doc, [(d["id"], d) for d in docs], required_only=required_only
            )
            assert got == want, (i, required_only)


def test_verdicts_match_reference_per_constraint():
    docs, parsed = make_population(79, 40)
    rng = random.Random(80)
    for i in range(20):
        app_doc = application_doc(rng, i)
        app = application_from_doc(app_doc)
        for doc, resource in zip(docs, parsed):
            for result in match_application(app, [resource])[0].constraint_results:
                raw = result.constraint.to_doc()
                assert result.satisfied == constraint_holds_reference(raw, doc), raw


def test_removing_constraints_never_shrinks_compatible_set():
    docs, parsed = make_population(81, 60)
    rng = random.Random(82)
    for i in range(25):
        app_doc = application_doc(rng, i)
        blocks = [
            (block, idx)
            for block in ("architecture_hardware", "software_dependencies")
            for idx in range(len(app_doc.get(block) or []))
        ]
        if not blocks:
            continue
        block, idx = rng.choice(blocks)
        relaxed = json.loads(json.dumps(app_doc))
        del relaxed[block][idx]
        if not relaxed[block]:
            del relaxed[block]

        def compatible_ids(doc):
            app = application_from_doc(doc)
            return {m.resource_id for m in match_application(app, parsed) if m.compatible}

        assert compatible_ids(app_doc) <= compatible_ids(relaxed)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10**7), st.integers(min_value=1, max_value=6))
def test_property_scores_bounded_and_sorted(seed, napps):
    rng = random.Random(seed)
    parsed = [resource_from_doc(resource_doc(rng, i)) for i in range(8)]
    for i in range(napps):
        app = application_from_doc(application_doc(rng, i))
        results = match_application(app, parsed)
        assert len(results) == len(parsed)
        keys = [(not r.compatible, -r.score, r.resource_id) for r in results]
        assert keys == sorted(keys)
        for r in results:
            assert 0.0 <= r.score <= 1.0
