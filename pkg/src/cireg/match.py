"""Application-to-resource compatibility matching.

Each application constraint names a resource block (its category), a dotted
key inside that block, and a predicate over the values found there.
Matching is existential across list-valued paths and strict about absence:
a field the resource does not describe satisfies nothing, exists included.
Constraints flagged ``preferred`` do not gate compatibility; the fraction
of them satisfied becomes the result's rank score.

Constraint keys are checked against the resource rule set before any
evaluation, so a typo fails fast with PathError instead of silently
matching nothing.
"""

from __future__ import annotations

import gc
import logging
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .docpath import resolve_segments
from .errors import PathError, RegistryError
from .model import ApplicationDescription, Constraint, ResourceDescription
from .schema import SpecCatalog, SpecDefinition
from .versions import compare_versions

log = logging.getLogger("cireg.match")

RESOURCE_KIND = "resource"


@dataclass(frozen=True, slots=True)
class ConstraintResult:
    """Verdict for one constraint against one resource."""

    constraint: Constraint
    satisfied: bool
    reason: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "constraint": self.constraint.to_doc(),
            "satisfied": self.satisfied,
            "reason": self.reason,
        }


@dataclass(frozen=True, slots=True)
class MatchResult:
    """Outcome of matching one application against one resource.

    ``compatible`` means every non-preferred constraint held; ``score`` is
    the fraction of preferred constraints that held, 1.0 when there are
    none.
    """

    resource_id: str
    compatible: bool
    score: float
    constraint_results: tuple[ConstraintResult, ...]

    def to_doc(self) -> dict[str, Any]:
        return {
            "resource_id": self.resource_id,
            "compatible": self.compatible,
            "score": self.score,
            "constraints": [r.to_doc() for r in self.constraint_results],
        }


def _resource_spec(spec: SpecDefinition | None) -> SpecDefinition:
    if spec is not None:
        return spec
    return SpecCatalog.bundled().latest(RESOURCE_KIND)


def check_constraint_key(constraint: Constraint, spec: SpecDefinition):
    """Raise PathError unless the key names a field the rule set defines."""
    if constraint.key not in spec.constraint_keys(constraint.category):
        raise PathError(constraint.category, constraint.key)


def _segments(constraint: Constraint) -> tuple[str, ...]:
    return (constraint.category, *constraint.key.split("."))


def evaluate_constraint(
    constraint: Constraint,
    resource: ResourceDescription | dict,
    spec: SpecDefinition | None = None,
) -> ConstraintResult:
    """Evaluate one constraint against one resource document."""
    spec = _resource_spec(spec)
    check_constraint_key(constraint, spec)
    doc = resource.to_doc() if isinstance(resource, ResourceDescription) else resource
    leaves = resolve_segments(doc, _segments(constraint))
    return _verdict(constraint, leaves, f"{constraint.category}.{constraint.key}")


def _verdict(constraint: Constraint, leaves: Sequence[Any], key: str) -> ConstraintResult:
    predicate = constraint.predicate
    if not leaves:
        return ConstraintResult(constraint, False, f"{key}: field absent")
    if predicate == "exists":
        return ConstraintResult(constraint, True, f"{key} is present")
    value = constraint.value
    if predicate == "equals":
        for leaf in leaves:
            found = _comparable(leaf)
            if _scalar_eq(found, value):
                return ConstraintResult(constraint, True, f"{key} = {found!r}")
        return ConstraintResult(
            constraint, False, f"{key} = {_shown(leaves)}, wanted {value!r}"
        )
    if predicate == "one_of":
        for leaf in leaves:
            found = _comparable(leaf)
            if any(_scalar_eq(found, v) for v in value):
                return ConstraintResult(constraint, True, f"{key} = {found!r}")
        return ConstraintResult(
            constraint, False, f"{key} = {_shown(leaves)}, wanted one of {list(value)!r}"
        )
    if predicate == "min_value":
        best = None
        for leaf in leaves:
            if isinstance(leaf, (int, float)) and not isinstance(leaf, bool):
                if leaf >= value:
                    return ConstraintResult(constraint, True, f"{key} = {leaf!r} >= {value!r}")
                if best is None or leaf > best:
                    best = leaf
        if best is None:
            return ConstraintResult(constraint, False, f"{key} has no numeric value")
        return ConstraintResult(constraint, False, f"{key} = {best!r} < {value!r}")
    return _min_version_verdict(constraint, key, leaves, value)


def _min_version_verdict(
    constraint: Constraint, key: str, leaves: Sequence[Any], value: str
) -> ConstraintResult:
    if any(isinstance(leaf, dict) for leaf in leaves):
        # Package-list target: "name:version" pins one package's version,
        # a bare name is never satisfied (it doesn't name a version).
        name, sep, floor = value.partition(":")
        if not sep or not floor:
            return ConstraintResult(
                constraint, False, f"{key} is a package list; min_version needs 'name:version'"
            )
        found = None
        for leaf in leaves:
            if not isinstance(leaf, dict) or leaf.get("name") != name:
                continue
            version = leaf.get("version")
            if not isinstance(version, str) or not version:
                found = found or "unversioned"
                continue
            if compare_versions(version, floor) >= 0:
                return ConstraintResult(constraint, True, f"{key}: {name} {version} >= {floor}")
            found = version
        if found is None:
            return ConstraintResult(constraint, False, f"{key}: no package named {name!r}")
        return ConstraintResult(constraint, False, f"{key}: {name} {found} < {floor}")
    found = None
    for leaf in leaves:
        if isinstance(leaf, str) and leaf:
            if compare_versions(leaf, value) >= 0:
                return ConstraintResult(constraint, True, f"{key} = {leaf!r} >= {value!r}")
            found = leaf
    if found is None:
        return ConstraintResult(constraint, False, f"{key} has no version value")
    return ConstraintResult(constraint, False, f"{key} = {found!r} < {value!r}")


def _comparable(leaf: Any) -> Any:
    # Package objects compare by name for equals/one_of.
    if isinstance(leaf, dict):
        return leaf.get("name")
    return leaf


def _scalar_eq(a: Any, b: Any) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    return type(a) is type(b) and a == b


def _shown(leaves: Sequence[Any], limit: int = 3) -> str:
    values = [_comparable(leaf) for leaf in leaves[:limit]]
    text = ", ".join(repr(v) for v in values)
    if len(leaves) > limit:
        text += ", ..."
    return text


# Per-constraint working set for the match loop: the constraint itself, its
# pre-split path, its preferred flag, its dotted key for reason strings, and
# a verdict cache. Resource field values repeat across a registry, so most
# verdicts are duplicates; sharing the frozen result objects keeps a large
# match from allocating one per resource. A verdict is a pure function of
# the resolved leaves, so single scalar leaves are cached by (type, value)
# without building the verdict at all ((type, value) rather than the bare
# value because True == 1 but they satisfy differently). Everything else is
# computed and then deduplicated by reason string, which within one
# constraint determines the verdict: satisfied and unsatisfied reasons use
# disjoint formats.
_Compiled = tuple[Constraint, tuple[str, ...], bool, str, dict]

_ABSENT = object()
_SCALAR_LEAVES = frozenset((str, int, float, bool))


def match_application(
    app: ApplicationDescription,
    resources: Iterable[Any],
    spec: SpecDefinition | None = None,
    *,
    required_only: bool = False,
) -> list[MatchResult]:
    """Match an application against a set of resources.

    ``resources`` yields registry entries (anything with ``id`` and
    ``document()``) or ResourceDescription objects. Entries whose payload
    fails to parse are skipped with a logged diagnostic rather than failing
    the whole match. With ``required_only`` the preferred constraints are
    not evaluated at all and every score is 1.0.

    Results are sorted compatible-first, then score descending, then
    resource id ascending.
    """
    spec = _resource_spec(spec)
    compiled: list[_Compiled] = []
    for index, constraint in enumerate(app.constraints()):
        try:
            check_constraint_key(constraint, spec)
        except PathError as exc:
            raise PathError(
                constraint.category,
                constraint.key,
                f"constraint {index}: {exc.message}",
            ) from None
        if required_only and constraint.preferred:
            continue
        dotted = f"{constraint.category}.{constraint.key}"
        segments = _segments(constraint)
        pair = segments if len(segments) == 2 else None
        compiled.append((constraint, segments, pair, constraint.preferred, dotted, {}))
    results: list[MatchResult] = []
    # A registry-sized match allocates hundreds of thousands of result
    # objects; every few thousand of them the cyclic collector would rescan
    # the long-lived document heap, multiplying runtime. The results are
    # acyclic, so collection is safely deferred until the loop is done.
    gc_was_enabled = gc.isenabled()
    if gc_was_enabled:
        gc.disable()
    try:
        for resource in resources:
            if isinstance(resource, ResourceDescription):
                resource_id, doc = resource.id, resource.to_doc()
            else:
                resource_id = resource.id
                try:
                    doc = resource.document()
                except (RegistryError, ValueError) as exc:
                    log.warning("skipping resource %s: unreadable payload: %s", resource_id, exc)
                    continue
            verdicts: list[ConstraintResult] = []
            required_ok = True
            preferred_total = 0
            preferred_ok = 0
            for constraint, segments, pair, preferred, dotted, cache in compiled:
                # Two plain dict hops cover most constraints; anything else
                # (lists, odd document shapes) falls back to the resolver.
                if pair is not None and type(doc) is dict:
                    node = doc.get(pair[0])
                    if type(node) is dict:
                        node = node.get(pair[1])
                        if node is None:
                            leaves = ()
                        elif type(node) is list:
                            leaves = [v for v in node if v is not None]
                        else:
                            leaves = (node,)
                    elif node is None:
                        leaves = ()
                    else:
                        leaves = resolve_segments(doc, segments)
                else:
                    leaves = resolve_segments(doc, segments)
                if not leaves:
                    key = _ABSENT
                elif len(leaves) == 1 and type(leaves[0]) in _SCALAR_LEAVES:
                    key = (type(leaves[0]), leaves[0])
                else:
                    key = None
                if key is not None:
                    verdict = cache.get(key)
                    if verdict is None:
                        verdict = cache[key] = _verdict(constraint, leaves, dotted)
                else:
                    verdict = _verdict(constraint, leaves, dotted)
                    verdict = cache.setdefault(verdict.reason, verdict)
                verdicts.append(verdict)
                if preferred:
                    preferred_total += 1
                    preferred_ok += verdict.satisfied
                elif not verdict.satisfied:
                    required_ok = False
            score = preferred_ok / preferred_total if preferred_total else 1.0
            results.append(MatchResult(resource_id, required_ok, score, tuple(verdicts)))
    finally:
        if gc_was_enabled:
            gc.enable()
    results.sort(key=lambda m: (not m.compatible, -m.score, m.resource_id))
    return results
