"""Versioned validation rule sets and the collect-all document validator.

A rule set (one per entry kind, named like ``resource-spec-1.0.0.json``) is
itself a canonical JSON document: a list of per-field-path rules covering
type, requiredness, enum domain, numeric bounds, string pattern and
uniqueness scope, plus a list of named cross-field checks. Validation walks
a raw parsed document against the rules and collects every violation rather
than stopping at the first, so a registry rejection tells the submitter
everything that is wrong in one round trip.

Error codes are fixed: missing, wrong_type, out_of_domain, out_of_bounds,
pattern_mismatch, duplicate, unknown_key, cross_field. Every issue carries a
document path ("$" for whole-document problems) and reports are path-sorted
so identical input yields byte-identical reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .errors import FormatError, NotFound, SpecError
from .model import (
    canonical_json_bytes,
    constraint_value_problem,
    decode_document,
    CONSTRAINT_PREDICATES,
    ENTRY_KINDS,
    SCHEDULER_TYPES,
)

ERROR_CODES = (
    "missing",
    "wrong_type",
    "out_of_domain",
    "out_of_bounds",
    "pattern_mismatch",
    "duplicate",
    "unknown_key",
    "cross_field",
)

_RULE_PATH_RE = re.compile(r"[a-z0-9_]+(\[\])?(\.[a-z0-9_]+(\[\])?)*\Z")
_RULE_TYPES = ("string", "integer", "number", "boolean", "object", "array")
_RULE_KEYS = (
    "path",
    "type",
    "required",
    "enum",
    "minimum",
    "maximum",
    "pattern",
    "min_length",
    "max_length",
    "unique_by",
    "deprecated",
)
_VERSION_RE = re.compile(r"(\d+)\.(\d+)\.(\d+)\Z")


@dataclass(frozen=True, order=True, slots=True)
class SpecVersion:
    """A MAJOR.MINOR.PATCH rule-set version with total ordering."""

    major: int
    minor: int
    patch: int

    @classmethod
    def parse(cls, text: str) -> "SpecVersion":
        match = _VERSION_RE.match(text) if isinstance(text, str) else None
        if match is None:
            raise FormatError(f"not a MAJOR.MINOR.PATCH version: {text!r}")
        return cls(int(match.group(1)), int(match.group(2)), int(match.group(3)))

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


@dataclass(frozen=True, slots=True)
class Rule:
    """Declarative checks applied to one field path."""

    path: str
    type: str | None = None
    required: bool = False
    enum: tuple[Any, ...] | None = None
    minimum: int | float | None = None
    maximum: int | float | None = None
    pattern: str | None = None
    min_length: int | None = None
    max_length: int | None = None
    unique_by: tuple[str, ...] | None = None
    deprecated: bool = False

    def summary(self) -> str:
        parts = [self.type or "any"]
        if self.required:
            parts.append("required")
        if self.enum is not None:
            parts.append("enum[" + "|".join(str(v) for v in self.enum) + "]")
        if self.minimum is not None:
            parts.append(f">={self.minimum}")
        if self.maximum is not None:
            parts.append(f"<={self.maximum}")
        if self.min_length is not None:
            parts.append(f"len>={self.min_length}")
        if self.max_length is not None:
            parts.append(f"len<={self.max_length}")
        if self.pattern is not None:
            parts.append("pattern")
        if self.unique_by is not None:
            parts.append("unique(" + ",".join(self.unique_by) + ")")
        if self.deprecated:
            parts.append("deprecated")
        return " ".join(parts)


@dataclass(frozen=True, slots=True)
class ValidationIssue:
    path: str
    code: str
    message: str

    def to_doc(self) -> dict[str, str]:
        return {"path": self.path, "code": self.code, "message": self.message}


@dataclass(frozen=True, slots=True)
class ValidationReport:
    """Outcome of validating one document against one rule set."""

    spec_version: SpecVersion
    kind: str
    errors: tuple[ValidationIssue, ...]
    warnings: tuple[ValidationIssue, ...]

    @property
    def valid(self) -> bool:
        return not self.errors

    def to_doc(self) -> dict[str, Any]:
        return {
            "valid": self.valid,
            "kind": self.kind,
            "spec_version": str(self.spec_version),
            "errors": [issue.to_doc() for issue in self.errors],
            "warnings": [issue.to_doc() for issue in self.warnings],
        }


def _parent_path(path: str) -> str:
    if path.endswith("[]"):
        return path[:-2]
    head, _, _ = path.rpartition(".")
    return head


@dataclass(frozen=True)
class SpecDefinition:
    """A loaded, indexed rule set for one entry kind."""

    kind: str
    version: SpecVersion
    rules: tuple[Rule, ...]
    cross_checks: tuple[str, ...] = ()

    def __post_init__(self):
        by_path: dict[str, Rule] = {}
        children: dict[str, list[str]] = {"": []}
        required_children: dict[str, list[str]] = {"": []}
        patterns: dict[str, re.Pattern] = {}
        for rule in self.rules:
            by_path[rule.path] = rule
            if rule.pattern is not None:
                patterns[rule.path] = re.compile(rule.pattern)
            if not rule.path.endswith("[]"):
                parent = _parent_path(rule.path)
                segment = rule.path.rsplit(".", 1)[-1]
                children.setdefault(parent, []).append(segment)
                if rule.required:
                    required_children.setdefault(parent, []).append(segment)
        keysets: dict[str, frozenset[str]] = {}
        for rule in self.rules:
            first, _, rest = rule.path.partition(".")
            if rest and not first.endswith("[]"):
                keysets.setdefault(first, set()).add(rest.replace("[]", ""))
        object.__setattr__(self, "_by_path", by_path)
        object.__setattr__(self, "_children", {k: frozenset(v) for k, v in children.items()})
        object.__setattr__(self, "_required_children", required_children)
        object.__setattr__(self, "_patterns", patterns)
        object.__setattr__(
            self, "_keysets", {k: frozenset(v) for k, v in keysets.items()}
        )

    def rule(self, path: str) -> Rule | None:
        return self._by_path.get(path)

    def children(self, path: str) -> frozenset[str]:
        return self._children.get(path, frozenset())

    def required_children(self, path: str) -> list[str]:
        return self._required_children.get(path, [])

    def compiled_pattern(self, path: str) -> re.Pattern | None:
        return self._patterns.get(path)

    def constraint_keys(self, block: str) -> frozenset[str]:
        """Dotted keys a constraint may target under a top-level block."""
        return self._keysets.get(block, frozenset())

    def to_doc(self) -> dict[str, Any]:
        rules = []
        for r in self.rules:
            doc: dict[str, Any] = {"path": r.path}
            if r.type is not None:
                doc["type"] = r.type
            if r.required:
                doc["required"] = True
            if r.enum is not None:
                doc["enum"] = list(r.enum)
            if r.minimum is not None:
                doc["minimum"] = r.minimum
            if r.maximum is not None:
                doc["maximum"] = r.maximum
            if r.pattern is not None:
                doc["pattern"] = r.pattern
            if r.min_length is not None:
                doc["min_length"] = r.min_length
            if r.max_length is not None:
                doc["max_length"] = r.max_length
            if r.unique_by is not None:
                doc["unique_by"] = list(r.unique_by)
            if r.deprecated:
                doc["deprecated"] = True
            rules.append(doc)
        return {
            "kind": self.kind,
            "version": str(self.version),
            "cross_checks": list(self.cross_checks),
            "rules": rules,
        }


def _load_rule(raw: Any, index: int) -> Rule:
    if not isinstance(raw, dict):
        raise SpecError("rule must be an object", index)
    path = raw.get("path")
    if not isinstance(path, str) or _RULE_PATH_RE.match(path) is None:
        raise SpecError(f"malformed path {path!r}", index, str(path))
    for key in raw:
        if key not in _RULE_KEYS:
            raise SpecError(f"unknown rule key {key!r}", index, path)
    rule_type = raw.get("type")
    if rule_type is not None and rule_type not in _RULE_TYPES:
        raise SpecError(f"unknown type {rule_type!r}", index, path)
    required = raw.get("required", False)
    deprecated = raw.get("deprecated", False)
    if not isinstance(required, bool) or not isinstance(deprecated, bool):
        raise SpecError("required/deprecated must be booleans", index, path)
    enum = raw.get("enum")
    if enum is not None:
        if rule_type not in ("string", "integer", "number"):
            raise SpecError("enum applies to scalar rules only", index, path)
        if not isinstance(enum, list) or not enum:
            raise SpecError("enum must be a non-empty list", index, path)
        enum = tuple(enum)
    for bound in ("minimum", "maximum"):
        value = raw.get(bound)
        if value is not None:
            if rule_type not in ("integer", "number"):
                raise SpecError(f"{bound} applies to numeric rules only", index, path)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SpecError(f"{bound} must be a number", index, path)
    for bound in ("min_length", "max_length"):
        value = raw.get(bound)
        if value is not None:
            if rule_type != "string":
                raise SpecError(f"{bound} applies to string rules only", index, path)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise SpecError(f"{bound} must be a non-negative integer", index, path)
    pattern = raw.get("pattern")
    if pattern is not None:
        if rule_type != "string":
            raise SpecError("pattern applies to string rules only", index, path)
        try:
            re.compile(pattern)
        except re.error as exc:
            raise SpecError(f"bad pattern: {exc}", index, path) from exc
    unique_by = raw.get("unique_by")
    if unique_by is not None:
        if rule_type != "array":
            raise SpecError("unique_by applies to array rules only", index, path)
        if (
            not isinstance(unique_by, list)
            or not unique_by
            or not all(isinstance(v, str) and v for v in unique_by)
        ):
            raise SpecError("unique_by must be a non-empty list of field names", index, path)
        unique_by = tuple(unique_by)
    return Rule(
        path=path,
        type=rule_type,
        required=required,
        enum=enum,
        minimum=raw.get("minimum"),
        maximum=raw.get("maximum"),
        pattern=pattern,
        min_length=raw.get("min_length"),
        max_length=raw.get("max_length"),
        unique_by=unique_by,
        deprecated=deprecated,
    )


def load_spec(spec_document: bytes | str) -> SpecDefinition:
    """Parse and index a rule-set document, rejecting malformed rule sets."""
    raw = decode_document(spec_document)
    if not isinstance(raw, dict):
        raise SpecError("rule set must be an object")
    for key in raw:
        if key not in ("kind", "version", "rules", "cross_checks"):
            raise SpecError(f"unknown key {key!r}")
    kind = raw.get("kind")
    if kind not in ENTRY_KINDS:
        raise SpecError(f"kind must be one of {', '.join(ENTRY_KINDS)}")
    try:
        version = SpecVersion.parse(raw.get("version"))
    except FormatError as exc:
        raise SpecError(str(exc)) from exc
    raw_rules = raw.get("rules")
    if not isinstance(raw_rules, list) or not raw_rules:
        raise SpecError("rules must be a non-empty list")
    rules = []
    seen_paths: set[str] = set()
    for index, raw_rule in enumerate(raw_rules):
        rule = _load_rule(raw_rule, index)
        if rule.path in seen_paths:
            raise SpecError("duplicate path", index, rule.path)
        seen_paths.add(rule.path)
        rules.append(rule)
    by_path = {rule.path: rule for rule in rules}
    for index, rule in enumerate(rules):
        parent = _parent_path(rule.path)
        if not parent:
            continue
        parent_rule = by_path.get(parent)
        if parent_rule is None:
            raise SpecError(f"parent rule {parent!r} is missing", index, rule.path)
        if rule.path.endswith("[]") and parent_rule.type != "array":
            raise SpecError("element rules require an array parent", index, rule.path)
        if not rule.path.endswith("[]") and parent_rule.type not in ("object", "array"):
            # a dotted child hangs off an object rule or an element rule
            raise SpecError("field rules require an object parent", index, rule.path)
    cross_checks = raw.get("cross_checks", [])
    if not isinstance(cross_checks, list) or not all(isinstance(c, str) for c in cross_checks):
        raise SpecError("cross_checks must be a list of check names")
    for name in cross_checks:
        if name not in CROSS_CHECKS:
            raise SpecError(f"unknown cross-field check {name!r}")
    return SpecDefinition(
        kind=kind, version=version, rules=tuple(rules), cross_checks=tuple(cross_checks)
    )


def list_rules(spec: SpecDefinition) -> list[tuple[str, str]]:
    """Path-sorted (path, summary) listing of every rule in the set."""
    return [(rule.path, rule.summary()) for rule in sorted(spec.rules, key=lambda r: r.path)]


def _type_ok(expected: str, value: Any) -> bool:
    if expected == "string":
        return isinstance(value, str)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "object":
        return isinstance(value, dict)
    return isinstance(value, list)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


class _Validation:
    """One validation pass; accumulates issues."""

    def __init__(self, spec: SpecDefinition):
        self.spec = spec
        self.errors: list[ValidationIssue] = []
        self.warnings: list[ValidationIssue] = []

    def error(self, path: str, code: str, message: str):
        self.errors.append(ValidationIssue(path, code, message))

    def run(self, doc: Any) -> ValidationReport:
        if not isinstance(doc, dict):
            self.error("$", "wrong_type", "document root must be an object")
        else:
            self._walk_object(doc, "", "")
            for name in self.spec.cross_checks:
                CROSS_CHECKS[name](doc, self.errors)
        self.errors.sort(key=lambda issue: (issue.path, issue.code, issue.message))
        self.warnings.sort(key=lambda issue: (issue.path, issue.code, issue.message))
        return ValidationReport(
            spec_version=self.spec.version,
            kind=self.spec.kind,
            errors=tuple(self.errors),
            warnings=tuple(self.warnings),
        )

    def _walk_object(self, obj: dict, rule_path: str, doc_path: str):
        allowed = self.spec.children(rule_path)
        for key, value in obj.items():
            if not isinstance(key, str) or key not in allowed:
                self.error(_join(doc_path, str(key)), "unknown_key", "unknown key")
                continue
            child_rule = self.spec.rule(_join(rule_path, key))
            self._apply_rule(child_rule, value, _join(rule_path, key), _join(doc_path, key))
        for segment in self.spec.required_children(rule_path):
            if segment not in obj:
                self.error(_join(doc_path, segment), "missing", "required field is missing")

    def _apply_rule(self, rule: Rule, value: Any, rule_path: str, doc_path: str):
        if rule.deprecated:
            self.warnings.append(
                ValidationIssue(doc_path, "deprecated", "field is deprecated")
            )
        if rule.type is None:
            return
        if value is None or not _type_ok(rule.type, value):
            self.error(doc_path, "wrong_type", f"must be of type {rule.type}")
            return
        if rule.enum is not None and value not in rule.enum:
            self.error(
                doc_path,
                "out_of_domain",
                "must be one of " + ", ".join(str(v) for v in rule.enum),
            )
        if rule.type in ("integer", "number"):
            if rule.minimum is not None and value < rule.minimum:
                self.error(doc_path, "out_of_bounds", f"must be at least {rule.minimum}")
            if rule.maximum is not None and value > rule.maximum:
                self.error(doc_path, "out_of_bounds", f"must be at most {rule.maximum}")
        elif rule.type == "string":
            if rule.min_length is not None and len(value) < rule.min_length:
                self.error(
                    doc_path, "out_of_bounds", f"must have at least {rule.min_length} characters"
                )
            elif rule.max_length is not None and len(value) > rule.max_length:
                self.error(
                    doc_path, "out_of_bounds", f"must have at most {rule.max_length} characters"
                )
            pattern = self.spec.compiled_pattern(rule_path)
            if pattern is not None and value and pattern.search(value) is None:
                self.error(doc_path, "pattern_mismatch", "does not match the required pattern")
        elif rule.type == "object":
            self._walk_object(value, rule_path, doc_path)
        elif rule.type == "array":
            self._apply_array(rule, value, rule_path, doc_path)

    def _apply_array(self, rule: Rule, items: list, rule_path: str, doc_path: str):
        element_rule = self.spec.rule(rule_path + "[]")
        if element_rule is not None:
            for i, item in enumerate(items):
                self._apply_rule(element_rule, item, rule_path + "[]", f"{doc_path}[{i}]")
        if rule.unique_by:
            seen: set[tuple] = set()
            for i, item in enumerate(items):
                if not isinstance(item, dict):
                    continue
                key = tuple(_hashable(item.get(f)) for f in rule.unique_by)
                if key in seen:
                    if len(rule.unique_by) == 1:
                        dup_path = f"{doc_path}[{i}].{rule.unique_by[0]}"
                    else:
                        dup_path = f"{doc_path}[{i}]"
                    self.error(
                        dup_path,
                        "duplicate",
                        "duplicates an earlier entry on " + ", ".join(rule.unique_by),
                    )
                else:
                    seen.add(key)


def _hashable(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_hashable(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((k, _hashable(v)) for k, v in value.items()))
    return value


def validate(document: bytes | str | dict, spec: SpecDefinition) -> ValidationReport:
    """Validate a document against a rule set, collecting every issue.

    Accepts raw bytes (decoded here; undecodable input raises
    DocumentSyntaxError) or an already-parsed document.
    """
    doc = decode_document(document) if isinstance(document, (bytes, str)) else document
    return _Validation(spec).run(doc)


# Named cross-field checks. Each check guards on the structural validity of
# the fields it touches so a type or domain error never double-reports.


def _check_fork_has_no_queues(doc: dict, errors: list[ValidationIssue]):
    scheduler = doc.get("scheduler")
    if not isinstance(scheduler, dict) or scheduler.get("scheduler_type") != "fork":
        return
    queues = scheduler.get("queues")
    if isinstance(queues, list) and queues:
        errors.append(
            ValidationIssue("scheduler", "cross_field", "a fork scheduler must not define queues")
        )


def _check_single_default_queue(doc: dict, errors: list[ValidationIssue]):
    scheduler = doc.get("scheduler")
    if not isinstance(scheduler, dict):
        return
    queues = scheduler.get("queues")
    if not isinstance(queues, list):
        return
    seen_default = False
    for i, queue in enumerate(queues):
        if isinstance(queue, dict) and queue.get("default") is True:
            if seen_default:
                errors.append(
                    ValidationIssue(
                        f"scheduler.queues[{i}].default",
                        "cross_field",
                        "at most one queue may be the default",
                    )
                )
            seen_default = True


def _check_compute_batch_requires_queue(doc: dict, errors: list[ValidationIssue]):
    high_level = doc.get("high_level")
    if not isinstance(high_level, dict) or high_level.get("resource_type") != "compute":
        return
    scheduler = doc.get("scheduler")
    if not isinstance(scheduler, dict):
        return
    scheduler_type = scheduler.get("scheduler_type")
    if scheduler_type not in SCHEDULER_TYPES or scheduler_type == "fork":
        return
    queues = scheduler.get("queues")
    if queues is None or (isinstance(queues, list) and not queues):
        errors.append(
            ValidationIssue(
                "scheduler.queues",
                "cross_field",
                "a compute resource with a batch scheduler must define at least one queue",
            )
        )


def _check_constraint_value_matches_predicate(doc: dict, errors: list[ValidationIssue]):
    for block in ("architecture_hardware", "software_dependencies"):
        constraints = doc.get(block)
        if not isinstance(constraints, list):
            continue
        for i, item in enumerate(constraints):
            if not isinstance(item, dict):
                continue
            predicate = item.get("predicate")
            if predicate not in CONSTRAINT_PREDICATES:
                continue
            problem = constraint_value_problem(
                predicate, item.get("value"), has_value="value" in item
            )
            if problem:
                errors.append(ValidationIssue(f"{block}[{i}].value", "cross_field", problem))


CROSS_CHECKS: dict[str, Callable[[dict, list[ValidationIssue]], None]] = {
    "fork_has_no_queues": _check_fork_has_no_queues,
    "single_default_queue": _check_single_default_queue,
    "compute_batch_requires_queue": _check_compute_batch_requires_queue,
    "constraint_value_matches_predicate": _check_constraint_value_matches_predicate,
}


_SPEC_FILE_RE = re.compile(r"(resource|application)-spec-(.+)\.json\Z")


class SpecCatalog:
    """The rule sets a registry instance knows about, indexed by kind and
    version. The default for a kind is its highest version."""

    def __init__(self):
        self._specs: dict[tuple[str, SpecVersion], SpecDefinition] = {}
        self._sources: dict[tuple[str, SpecVersion], bytes] = {}

    def add(self, spec: SpecDefinition, source: bytes | None = None):
        key = (spec.kind, spec.version)
        self._specs[key] = spec
        self._sources[key] = source if source is not None else canonical_json_bytes(spec.to_doc())

    def get(self, kind: str, version: str | SpecVersion | None = None) -> SpecDefinition:
        if version is None:
            return self.latest(kind)
        if isinstance(version, str):
            version = SpecVersion.parse(version)
        spec = self._specs.get((kind, version))
        if spec is None:
            raise NotFound(f"no {kind} rule set version {version}")
        return spec

    def latest(self, kind: str) -> SpecDefinition:
        candidates = [v for (k, v) in self._specs if k == kind]
        if not candidates:
            raise NotFound(f"no rule set loaded for kind {kind!r}")
        return self._specs[(kind, max(candidates))]

    def source(self, kind: str, version: str | SpecVersion) -> bytes:
        if isinstance(version, str):
            version = SpecVersion.parse(version)
        source = self._sources.get((kind, version))
        if source is None:
            raise NotFound(f"no {kind} rule set version {version}")
        return source

    def versions(self) -> list[tuple[str, str]]:
        return sorted((kind, str(version)) for kind, version in self._specs)

    def load_file(self, path: Path):
        match = _SPEC_FILE_RE.match(path.name)
        if match is None:
            raise SpecError(f"rule-set file name {path.name!r} is not recognized")
        source = path.read_bytes()
        spec = load_spec(source)
        if spec.kind != match.group(1) or str(spec.version) != match.group(2):
            raise SpecError(
                f"rule-set file {path.name!r} declares kind {spec.kind} version {spec.version}"
            )
        self.add(spec, source)

    def load_directory(self, directory: Path | str):
        directory = Path(directory)
        for path in sorted(directory.glob("*-spec-*.json")):
            self.load_file(path)

    @classmethod
    def bundled(cls) -> "SpecCatalog":
        """Catalog holding the baseline rule sets shipped with the package."""
        catalog = cls()
        spec_dir = resources.files("cireg").joinpath("specs")
        for entry in sorted(spec_dir.iterdir(), key=lambda e: e.name):
            match = _SPEC_FILE_RE.match(entry.name)
            if match is None:
                continue
            source = entry.read_bytes()
            spec = load_spec(source)
            catalog.add(spec, source)
        return catalog
