"""Typed descriptions of computational resources and applications.

A description travels as a single UTF-8 JSON document. This module defines
the in-memory types, the strict and lenient parsers, and the canonical
serialization every other layer builds on:

* keys sorted lexicographically at every level, no insignificant whitespace;
* absent optional blocks omitted (``None`` never serialized);
* numbers in their shortest round-trip form, single-line output.

Instances are immutable after construction: collection fields are tuples and
every dataclass is frozen, so a constructed description stays valid. Direct
construction with bad values raises :class:`InvariantError`; the parsers
raise :class:`StructureError` with the exact field path instead, before any
object is built.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

from .errors import DocumentSyntaxError, InvariantError, StructureError

RESOURCE_KIND = "resource"
APPLICATION_KIND = "application"
ENTRY_KINDS = (RESOURCE_KIND, APPLICATION_KIND)

MAX_IDENTIFIER_LENGTH = 253
IDENTIFIER_RE = re.compile(r"[a-z0-9](?:[a-z0-9.-]*[a-z0-9])?\Z")
KEY_PATH_RE = re.compile(r"[a-z0-9_]+(?:\.[a-z0-9_]+)*\Z")

RESOURCE_TYPES = ("compute", "storage")
RESOURCE_CATEGORIES = (
    "hpc_cluster",
    "campus_cluster",
    "national_storage",
    "academic_cloud",
    "commercial_cloud",
    "individual_lab",
)
SCHEDULER_TYPES = ("slurm", "sge", "pbs", "lsf", "condor", "fork", "other")
PACKAGE_KINDS = (
    "mpi",
    "openmp",
    "cuda",
    "container_runtime",
    "module",
    "library",
    "framework",
    "other",
)
APP_TYPES = ("command_line_batch", "interactive", "streaming")
PACKAGING_KINDS = ("container_image", "vm_image", "unikernel", "module", "bare")
INPUT_KINDS = ("file", "object", "database", "url", "environment_variable")
OUTPUT_KINDS = ("file", "stdout_stream", "stderr_stream", "object")
CONSTRAINT_CATEGORIES = ("hardware", "operating_system", "scheduler", "software", "high_level")
CONSTRAINT_PREDICATES = ("equals", "one_of", "min_version", "min_value", "exists")

_SCALAR_TYPES = (str, int, float, bool)


def canonical_json_bytes(value: Any) -> bytes:
    """Canonical single-line UTF-8 JSON encoding of a JSON-shaped value."""
    try:
        text = json.dumps(
            value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        )
    except (TypeError, ValueError) as exc:
        raise InvariantError("$", f"value is not canonically serializable: {exc}") from exc
    return text.encode("utf-8")


def _reject_constant(token: str) -> Any:
    raise ValueError(f"non-finite number {token} is not allowed")


def decode_document(document: bytes | str) -> Any:
    """Decode document bytes to a JSON value, with line/column on failure."""
    try:
        return json.loads(document, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    except UnicodeDecodeError as exc:
        raise DocumentSyntaxError(f"invalid UTF-8: {exc.reason}", 1, exc.start + 1) from exc
    except ValueError as exc:
        raise DocumentSyntaxError(str(exc)) from exc


# Shared invariant predicates. The parsers call them to raise StructureError
# with a full document path; __post_init__ calls them to raise InvariantError.


def identifier_problem(value: Any) -> str | None:
    if not isinstance(value, str) or value == "":
        return "must be a non-empty string"
    if len(value) > MAX_IDENTIFIER_LENGTH:
        return f"must be at most {MAX_IDENTIFIER_LENGTH} characters"
    if IDENTIFIER_RE.match(value) is None:
        return "must be lowercase alphanumeric plus '-' and '.', starting and ending alphanumeric"
    return None


def _nonempty_str_problem(value: Any) -> str | None:
    if not isinstance(value, str) or value == "":
        return "must be a non-empty string"
    return None


def _enum_problem(value: Any, allowed: tuple[str, ...]) -> str | None:
    if value not in allowed:
        return "must be one of " + ", ".join(allowed)
    return None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive_int_problem(value: Any) -> str | None:
    if isinstance(value, bool) or not isinstance(value, int):
        return "must be an integer"
    if value < 1:
        return "must be at least 1"
    return None


def _nonnegative_number_problem(value: Any) -> str | None:
    if not _is_number(value):
        return "must be a number"
    if value < 0:
        return "must not be negative"
    return None


def duplicate_index(items: tuple, key_fn) -> int | None:
    """Index of the first item whose key repeats an earlier one, if any."""
    seen = set()
    for i, item in enumerate(items):
        key = key_fn(item)
        if key in seen:
            return i
        seen.add(key)
    return None


def _fail_invariant(path: str, problem: str):
    raise InvariantError(path, problem)


@dataclass(frozen=True, slots=True)
class HighLevelResourceData:
    """Administrative identity of a resource: who runs it and what it is."""

    name: str
    hostname: str
    owner: str
    resource_type: str
    category: str | None = None
    description: str | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("name", "hostname", "owner"):
            problem = _nonempty_str_problem(getattr(self, attr))
            if problem:
                _fail_invariant(attr, problem)
        problem = _enum_problem(self.resource_type, RESOURCE_TYPES)
        if problem:
            _fail_invariant("resource_type", problem)
        if self.category is not None:
            problem = _enum_problem(self.category, RESOURCE_CATEGORIES)
            if problem:
                _fail_invariant("category", problem)
        if self.description is not None and not isinstance(self.description, str):
            _fail_invariant("description", "must be a string")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "name": self.name,
            "hostname": self.hostname,
            "owner": self.owner,
            "resource_type": self.resource_type,
        }
        if self.category is not None:
            doc["category"] = self.category
        if self.description is not None:
            doc["description"] = self.description
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class AcceleratorSpec:
    model: str
    count_per_node: int
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _nonempty_str_problem(self.model)
        if problem:
            _fail_invariant("model", problem)
        problem = _positive_int_problem(self.count_per_node)
        if problem:
            _fail_invariant("count_per_node", problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"model": self.model, "count_per_node": self.count_per_node}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class HardwareData:
    """Physical shape of the machine. Every field beyond the CPU is optional;
    storage-oriented resources typically fill only the storage fields."""

    cpu_architecture: str
    memory_type: str | None = None
    memory_per_node_gb: int | float | None = None
    cores_per_node: int | None = None
    threads_per_core: int | None = None
    node_count: int | None = None
    storage_type: str | None = None
    storage_capacity_tb: int | float | None = None
    network_type: str | None = None
    accelerators: tuple[AcceleratorSpec, ...] | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _nonempty_str_problem(self.cpu_architecture)
        if problem:
            _fail_invariant("cpu_architecture", problem)
        for attr in ("memory_type", "storage_type", "network_type"):
            value = getattr(self, attr)
            if value is not None and not isinstance(value, str):
                _fail_invariant(attr, "must be a string")
        for attr in ("memory_per_node_gb", "storage_capacity_tb"):
            value = getattr(self, attr)
            if value is not None:
                problem = _nonnegative_number_problem(value)
                if problem:
                    _fail_invariant(attr, problem)
        for attr in ("cores_per_node", "threads_per_core", "node_count"):
            value = getattr(self, attr)
            if value is not None:
                problem = _positive_int_problem(value)
                if problem:
                    _fail_invariant(attr, problem)
        if self.accelerators is not None:
            for i, acc in enumerate(self.accelerators):
                if not isinstance(acc, AcceleratorSpec):
                    _fail_invariant(f"accelerators[{i}]", "must be an AcceleratorSpec")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"cpu_architecture": self.cpu_architecture}
        for key in (
            "memory_type",
            "memory_per_node_gb",
            "cores_per_node",
            "threads_per_core",
            "node_count",
            "storage_type",
            "storage_capacity_tb",
            "network_type",
        ):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        if self.accelerators is not None:
            doc["accelerators"] = [a.to_doc() for a in self.accelerators]
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class OperatingSystemData:
    kernel_name: str
    kernel_version: str
    distribution: str
    distribution_version: str
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        # Version fields must parse under the version grammar, which accepts
        # any non-empty string, so non-emptiness is the whole check.
        for attr in ("kernel_name", "kernel_version", "distribution", "distribution_version"):
            problem = _nonempty_str_problem(getattr(self, attr))
            if problem:
                _fail_invariant(attr, problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "kernel_name": self.kernel_name,
            "kernel_version": self.kernel_version,
            "distribution": self.distribution,
            "distribution_version": self.distribution_version,
        }
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class QueueDefinition:
    """One scheduler queue/partition and its submission limits."""

    name: str
    max_nodes: int | None = None
    max_wallclock_minutes: int | None = None
    max_jobs_per_user: int | None = None
    default: bool = False
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = identifier_problem(self.name)
        if problem:
            _fail_invariant("name", problem)
        for attr in ("max_nodes", "max_wallclock_minutes", "max_jobs_per_user"):
            value = getattr(self, attr)
            if value is not None:
                problem = _positive_int_problem(value)
                if problem:
                    _fail_invariant(attr, problem)
        if not isinstance(self.default, bool):
            _fail_invariant("default", "must be a boolean")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name}
        for key in ("max_nodes", "max_wallclock_minutes", "max_jobs_per_user"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        if self.default:
            doc["default"] = True
        doc.update(self.extensions)
        return doc


def fork_queue_problem(scheduler_type: str, queues: tuple | None) -> str | None:
    if scheduler_type == "fork" and queues:
        return "a fork scheduler must not define queues"
    return None


def default_queue_problem(queues: tuple | None) -> tuple[int, str] | None:
    """Index of the second queue flagged default, with a message."""
    if not queues:
        return None
    seen_default = False
    for i, queue in enumerate(queues):
        if queue.default:
            if seen_default:
                return i, "at most one queue may be the default"
            seen_default = True
    return None


@dataclass(frozen=True, slots=True)
class SchedulerData:
    scheduler_type: str
    scheduler_version: str | None = None
    queues: tuple[QueueDefinition, ...] | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _enum_problem(self.scheduler_type, SCHEDULER_TYPES)
        if problem:
            _fail_invariant("scheduler_type", problem)
        if self.scheduler_version is not None:
            problem = _nonempty_str_problem(self.scheduler_version)
            if problem:
                _fail_invariant("scheduler_version", problem)
        if self.queues is not None:
            for i, queue in enumerate(self.queues):
                if not isinstance(queue, QueueDefinition):
                    _fail_invariant(f"queues[{i}]", "must be a QueueDefinition")
            dup = duplicate_index(self.queues, lambda q: q.name)
            if dup is not None:
                _fail_invariant(f"queues[{dup}].name", "queue names must be unique")
            default_dup = default_queue_problem(self.queues)
            if default_dup is not None:
                _fail_invariant(f"queues[{default_dup[0]}].default", default_dup[1])
        problem = fork_queue_problem(self.scheduler_type, self.queues)
        if problem:
            _fail_invariant("queues", problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"scheduler_type": self.scheduler_type}
        if self.scheduler_version is not None:
            doc["scheduler_version"] = self.scheduler_version
        if self.queues is not None:
            doc["queues"] = [q.to_doc() for q in self.queues]
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class SoftwarePackage:
    name: str
    kind: str
    version: str | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _nonempty_str_problem(self.name)
        if problem:
            _fail_invariant("name", problem)
        problem = _enum_problem(self.kind, PACKAGE_KINDS)
        if problem:
            _fail_invariant("kind", problem)
        if self.version is not None:
            problem = _nonempty_str_problem(self.version)
            if problem:
                _fail_invariant("version", problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.version is not None:
            doc["version"] = self.version
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class SoftwareData:
    """Installed software inventory: MPI stacks, CUDA, container runtimes,
    modules. Uniqueness is over the (name, version) pair."""

    packages: tuple[SoftwarePackage, ...]
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for i, pkg in enumerate(self.packages):
            if not isinstance(pkg, SoftwarePackage):
                _fail_invariant(f"packages[{i}]", "must be a SoftwarePackage")
        dup = duplicate_index(self.packages, lambda p: (p.name, p.version))
        if dup is not None:
            _fail_invariant(f"packages[{dup}]", "package name/version pairs must be unique")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"packages": [p.to_doc() for p in self.packages]}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class ResourceDescription:
    """A computational or storage resource as one self-contained document."""

    id: str
    high_level: HighLevelResourceData
    hardware: HardwareData | None = None
    operating_system: OperatingSystemData | None = None
    scheduler: SchedulerData | None = None
    software: SoftwareData | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = identifier_problem(self.id)
        if problem:
            _fail_invariant("id", problem)
        if not isinstance(self.high_level, HighLevelResourceData):
            _fail_invariant("high_level", "must be a HighLevelResourceData")
        problem = compute_queue_problem(
            self.high_level.resource_type,
            self.scheduler.scheduler_type if self.scheduler else None,
            self.scheduler.queues if self.scheduler else None,
        )
        if problem:
            _fail_invariant("scheduler.queues", problem)

    @property
    def kind(self) -> str:
        return RESOURCE_KIND

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "high_level": self.high_level.to_doc()}
        for key in ("hardware", "operating_system", "scheduler", "software"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value.to_doc()
        doc.update(self.extensions)
        return doc


def compute_queue_problem(
    resource_type: str, scheduler_type: str | None, queues: tuple | None
) -> str | None:
    if resource_type != "compute" or scheduler_type is None:
        return None
    if scheduler_type != "fork" and not queues:
        return "a compute resource with a batch scheduler must define at least one queue"
    return None


@dataclass(frozen=True, slots=True)
class Constraint:
    """One requirement an application places on a resource.

    ``key`` is a dotted field path inside the category block; lists along the
    path are matched existentially. ``value`` is shaped by the predicate:
    equals takes a scalar, one_of a non-empty list of scalars, min_version a
    version string ("name:version" against package lists), min_value a
    number, and exists takes no value at all. ``preferred`` marks the
    constraint as an optional preference that feeds the match score instead
    of gating compatibility.
    """

    category: str
    key: str
    predicate: str
    value: Any = None
    preferred: bool = False
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _enum_problem(self.category, CONSTRAINT_CATEGORIES)
        if problem:
            _fail_invariant("category", problem)
        if not isinstance(self.key, str) or KEY_PATH_RE.match(self.key) is None:
            _fail_invariant("key", "must be a dotted lowercase field path")
        problem = _enum_problem(self.predicate, CONSTRAINT_PREDICATES)
        if problem:
            _fail_invariant("predicate", problem)
        if isinstance(self.value, list):
            object.__setattr__(self, "value", tuple(self.value))
        problem = constraint_value_problem(self.predicate, self.value, has_value=self.value is not None)
        if problem:
            _fail_invariant("value", problem)
        if not isinstance(self.preferred, bool):
            _fail_invariant("preferred", "must be a boolean")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "category": self.category,
            "key": self.key,
            "predicate": self.predicate,
        }
        if self.predicate != "exists":
            doc["value"] = list(self.value) if isinstance(self.value, tuple) else self.value
        if self.preferred:
            doc["preferred"] = True
        doc.update(self.extensions)
        return doc


def constraint_value_problem(predicate: str, value: Any, has_value: bool) -> str | None:
    """Coherence between a constraint predicate and its value."""
    if predicate == "exists":
        if has_value:
            return "exists takes no value"
        return None
    if not has_value:
        return f"{predicate} requires a value"
    if predicate == "equals":
        if not isinstance(value, _SCALAR_TYPES):
            return "equals requires a scalar value"
    elif predicate == "one_of":
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            return "one_of requires a non-empty list"
        if not all(isinstance(v, _SCALAR_TYPES) for v in value):
            return "one_of list entries must be scalars"
    elif predicate == "min_version":
        if not isinstance(value, str) or value == "":
            return "min_version requires a non-empty version string"
    elif predicate == "min_value":
        if not _is_number(value):
            return "min_value requires a number"
    return None


@dataclass(frozen=True, slots=True)
class ApplicationHighLevel:
    name: str
    app_type: str
    description: str | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _nonempty_str_problem(self.name)
        if problem:
            _fail_invariant("name", problem)
        problem = _enum_problem(self.app_type, APP_TYPES)
        if problem:
            _fail_invariant("app_type", problem)
        if self.description is not None and not isinstance(self.description, str):
            _fail_invariant("description", "must be a string")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "app_type": self.app_type}
        if self.description is not None:
            doc["description"] = self.description
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class PackagingInfo:
    kind: str
    reference: str
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _enum_problem(self.kind, PACKAGING_KINDS)
        if problem:
            _fail_invariant("kind", problem)
        problem = _nonempty_str_problem(self.reference)
        if problem:
            _fail_invariant("reference", problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind, "reference": self.reference}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class AppInput:
    name: str
    kind: str
    required: bool
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = identifier_problem(self.name)
        if problem:
            _fail_invariant("name", problem)
        problem = _enum_problem(self.kind, INPUT_KINDS)
        if problem:
            _fail_invariant("kind", problem)
        if not isinstance(self.required, bool):
            _fail_invariant("required", "must be a boolean")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "kind": self.kind, "required": self.required}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class AppOutput:
    name: str
    kind: str
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = identifier_problem(self.name)
        if problem:
            _fail_invariant("name", problem)
        problem = _enum_problem(self.kind, OUTPUT_KINDS)
        if problem:
            _fail_invariant("kind", problem)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "kind": self.kind}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class RuntimeRequirement:
    """An opaque key/value runtime setting (run-as identity, OS capability)."""

    key: str
    value: str
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = _nonempty_str_problem(self.key)
        if problem:
            _fail_invariant("key", problem)
        if not isinstance(self.value, str):
            _fail_invariant("value", "must be a string")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"key": self.key, "value": self.value}
        doc.update(self.extensions)
        return doc


@dataclass(frozen=True, slots=True)
class ApplicationDescription:
    """An application and what it needs from a resource to run."""

    id: str
    high_level: ApplicationHighLevel
    packaging: PackagingInfo | None = None
    architecture_hardware: tuple[Constraint, ...] | None = None
    software_dependencies: tuple[Constraint, ...] | None = None
    inputs: tuple[AppInput, ...] | None = None
    runtime_requirements: tuple[RuntimeRequirement, ...] | None = None
    outputs: tuple[AppOutput, ...] | None = None
    extensions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        problem = identifier_problem(self.id)
        if problem:
            _fail_invariant("id", problem)
        if not isinstance(self.high_level, ApplicationHighLevel):
            _fail_invariant("high_level", "must be an ApplicationHighLevel")
        if self.inputs is not None:
            dup = duplicate_index(self.inputs, lambda x: x.name)
            if dup is not None:
                _fail_invariant(f"inputs[{dup}].name", "input names must be unique")
        if self.outputs is not None:
            dup = duplicate_index(self.outputs, lambda x: x.name)
            if dup is not None:
                _fail_invariant(f"outputs[{dup}].name", "output names must be unique")

    @property
    def kind(self) -> str:
        return APPLICATION_KIND

    def constraints(self) -> tuple[Constraint, ...]:
        """All constraints in declaration order, hardware first."""
        return tuple(self.architecture_hardware or ()) + tuple(self.software_dependencies or ())

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "high_level": self.high_level.to_doc()}
        if self.packaging is not None:
            doc["packaging"] = self.packaging.to_doc()
        for key in ("architecture_hardware", "software_dependencies"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = [c.to_doc() for c in value]
        for key in ("inputs", "runtime_requirements", "outputs"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = [x.to_doc() for x in value]
        doc.update(self.extensions)
        return doc


# Parsing. Every helper takes the path of the value it is inspecting so any
# failure names the exact offending field. Unknown keys fail in strict mode
# and are preserved in the node's extensions map in lenient mode.


def _fail(path: str, message: str):
    raise StructureError(path or "$", message)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _require_object(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(path, "must be an object")
    return value


def _split_extensions(obj: dict, path: str, known: tuple[str, ...], lenient: bool) -> dict:
    extensions: dict[str, Any] = {}
    for key in obj:
        if key not in known:
            if not lenient:
                _fail(_join(path, key), "unknown key")
            extensions[key] = obj[key]
    return extensions


def _get_str(obj: dict, key: str, path: str, *, required: bool, allow_empty: bool = False):
    if key not in obj:
        if required:
            _fail(_join(path, key), "required field is missing")
        return None
    value = obj[key]
    if not isinstance(value, str):
        _fail(_join(path, key), "must be a string")
    if value == "" and not allow_empty:
        _fail(_join(path, key), "must be a non-empty string")
    return value


def _get_enum(obj: dict, key: str, path: str, allowed: tuple[str, ...], *, required: bool):
    value = _get_str(obj, key, path, required=required)
    if value is not None and value not in allowed:
        _fail(_join(path, key), "must be one of " + ", ".join(allowed))
    return value


def _get_positive_int(obj: dict, key: str, path: str, *, required: bool = False):
    if key not in obj:
        if required:
            _fail(_join(path, key), "required field is missing")
        return None
    value = obj[key]
    problem = _positive_int_problem(value)
    if problem:
        _fail(_join(path, key), problem)
    return value


def _get_nonnegative_number(obj: dict, key: str, path: str):
    if key not in obj:
        return None
    value = obj[key]
    problem = _nonnegative_number_problem(value)
    if problem:
        _fail(_join(path, key), problem)
    return value


def _get_bool(obj: dict, key: str, path: str, *, required: bool, default=None):
    if key not in obj:
        if required:
            _fail(_join(path, key), "required field is missing")
        return default
    value = obj[key]
    if not isinstance(value, bool):
        _fail(_join(path, key), "must be a boolean")
    return value


def _get_list(obj: dict, key: str, path: str, *, required: bool = False):
    if key not in obj:
        if required:
            _fail(_join(path, key), "required field is missing")
        return None
    value = obj[key]
    if not isinstance(value, list):
        _fail(_join(path, key), "must be a list")
    return value


def _parse_high_level(value: Any, path: str, lenient: bool) -> HighLevelResourceData:
    obj = _require_object(value, path)
    known = ("name", "hostname", "owner", "resource_type", "category", "description")
    extensions = _split_extensions(obj, path, known, lenient)
    return HighLevelResourceData(
        name=_get_str(obj, "name", path, required=True),
        hostname=_get_str(obj, "hostname", path, required=True),
        owner=_get_str(obj, "owner", path, required=True),
        resource_type=_get_enum(obj, "resource_type", path, RESOURCE_TYPES, required=True),
        category=_get_enum(obj, "category", path, RESOURCE_CATEGORIES, required=False),
        description=_get_str(obj, "description", path, required=False, allow_empty=True),
        extensions=extensions,
    )


def _parse_accelerator(value: Any, path: str, lenient: bool) -> AcceleratorSpec:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("model", "count_per_node"), lenient)
    return AcceleratorSpec(
        model=_get_str(obj, "model", path, required=True),
        count_per_node=_get_positive_int(obj, "count_per_node", path, required=True),
        extensions=extensions,
    )


def _parse_hardware(value: Any, path: str, lenient: bool) -> HardwareData:
    obj = _require_object(value, path)
    known = (
        "cpu_architecture",
        "memory_type",
        "memory_per_node_gb",
        "cores_per_node",
        "threads_per_core",
        "node_count",
        "storage_type",
        "storage_capacity_tb",
        "network_type",
        "accelerators",
    )
    extensions = _split_extensions(obj, path, known, lenient)
    accelerators = None
    raw_accelerators = _get_list(obj, "accelerators", path)
    if raw_accelerators is not None:
        accelerators = tuple(
            _parse_accelerator(item, f"{path}.accelerators[{i}]", lenient)
            for i, item in enumerate(raw_accelerators)
        )
    return HardwareData(
        cpu_architecture=_get_str(obj, "cpu_architecture", path, required=True),
        memory_type=_get_str(obj, "memory_type", path, required=False, allow_empty=True),
        memory_per_node_gb=_get_nonnegative_number(obj, "memory_per_node_gb", path),
        cores_per_node=_get_positive_int(obj, "cores_per_node", path),
        threads_per_core=_get_positive_int(obj, "threads_per_core", path),
        node_count=_get_positive_int(obj, "node_count", path),
        storage_type=_get_str(obj, "storage_type", path, required=False, allow_empty=True),
        storage_capacity_tb=_get_nonnegative_number(obj, "storage_capacity_tb", path),
        network_type=_get_str(obj, "network_type", path, required=False, allow_empty=True),
        accelerators=accelerators,
        extensions=extensions,
    )


def _parse_operating_system(value: Any, path: str, lenient: bool) -> OperatingSystemData:
    obj = _require_object(value, path)
    known = ("kernel_name", "kernel_version", "distribution", "distribution_version")
    extensions = _split_extensions(obj, path, known, lenient)
    return OperatingSystemData(
        kernel_name=_get_str(obj, "kernel_name", path, required=True),
        kernel_version=_get_str(obj, "kernel_version", path, required=True),
        distribution=_get_str(obj, "distribution", path, required=True),
        distribution_version=_get_str(obj, "distribution_version", path, required=True),
        extensions=extensions,
    )


def _parse_queue(value: Any, path: str, lenient: bool) -> QueueDefinition:
    obj = _require_object(value, path)
    known = ("name", "max_nodes", "max_wallclock_minutes", "max_jobs_per_user", "default")
    extensions = _split_extensions(obj, path, known, lenient)
    name = _get_str(obj, "name", path, required=True)
    problem = identifier_problem(name)
    if problem:
        _fail(_join(path, "name"), problem)
    return QueueDefinition(
        name=name,
        max_nodes=_get_positive_int(obj, "max_nodes", path),
        max_wallclock_minutes=_get_positive_int(obj, "max_wallclock_minutes", path),
        max_jobs_per_user=_get_positive_int(obj, "max_jobs_per_user", path),
        default=_get_bool(obj, "default", path, required=False, default=False),
        extensions=extensions,
    )


def _parse_scheduler(value: Any, path: str, lenient: bool) -> SchedulerData:
    obj = _require_object(value, path)
    known = ("scheduler_type", "scheduler_version", "queues")
    extensions = _split_extensions(obj, path, known, lenient)
    scheduler_type = _get_enum(obj, "scheduler_type", path, SCHEDULER_TYPES, required=True)
    queues = None
    raw_queues = _get_list(obj, "queues", path)
    if raw_queues is not None:
        queues = tuple(
            _parse_queue(item, f"{path}.queues[{i}]", lenient)
            for i, item in enumerate(raw_queues)
        )
        dup = duplicate_index(queues, lambda q: q.name)
        if dup is not None:
            _fail(f"{path}.queues[{dup}].name", "queue names must be unique")
        default_dup = default_queue_problem(queues)
        if default_dup is not None:
            _fail(f"{path}.queues[{default_dup[0]}].default", default_dup[1])
    problem = fork_queue_problem(scheduler_type, queues)
    if problem:
        _fail(path, problem)
    return SchedulerData(
        scheduler_type=scheduler_type,
        scheduler_version=_get_str(obj, "scheduler_version", path, required=False),
        queues=queues,
        extensions=extensions,
    )


def _parse_package(value: Any, path: str, lenient: bool) -> SoftwarePackage:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("name", "version", "kind"), lenient)
    return SoftwarePackage(
        name=_get_str(obj, "name", path, required=True),
        kind=_get_enum(obj, "kind", path, PACKAGE_KINDS, required=True),
        version=_get_str(obj, "version", path, required=False),
        extensions=extensions,
    )


def _parse_software(value: Any, path: str, lenient: bool) -> SoftwareData:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("packages",), lenient)
    raw_packages = _get_list(obj, "packages", path, required=True)
    packages = tuple(
        _parse_package(item, f"{path}.packages[{i}]", lenient)
        for i, item in enumerate(raw_packages)
    )
    dup = duplicate_index(packages, lambda p: (p.name, p.version))
    if dup is not None:
        _fail(f"{path}.packages[{dup}]", "package name/version pairs must be unique")
    return SoftwareData(packages=packages, extensions=extensions)


def parse_resource(document: bytes | str, *, lenient: bool = False) -> ResourceDescription:
    """Parse a resource description document.

    Strict mode (the default) rejects unknown keys at any depth with the
    exact path; lenient mode keeps them in the owning node's ``extensions``
    map so the document round-trips through canonical_serialize.
    """
    return resource_from_doc(decode_document(document), lenient=lenient)


def resource_from_doc(raw: Any, *, lenient: bool = False) -> ResourceDescription:
    obj = _require_object(raw, "$")
    known = ("id", "high_level", "hardware", "operating_system", "scheduler", "software")
    extensions = _split_extensions(obj, "", known, lenient)
    entry_id = _get_str(obj, "id", "", required=True)
    problem = identifier_problem(entry_id)
    if problem:
        _fail("id", problem)
    if "high_level" not in obj:
        _fail("high_level", "required field is missing")
    high_level = _parse_high_level(obj["high_level"], "high_level", lenient)
    hardware = (
        _parse_hardware(obj["hardware"], "hardware", lenient) if "hardware" in obj else None
    )
    operating_system = (
        _parse_operating_system(obj["operating_system"], "operating_system", lenient)
        if "operating_system" in obj
        else None
    )
    scheduler = (
        _parse_scheduler(obj["scheduler"], "scheduler", lenient) if "scheduler" in obj else None
    )
    software = (
        _parse_software(obj["software"], "software", lenient) if "software" in obj else None
    )
    problem = compute_queue_problem(
        high_level.resource_type,
        scheduler.scheduler_type if scheduler else None,
        scheduler.queues if scheduler else None,
    )
    if problem:
        _fail("scheduler.queues", problem)
    return ResourceDescription(
        id=entry_id,
        high_level=high_level,
        hardware=hardware,
        operating_system=operating_system,
        scheduler=scheduler,
        software=software,
        extensions=extensions,
    )


def _parse_constraint(value: Any, path: str, lenient: bool) -> Constraint:
    obj = _require_object(value, path)
    known = ("category", "key", "predicate", "value", "preferred")
    extensions = _split_extensions(obj, path, known, lenient)
    category = _get_enum(obj, "category", path, CONSTRAINT_CATEGORIES, required=True)
    key = _get_str(obj, "key", path, required=True)
    if KEY_PATH_RE.match(key) is None:
        _fail(_join(path, "key"), "must be a dotted lowercase field path")
    predicate = _get_enum(obj, "predicate", path, CONSTRAINT_PREDICATES, required=True)
    value_present = "value" in obj
    raw_value = obj.get("value")
    problem = constraint_value_problem(predicate, raw_value, has_value=value_present)
    if problem:
        _fail(_join(path, "value"), problem)
    return Constraint(
        category=category,
        key=key,
        predicate=predicate,
        value=raw_value,
        preferred=_get_bool(obj, "preferred", path, required=False, default=False),
        extensions=extensions,
    )


def _parse_app_high_level(value: Any, path: str, lenient: bool) -> ApplicationHighLevel:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("name", "app_type", "description"), lenient)
    return ApplicationHighLevel(
        name=_get_str(obj, "name", path, required=True),
        app_type=_get_enum(obj, "app_type", path, APP_TYPES, required=True),
        description=_get_str(obj, "description", path, required=False, allow_empty=True),
        extensions=extensions,
    )


def _parse_packaging(value: Any, path: str, lenient: bool) -> PackagingInfo:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("kind", "reference"), lenient)
    return PackagingInfo(
        kind=_get_enum(obj, "kind", path, PACKAGING_KINDS, required=True),
        reference=_get_str(obj, "reference", path, required=True),
        extensions=extensions,
    )


def _parse_app_input(value: Any, path: str, lenient: bool) -> AppInput:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("name", "kind", "required"), lenient)
    name = _get_str(obj, "name", path, required=True)
    problem = identifier_problem(name)
    if problem:
        _fail(_join(path, "name"), problem)
    return AppInput(
        name=name,
        kind=_get_enum(obj, "kind", path, INPUT_KINDS, required=True),
        required=_get_bool(obj, "required", path, required=True),
        extensions=extensions,
    )


def _parse_app_output(value: Any, path: str, lenient: bool) -> AppOutput:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("name", "kind"), lenient)
    name = _get_str(obj, "name", path, required=True)
    problem = identifier_problem(name)
    if problem:
        _fail(_join(path, "name"), problem)
    return AppOutput(
        name=name,
        kind=_get_enum(obj, "kind", path, OUTPUT_KINDS, required=True),
        extensions=extensions,
    )


def _parse_runtime_requirement(value: Any, path: str, lenient: bool) -> RuntimeRequirement:
    obj = _require_object(value, path)
    extensions = _split_extensions(obj, path, ("key", "value"), lenient)
    return RuntimeRequirement(
        key=_get_str(obj, "key", path, required=True),
        value=_get_str(obj, "value", path, required=True, allow_empty=True),
        extensions=extensions,
    )


def _parse_item_list(obj: dict, key: str, parser, lenient: bool):
    raw = _get_list(obj, key, "")
    if raw is None:
        return None
    return tuple(parser(item, f"{key}[{i}]", lenient) for i, item in enumerate(raw))


def parse_application(document: bytes | str, *, lenient: bool = False) -> ApplicationDescription:
    """Parse an application description document. See parse_resource for the
    strict/lenient contract."""
    return application_from_doc(decode_document(document), lenient=lenient)


def application_from_doc(raw: Any, *, lenient: bool = False) -> ApplicationDescription:
    obj = _require_object(raw, "$")
    known = (
        "id",
        "high_level",
        "packaging",
        "architecture_hardware",
        "software_dependencies",
        "inputs",
        "runtime_requirements",
        "outputs",
    )
    extensions = _split_extensions(obj, "", known, lenient)
    entry_id = _get_str(obj, "id", "", required=True)
    problem = identifier_problem(entry_id)
    if problem:
        _fail("id", problem)
    if "high_level" not in obj:
        _fail("high_level", "required field is missing")
    high_level = _parse_app_high_level(obj["high_level"], "high_level", lenient)
    packaging = (
        _parse_packaging(obj["packaging"], "packaging", lenient) if "packaging" in obj else None
    )
    architecture_hardware = _parse_item_list(obj, "architecture_hardware", _parse_constraint, lenient)
    software_dependencies = _parse_item_list(obj, "software_dependencies", _parse_constraint, lenient)
    inputs = _parse_item_list(obj, "inputs", _parse_app_input, lenient)
    if inputs is not None:
        dup = duplicate_index(inputs, lambda x: x.name)
        if dup is not None:
            _fail(f"inputs[{dup}].name", "input names must be unique")
    runtime_requirements = _parse_item_list(
        obj, "runtime_requirements", _parse_runtime_requirement, lenient
    )
    outputs = _parse_item_list(obj, "outputs", _parse_app_output, lenient)
    if outputs is not None:
        dup = duplicate_index(outputs, lambda x: x.name)
        if dup is not None:
            _fail(f"outputs[{dup}].name", "output names must be unique")
    return ApplicationDescription(
        id=entry_id,
        high_level=high_level,
        packaging=packaging,
        architecture_hardware=architecture_hardware,
        software_dependencies=software_dependencies,
        inputs=inputs,
        runtime_requirements=runtime_requirements,
        outputs=outputs,
        extensions=extensions,
    )


def canonical_serialize(description: ResourceDescription | ApplicationDescription) -> bytes:
    """Serialize a description to its canonical byte encoding.

    Constructed descriptions are immutable and validated, so the only way to
    reach an invalid state is through the extensions maps; anything in them
    that cannot be encoded raises InvariantError.
    """
    return canonical_json_bytes(description.to_doc())
