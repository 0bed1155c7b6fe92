"""Exception types shared across the registry library.

Every error carries a stable machine-readable ``code`` so the HTTP service
and the CLI can map failures to status codes and exit codes without string
matching. ``details()`` returns an optional structured payload suitable for
inclusion in API error bodies.
"""

from __future__ import annotations

from typing import Any


class RegistryError(Exception):
    """Base class for every error raised by this package."""

    code = "InternalError"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def details(self) -> dict[str, Any] | None:
        return None


class DocumentSyntaxError(RegistryError):
    """Input bytes are not well-formed UTF-8 JSON."""

    code = "SyntaxError"

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line} column {column}: {message}")
        self.line = line
        self.column = column

    def details(self) -> dict[str, Any]:
        return {"line": self.line, "column": self.column}


class StructureError(RegistryError):
    """A parsed document does not fit the description types."""

    code = "StructureError"

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path

    def details(self) -> dict[str, Any]:
        return {"path": self.path}


class InvariantError(RegistryError):
    """A description object violates one of its type invariants."""

    code = "InvariantError"

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path

    def details(self) -> dict[str, Any]:
        return {"path": self.path}


class FormatError(RegistryError):
    """A version string cannot be interpreted (empty input)."""

    code = "FormatError"


class SpecError(RegistryError):
    """A validation rule set is malformed."""

    code = "SpecError"

    def __init__(self, message: str, rule_index: int | None = None, path: str | None = None):
        where = ""
        if rule_index is not None:
            where = f"rule {rule_index}"
            if path:
                where += f" ({path})"
            where += ": "
        super().__init__(where + message)
        self.rule_index = rule_index
        self.path = path


class ValidationRejected(RegistryError):
    """A document failed validation against its rule set.

    Carries the full ``ValidationReport`` so callers can surface every
    collected issue, not just the first.
    """

    code = "ValidationRejected"

    def __init__(self, report):
        first = report.errors[0] if report.errors else None
        summary = f"{len(report.errors)} validation error(s)"
        if first is not None:
            summary += f"; first: {first.path}: {first.message}"
        super().__init__(summary)
        self.report = report

    def details(self) -> dict[str, Any]:
        return {"report": self.report.to_doc()}


class VersionConflict(RegistryError):
    """An optimistic-concurrency precondition did not hold."""

    code = "VersionConflict"

    def __init__(self, expected: int, actual: int):
        super().__init__(f"expected version {expected}, current version is {actual}")
        self.expected = expected
        self.actual = actual

    def details(self) -> dict[str, Any]:
        return {"expected": self.expected, "actual": self.actual}


class NotFound(RegistryError):
    code = "NotFound"


class Archived(RegistryError):
    """The id is archived; 'latest' reads are refused, explicit versions work."""

    code = "Archived"


class AlreadyArchived(RegistryError):
    code = "AlreadyArchived"


class KindConflict(RegistryError):
    """The id already exists under the other entry kind."""

    code = "KindConflict"


class StorageError(RegistryError):
    """The persistence layer is corrupt or unavailable."""

    code = "StorageError"


class QueryError(RegistryError):
    """A filter query is malformed (bad path, operator, or value)."""

    code = "QueryError"


class PathError(RegistryError):
    """A constraint key is not defined for its category."""

    code = "PathError"

    def __init__(self, category: str, key: str, message: str | None = None):
        super().__init__(message or f"key {key!r} is not defined for category {category!r}")
        self.category = category
        self.key = key

    def details(self) -> dict[str, Any]:
        return {"category": self.category, "key": self.key}


class Unauthorized(RegistryError):
    """A write request lacks a valid bearer token."""

    code = "Unauthorized"


class ConfigError(RegistryError):
    """Service or CLI configuration is unusable."""

    code = "ConfigError"
