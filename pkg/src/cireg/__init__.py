"""Uniform descriptions of computational resources and applications, a
versioned validating registry for them, and a constraint matcher that
decides which resources can run which applications."""

from .errors import (
    AlreadyArchived,
    Archived,
    ConfigError,
    DocumentSyntaxError,
    FormatError,
    InvariantError,
    KindConflict,
    NotFound,
    PathError,
    QueryError,
    RegistryError,
    SpecError,
    StorageError,
    StructureError,
    Unauthorized,
    ValidationRejected,
    VersionConflict,
)
from .match import ConstraintResult, MatchResult, evaluate_constraint, match_application
from .model import (
    APPLICATION_KIND,
    ENTRY_KINDS,
    RESOURCE_KIND,
    ApplicationDescription,
    Constraint,
    ResourceDescription,
    application_from_doc,
    canonical_json_bytes,
    canonical_serialize,
    decode_document,
    parse_application,
    parse_resource,
    resource_from_doc,
)
from .schema import (
    SpecCatalog,
    SpecDefinition,
    SpecVersion,
    ValidationIssue,
    ValidationReport,
    load_spec,
    validate,
)
from .store import FilterClause, FilterQuery, RegistryEntry, Store
from .versions import EQUAL, GREATER, LESS, compare_versions

__version__ = "0.1.0"

__all__ = [
    "APPLICATION_KIND",
    "AlreadyArchived",
    "ApplicationDescription",
    "Archived",
    "ConfigError",
    "Constraint",
    "ConstraintResult",
    "DocumentSyntaxError",
    "ENTRY_KINDS",
    "EQUAL",
    "FilterClause",
    "FilterQuery",
    "FormatError",
    "GREATER",
    "InvariantError",
    "KindConflict",
    "LESS",
    "MatchResult",
    "NotFound",
    "PathError",
    "QueryError",
    "RESOURCE_KIND",
    "RegistryEntry",
    "RegistryError",
    "ResourceDescription",
    "SpecCatalog",
    "SpecDefinition",
    "SpecError",
    "SpecVersion",
    "StorageError",
    "Store",
    "StructureError",
    "Unauthorized",
    "ValidationIssue",
    "ValidationRejected",
    "ValidationReport",
    "VersionConflict",
    "application_from_doc",
    "canonical_json_bytes",
    "canonical_serialize",
    "compare_versions",
    "decode_document",
    "evaluate_constraint",
    "load_spec",
    "match_application",
    "parse_application",
    "parse_resource",
    "resource_from_doc",
    "validate",
    "__version__",
]
