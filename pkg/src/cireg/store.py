"""Durable versioned registry backed by an append-only event log.

Layout under the data directory::

    events.log                           one JSON record per publish/archive
    entries/<kind>/<id>/<version>.json   canonical payload bytes

The log is the source of truth for ordering and version metadata; the entry
files hold the payload bytes (and double as a human-browsable mirror of the
registry). A publish makes the payload file durable first (write to a temp
name, fsync, rename), then appends and fsyncs the log record, so every
record in the log has its payload on disk. Recovery replays the log,
truncates a torn final line, and verifies the content hash of every latest
payload it loads.

Concurrency: reads never take a lock; writes serialize per id, and log
appends serialize globally so sequence numbers stay contiguous. Version
numbers per id are contiguous from 1 and never reused. Archive flips a
per-id status flag shared by all versions; bytes are never deleted.
"""

from __future__ import annotations

import gc
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from . import docpath
from .errors import (
    AlreadyArchived,
    Archived,
    FormatError,
    KindConflict,
    NotFound,
    QueryError,
    StorageError,
    ValidationRejected,
    VersionConflict,
)
from .model import ENTRY_KINDS, canonical_json_bytes, decode_document
from .schema import SpecDefinition, SpecVersion, ValidationIssue, ValidationReport, validate

LOG_NAME = "events.log"
ENTRIES_DIR = "entries"

SEARCH_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "contains", "exists")
INDEXED_PATHS = ("high_level.resource_type", "high_level.category", "scheduler.scheduler_type")

_SCALAR = (str, int, float, bool)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def _format_ts(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_ts(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def content_hash(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True, slots=True)
class RegistryEntry:
    """One stored version of a description.

    ``status`` reflects the current lifecycle flag of the id as a whole; all
    versions of an archived id read back as archived.
    """

    id: str
    kind: str
    version: int
    status: str
    payload: bytes
    content_hash: str
    spec_version: SpecVersion
    published_at: datetime
    doc: dict | None = field(default=None, compare=False, repr=False)

    def document(self) -> dict:
        """The payload parsed back to a JSON object."""
        if self.doc is not None:
            return self.doc
        return json.loads(self.payload)

    def meta_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "version": self.version,
            "status": self.status,
            "content_hash": self.content_hash,
            "spec_version": str(self.spec_version),
            "published_at": _format_ts(self.published_at),
        }

    def to_doc(self) -> dict[str, Any]:
        doc = self.meta_doc()
        doc["document"] = self.document()
        return doc


@dataclass(frozen=True, slots=True)
class FilterClause:
    """One ``path op value`` condition.

    Ordering operators take a number (numeric comparison) or a string
    (version comparison); paths that cross lists match existentially.
    """

    path: str
    op: str
    value: Any = None

    def __post_init__(self):
        if not docpath.is_valid_path(self.path):
            raise QueryError(f"malformed path {self.path!r}")
        if self.op not in SEARCH_OPS:
            raise QueryError(f"unknown operator {self.op!r}")
        if self.op == "exists":
            if self.value is not None:
                raise QueryError("exists takes no value")
            return
        if self.op in ("eq", "ne"):
            if not isinstance(self.value, _SCALAR):
                raise QueryError(f"{self.op} requires a scalar value")
        elif self.op == "contains":
            if not isinstance(self.value, str):
                raise QueryError("contains requires a string value")
        else:
            if isinstance(self.value, bool) or not isinstance(self.value, (str, int, float)):
                raise QueryError(f"{self.op} requires a number or a version string")
            if isinstance(self.value, str) and self.value == "":
                raise QueryError(f"{self.op} requires a non-empty version string")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"path": self.path, "op": self.op}
        if self.op != "exists":
            doc["value"] = self.value
        return doc


@dataclass(frozen=True, slots=True)
class FilterQuery:
    """A conjunctive filter over the latest version of every id."""

    kind: str
    clauses: tuple[FilterClause, ...] = ()
    include_archived: bool = False

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise QueryError(f"unknown kind {self.kind!r}")
        if not isinstance(self.clauses, tuple):
            object.__setattr__(self, "clauses", tuple(self.clauses))


def _clause_matches(doc: dict, clause: FilterClause) -> bool:
    from .versions import compare_versions

    leaves = docpath.resolve_path(doc, clause.path)
    op = clause.op
    if op == "exists":
        return bool(leaves)
    value = clause.value
    if op == "eq":
        return any(_json_eq(leaf, value) for leaf in leaves)
    if op == "ne":
        return any(not _json_eq(leaf, value) for leaf in leaves)
    if op == "contains":
        return any(isinstance(leaf, str) and value in leaf for leaf in leaves)
    # ordering operators
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        for leaf in leaves:
            if isinstance(leaf, (int, float)) and not isinstance(leaf, bool):
                if _ordering_holds(op, (leaf > value) - (leaf < value)):
                    return True
        return False
    for leaf in leaves:
        if isinstance(leaf, str) and leaf:
            if _ordering_holds(op, compare_versions(leaf, value)):
                return True
    return False


def _ordering_holds(op: str, sign: int) -> bool:
    if op == "lt":
        return sign < 0
    if op == "le":
        return sign <= 0
    if op == "gt":
        return sign > 0
    return sign >= 0


def _json_eq(a: Any, b: Any) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    return type(a) is type(b) and a == b


@dataclass(slots=True)
class _VersionMeta:
    content_hash: str
    spec_version: SpecVersion
    published_at: datetime


class _IdState:
    __slots__ = ("kind", "status", "versions", "latest_payload", "latest_doc", "lock")

    def __init__(self, kind: str):
        self.kind = kind
        self.status = "active"
        self.versions: list[_VersionMeta] = []
        self.latest_payload: bytes = b""
        self.latest_doc: dict = {}
        self.lock = threading.Lock()


class Store:
    """File-backed registry with validation-gated, versioned publishes."""

    def __init__(self, data_dir: str | Path, *, fsync: bool = True):
        self._dir = Path(data_dir)
        self._entries_dir = self._dir / ENTRIES_DIR
        self._fsync = fsync
        self._ids: dict[str, _IdState] = {}
        self._index: dict[str, dict[Any, set[str]]] = {p: {} for p in INDEXED_PATHS}
        self._seq = 0
        self._mutations = 0
        self._entry_cache: dict[str, tuple[int, list[RegistryEntry]]] = {}
        self._global = threading.Lock()
        try:
            self._dir.mkdir(parents=True, exist_ok=True)
            for kind in ENTRY_KINDS:
                (self._entries_dir / kind).mkdir(parents=True, exist_ok=True)
            self._replay()
            self._log = open(self._dir / LOG_NAME, "ab")
        except OSError as exc:
            raise StorageError(f"cannot open data directory {self._dir}: {exc}") from exc

    # -- lifecycle ---------------------------------------------------------

    def close(self):
        with self._global:
            if not self._log.closed:
                self._log.flush()
                if self._fsync:
                    os.fsync(self._log.fileno())
                self._log.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info):
        self.close()

    # -- recovery ----------------------------------------------------------

    def _replay(self):
        log_path = self._dir / LOG_NAME
        if not log_path.exists():
            return
        keep = 0
        with open(log_path, "rb") as fh:
            raw = fh.read()
        offset = 0
        records = []
        while offset < len(raw):
            newline = raw.find(b"\n", offset)
            if newline < 0:
                break  # torn final line, truncated below
            line = raw[offset:newline]
            try:
                record = json.loads(line)
            except ValueError:
                if newline == len(raw) - 1:
                    break  # torn final line that still got its newline byte
                raise StorageError(f"corrupt event log record at byte {offset}")
            records.append(record)
            offset = newline + 1
            keep = offset
        if keep < len(raw):
            with open(log_path, "r+b") as fh:
                fh.truncate(keep)
        for record in records:
            self._apply_record(record)
        for entry_id, state in self._ids.items():
            if not state.versions:
                continue
            latest = len(state.versions)
            payload = self._read_payload(state.kind, entry_id, latest)
            digest = content_hash(payload)
            if digest != state.versions[-1].content_hash:
                raise StorageError(
                    f"payload hash mismatch for {entry_id} version {latest}"
                )
            state.latest_payload = payload
            state.latest_doc = json.loads(payload)
            self._index_add(entry_id, state.latest_doc)

    def _apply_record(self, record: dict):
        try:
            seq = record["seq"]
            op = record["op"]
            entry_id = record["id"]
            kind = record["kind"]
            version = record["version"]
            digest = record["content_hash"]
            spec_version = SpecVersion.parse(record["spec_version"])
            published_at = _parse_ts(record["published_at"])
        except (KeyError, TypeError, ValueError, FormatError) as exc:
            raise StorageError(f"malformed event log record: {exc}")
        if seq != self._seq + 1:
            raise StorageError(f"event log sequence gap at {seq}")
        self._seq = seq
        state = self._ids.get(entry_id)
        if state is None:
            state = _IdState(kind)
            self._ids[entry_id] = state
        elif state.kind != kind:
            raise StorageError(f"event log changes kind of {entry_id}")
        if op == "publish":
            if version != len(state.versions) + 1:
                raise StorageError(f"event log version gap for {entry_id} at {version}")
            state.versions.append(_VersionMeta(digest, spec_version, published_at))
            state.status = "active"
        elif op == "archive":
            if state.status == "archived" or not state.versions:
                raise StorageError(f"event log archives {entry_id} twice or before publish")
            state.status = "archived"
        else:
            raise StorageError(f"unknown event log op {op!r}")

    # -- paths and files ----------------------------------------------------

    def _payload_path(self, kind: str, entry_id: str, version: int) -> Path:
        return self._entries_dir / kind / entry_id / f"{version}.json"

    def _read_payload(self, kind: str, entry_id: str, version: int) -> bytes:
        path = self._payload_path(kind, entry_id, version)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise StorageError(f"missing payload for {entry_id} version {version}: {exc}")

    def _write_payload(self, kind: str, entry_id: str, version: int, payload: bytes):
        path = self._payload_path(kind, entry_id, version)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "wb") as fh:
                fh.write(payload)
                fh.flush()
                if self._fsync:
                    os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageError(f"cannot write payload for {entry_id}: {exc}")

    def _append_record(self, record: dict):
        with self._global:
            record["seq"] = self._seq + 1
            line = canonical_json_bytes(record) + b"\n"
            try:
                self._log.write(line)
                self._log.flush()
                if self._fsync:
                    os.fsync(self._log.fileno())
            except (OSError, ValueError) as exc:
                raise StorageError(f"cannot append to event log: {exc}")
            self._seq += 1
            self._mutations += 1

    # -- index maintenance ---------------------------------------------------

    def _index_add(self, entry_id: str, doc: dict):
        for path, buckets in self._index.items():
            for leaf in docpath.resolve_path(doc, path):
                if isinstance(leaf, _SCALAR):
                    buckets.setdefault(leaf, set()).add(entry_id)

    def _index_remove(self, entry_id: str, doc: dict):
        for path, buckets in self._index.items():
            for leaf in docpath.resolve_path(doc, path):
                bucket = buckets.get(leaf)
                if bucket is not None:
                    bucket.discard(entry_id)

    # -- operations ----------------------------------------------------------

    def publish(
        self,
        entry_id: str,
        kind: str,
        document: bytes | str,
        spec: SpecDefinition,
        *,
        expected_version: int | None = None,
    ) -> tuple[RegistryEntry, bool]:
        """Validate and store a new version of an entry.

        Returns the stored entry and whether a new version was created;
        republishing the identical canonical bytes of the current latest is
        a no-op that returns the existing entry. When ``expected_version``
        is given the publish only proceeds if it equals the current latest
        version (0 for an id that must not exist yet).
        """
        if kind not in ENTRY_KINDS:
            raise QueryError(f"unknown kind {kind!r}")
        if spec.kind != kind:
            raise ValueError(f"rule set is for kind {spec.kind!r}, not {kind!r}")
        raw = decode_document(document) if isinstance(document, (bytes, str)) else document
        report = validate(raw, spec)
        if not report.valid:
            raise ValidationRejected(report)
        if raw.get("id") != entry_id:
            mismatch = ValidationReport(
                spec_version=spec.version,
                kind=spec.kind,
                errors=(
                    ValidationIssue(
                        "id",
                        "cross_field",
                        f"document id {raw.get('id')!r} does not match target id {entry_id!r}",
                    ),
                ),
                warnings=(),
            )
            raise ValidationRejected(mismatch)
        payload = canonical_json_bytes(raw)
        digest = content_hash(payload)
        with self._global:
            state = self._ids.get(entry_id)
            if state is None:
                state = _IdState(kind)
                self._ids[entry_id] = state
        if state.kind != kind:
            raise KindConflict(f"id {entry_id!r} already exists with kind {state.kind!r}")
        with state.lock:
            current = len(state.versions)
            if expected_version is not None and expected_version != current:
                raise VersionConflict(expected_version, current)
            if current and state.status == "active" and state.versions[-1].content_hash == digest:
                return self._entry(entry_id, state, current), False
            version = current + 1
            published_at = _utc_now()
            self._write_payload(kind, entry_id, version, payload)
            self._append_record(
                {
                    "op": "publish",
                    "id": entry_id,
                    "kind": kind,
                    "version": version,
                    "content_hash": digest,
                    "spec_version": str(spec.version),
                    "published_at": _format_ts(published_at),
                }
            )
            old_doc = state.latest_doc if state.versions else None
            state.versions.append(_VersionMeta(digest, spec.version, published_at))
            state.status = "active"
            state.latest_payload = payload
            state.latest_doc = raw
            with self._global:
                if old_doc is not None:
                    self._index_remove(entry_id, old_doc)
                self._index_add(entry_id, raw)
            return self._entry(entry_id, state, version), True

    def _entry(self, entry_id: str, state: _IdState, version: int) -> RegistryEntry:
        meta = state.versions[version - 1]
        latest = len(state.versions)
        if version == latest:
            payload = state.latest_payload
            doc = state.latest_doc
        else:
            payload = self._read_payload(state.kind, entry_id, version)
            if content_hash(payload) != meta.content_hash:
                raise StorageError(f"payload hash mismatch for {entry_id} version {version}")
            doc = None
        return RegistryEntry(
            id=entry_id,
            kind=state.kind,
            version=version,
            status=state.status,
            payload=payload,
            content_hash=meta.content_hash,
            spec_version=meta.spec_version,
            published_at=meta.published_at,
            doc=doc,
        )

    def _state(self, entry_id: str) -> _IdState:
        state = self._ids.get(entry_id)
        if state is None or not state.versions:
            raise NotFound(f"no entry with id {entry_id!r}")
        return state

    def kind_of(self, entry_id: str) -> str:
        return self._state(entry_id).kind

    def get(self, entry_id: str, version: int | str = "latest") -> RegistryEntry:
        """Fetch one version of an entry.

        ``version`` is a positive integer or "latest". Latest reads of an
        archived id raise Archived; explicit versions always read back.
        """
        state = self._state(entry_id)
        if version == "latest":
            if state.status == "archived":
                raise Archived(f"entry {entry_id!r} is archived; read an explicit version")
            resolved = len(state.versions)
        else:
            if isinstance(version, bool) or not isinstance(version, int):
                raise QueryError("version must be a positive integer or 'latest'")
            resolved = version
            if resolved < 1 or resolved > len(state.versions):
                raise NotFound(f"entry {entry_id!r} has no version {resolved}")
        return self._entry(entry_id, state, resolved)

    def archive(self, entry_id: str) -> RegistryEntry:
        """Flip an id to archived. Its versions stay readable explicitly."""
        state = self._state(entry_id)
        with state.lock:
            if state.status == "archived":
                raise AlreadyArchived(f"entry {entry_id!r} is already archived")
            latest = len(state.versions)
            meta = state.versions[-1]
            self._append_record(
                {
                    "op": "archive",
                    "id": entry_id,
                    "kind": state.kind,
                    "version": latest,
                    "content_hash": meta.content_hash,
                    "spec_version": str(meta.spec_version),
                    "published_at": _format_ts(_utc_now()),
                }
            )
            state.status = "archived"
            return self._entry(entry_id, state, latest)

    def history(self, entry_id: str) -> list[RegistryEntry]:
        """Every stored version of an id, ascending, including archived ids."""
        state = self._state(entry_id)
        return [self._entry(entry_id, state, v) for v in range(1, len(state.versions) + 1)]

    def search(self, query: FilterQuery) -> list[dict[str, Any]]:
        """Evaluate a conjunctive filter over latest versions.

        Returns hits sorted by id ascending, each with the latest version
        number and a short summary. Archived ids are skipped unless the
        query asks for them.
        """
        candidates = self._candidate_ids(query)
        matched: list[str] = []
        for entry_id in candidates:
            state = self._ids.get(entry_id)
            if state is None or not state.versions or state.kind != query.kind:
                continue
            if state.status == "archived" and not query.include_archived:
                continue
            doc = state.latest_doc
            if all(_clause_matches(doc, clause) for clause in query.clauses):
                matched.append(entry_id)
        matched.sort()
        hits = []
        for entry_id in matched:
            state = self._ids[entry_id]
            hits.append(
                {
                    "id": entry_id,
                    "kind": state.kind,
                    "version": len(state.versions),
                    "status": state.status,
                    "summary": _summarize(state.latest_doc),
                }
            )
        return hits

    def _candidate_ids(self, query: FilterQuery) -> Iterable[str]:
        best: set[str] | None = None
        for clause in query.clauses:
            if clause.op == "eq" and clause.path in self._index:
                bucket = self._index[clause.path].get(clause.value, set())
                if best is None or len(bucket) < len(best):
                    best = bucket
        if best is None:
            return list(self._ids)
        return sorted(best)  # snapshot; concurrent writers may mutate the set

    def active_entries(self, kind: str) -> list[RegistryEntry]:
        """Latest entries of every active id of a kind, sorted by id.

        The list is cached against the store's mutation counter so repeated
        calls between writes are cheap.
        """
        cached = self._entry_cache.get(kind)
        if cached is not None and cached[0] == self._mutations:
            return cached[1]
        generation = self._mutations
        entries = []
        # Building one entry per id is a large burst of acyclic allocations;
        # deferring the cyclic collector until it is done keeps it from
        # rescanning the registry heap every few thousand entries.
        gc_was_enabled = gc.isenabled()
        if gc_was_enabled:
            gc.disable()
        try:
            for entry_id in sorted(self._ids):
                state = self._ids[entry_id]
                if state.kind != kind or state.status != "active" or not state.versions:
                    continue
                entries.append(self._entry(entry_id, state, len(state.versions)))
        finally:
            if gc_was_enabled:
                gc.enable()
        self._entry_cache[kind] = (generation, entries)
        return entries

    def count_entries(self) -> int:
        """Total stored versions across all ids."""
        return sum(len(state.versions) for state in self._ids.values())

    def count_ids(self) -> int:
        return sum(1 for state in self._ids.values() if state.versions)


def _summarize(doc: dict) -> dict[str, Any]:
    high_level = doc.get("high_level")
    summary: dict[str, Any] = {}
    if isinstance(high_level, dict):
        name = high_level.get("name")
        if name is not None:
            summary["name"] = name
        entry_type = high_level.get("resource_type") or high_level.get("app_type")
        if entry_type is not None:
            summary["type"] = entry_type
        category = high_level.get("category")
        if category is not None:
            summary["category"] = category
    return summary
