"""HTTP interface over the registry store, validator, and matcher.

Collections are plural in URLs (/v1/resources/..., /v1/applications/...)
while stored kinds are singular. All responses are canonically encoded
JSON; errors share one body shape: {status, code, message, details?} with
a fixed code-to-status mapping so clients can dispatch without string
matching.

Reads are public. When a write token is configured, PUT and archive
require "Authorization: Bearer <token>".
"""

from __future__ import annotations

import base64
import binascii
import functools
import hmac
import logging
import time
from typing import Any

from fastapi import FastAPI, Request, Response

from .errors import NotFound, QueryError, RegistryError, Unauthorized
from .match import match_application
from .model import APPLICATION_KIND, RESOURCE_KIND, application_from_doc, canonical_json_bytes, decode_document
from .schema import SpecCatalog, SpecDefinition
from .store import FilterClause, FilterQuery, Store

log = logging.getLogger("cireg.service")

URL_KINDS = {"resources": RESOURCE_KIND, "applications": APPLICATION_KIND}

STATUS_BY_CODE = {
    "SyntaxError": 400,
    "StructureError": 400,
    "InvariantError": 400,
    "FormatError": 400,
    "QueryError": 400,
    "PathError": 400,
    "SpecError": 400,
    "Unauthorized": 401,
    "NotFound": 404,
    "VersionConflict": 409,
    "AlreadyArchived": 409,
    "KindConflict": 409,
    "Archived": 410,
    "ValidationRejected": 422,
    "StorageError": 500,
    "InternalError": 500,
}

DEFAULT_PAGE_LIMIT = 100
MAX_PAGE_LIMIT = 1000


def _json_response(body: Any, status: int = 200) -> Response:
    return Response(
        content=canonical_json_bytes(body),
        status_code=status,
        media_type="application/json",
    )


def _error_response(exc: RegistryError) -> Response:
    status = STATUS_BY_CODE.get(exc.code, 500)
    body: dict[str, Any] = {"status": status, "code": exc.code, "message": exc.message}
    details = exc.details()
    if details is not None:
        body["details"] = details
    return _json_response(body, status)


def _guarded(handler):
    @functools.wraps(handler)
    async def wrapper(*args, **kwargs):
        try:
            return await handler(*args, **kwargs)
        except RegistryError as exc:
            return _error_response(exc)

    return wrapper


def _kind_for(url_kind: str) -> str:
    kind = URL_KINDS.get(url_kind)
    if kind is None:
        raise NotFound(f"unknown collection {url_kind!r}")
    return kind


def _parse_version_param(raw: str | None) -> int | str:
    if raw is None or raw == "latest":
        return "latest"
    if raw.isdigit() and raw != "0":
        return int(raw)
    raise QueryError(f"version must be a positive integer or 'latest', got {raw!r}")


def _parse_if_match(raw: str | None) -> int | None:
    if raw is None:
        return None
    value = raw.strip().strip('"')
    if not value.isdigit():
        raise QueryError(f"If-Match must be a version number, got {raw!r}")
    return int(value)


def _encode_cursor(entry_id: str) -> str:
    return base64.urlsafe_b64encode(entry_id.encode()).decode("ascii")


def _decode_cursor(cursor: str) -> str:
    try:
        return base64.urlsafe_b64decode(cursor.encode("ascii")).decode()
    except (binascii.Error, UnicodeError, ValueError):
        raise QueryError("malformed cursor")


def _search_body(doc: Any, kind: str) -> tuple[FilterQuery, int, str | None]:
    if not isinstance(doc, dict):
        raise QueryError("search body must be a JSON object")
    allowed = {"clauses", "include_archived", "limit", "cursor"}
    for key in doc:
        if key not in allowed:
            raise QueryError(f"unknown search field {key!r}")
    raw_clauses = doc.get("clauses", [])
    if not isinstance(raw_clauses, list):
        raise QueryError("clauses must be a list")
    clauses = []
    for item in raw_clauses:
        if not isinstance(item, dict):
            raise QueryError("each clause must be an object")
        extra = set(item) - {"path", "op", "value"}
        if extra:
            raise QueryError(f"unknown clause field {sorted(extra)[0]!r}")
        if not isinstance(item.get("path"), str) or not isinstance(item.get("op"), str):
            raise QueryError("each clause needs string path and op")
        clauses.append(FilterClause(item["path"], item["op"], item.get("value")))
    include_archived = doc.get("include_archived", False)
    if not isinstance(include_archived, bool):
        raise QueryError("include_archived must be a boolean")
    limit = doc.get("limit", DEFAULT_PAGE_LIMIT)
    if isinstance(limit, bool) or not isinstance(limit, int) or not 1 <= limit <= MAX_PAGE_LIMIT:
        raise QueryError(f"limit must be an integer in 1..{MAX_PAGE_LIMIT}")
    cursor = doc.get("cursor")
    if cursor is not None and not isinstance(cursor, str):
        raise QueryError("cursor must be a string")
    query = FilterQuery(kind=kind, clauses=tuple(clauses), include_archived=include_archived)
    return query, limit, cursor


def create_app(
    store: Store,
    catalog: SpecCatalog | None = None,
    *,
    write_token: str | None = None,
) -> FastAPI:
    """Build the service around an open store and a rule-set catalog."""
    if catalog is None:
        catalog = SpecCatalog.bundled()
    app = FastAPI(title="cireg", docs_url=None, redoc_url=None, openapi_url=None)
    started = time.monotonic()

    def authorize_write(request: Request):
        if write_token is None:
            return
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not hmac.compare_digest(token.strip(), write_token):
            raise Unauthorized("a valid bearer token is required for writes")

    def spec_for(kind: str, pin: str | None) -> SpecDefinition:
        if pin is None:
            return catalog.latest(kind)
        return catalog.get(kind, pin)

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        millis = (time.perf_counter() - start) * 1000.0
        log.info("%s %s %d %.1fms", request.method, request.url.path, response.status_code, millis)
        return response

    @app.get("/v1/health")
    @_guarded
    async def health():
        return _json_response(
            {
                "status": "ok",
                "entry_count": store.count_entries(),
                "uptime_seconds": int(time.monotonic() - started),
            }
        )

    @app.get("/v1/specs")
    @_guarded
    async def list_specs():
        specs = [{"kind": kind, "version": version} for kind, version in catalog.versions()]
        return _json_response({"specs": specs})

    @app.get("/v1/specs/{kind}/{version}")
    @_guarded
    async def get_spec(kind: str, version: str):
        if kind not in URL_KINDS.values():
            raise NotFound(f"unknown rule-set kind {kind!r}")
        source = catalog.source(kind, version)
        return Response(content=source, media_type="application/json")

    @app.post("/v1/match")
    @_guarded
    async def match(request: Request, compatible_only: bool = False):
        doc = decode_document(await request.body())
        if not isinstance(doc, dict):
            raise QueryError("match body must be a JSON object")
        if "application_id" in doc:
            extra = set(doc) - {"application_id", "version"}
            if extra:
                raise QueryError(f"unknown match field {sorted(extra)[0]!r}")
            app_id = doc["application_id"]
            if not isinstance(app_id, str):
                raise QueryError("application_id must be a string")
            version = doc.get("version", "latest")
            if version != "latest" and (isinstance(version, bool) or not isinstance(version, int)):
                raise QueryError("version must be a positive integer or 'latest'")
            entry = store.get(app_id, version)
            if entry.kind != APPLICATION_KIND:
                raise NotFound(f"no application with id {app_id!r}")
            application = application_from_doc(entry.document(), lenient=True)
        else:
            application = application_from_doc(doc, lenient=True)
        results = match_application(
            application,
            store.active_entries(RESOURCE_KIND),
            spec=catalog.latest(RESOURCE_KIND),
        )
        if compatible_only:
            results = [r for r in results if r.compatible]
        return _json_response([r.to_doc() for r in results])

    @app.post("/v1/{url_kind}/search")
    @_guarded
    async def search(url_kind: str, request: Request):
        kind = _kind_for(url_kind)
        doc = decode_document(await request.body())
        query, limit, cursor = _search_body(doc, kind)
        hits = store.search(query)
        if cursor is not None:
            after = _decode_cursor(cursor)
            hits = [hit for hit in hits if hit["id"] > after]
        page = hits[:limit]
        body: dict[str, Any] = {"results": page}
        if len(hits) > limit:
            body["next_cursor"] = _encode_cursor(page[-1]["id"])
        return _json_response(body)

    @app.post("/v1/{url_kind}/{entry_id}/archive")
    @_guarded
    async def archive(url_kind: str, entry_id: str, request: Request):
        kind = _kind_for(url_kind)
        authorize_write(request)
        if store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        entry = store.archive(entry_id)
        return _json_response(entry.meta_doc())

    @app.get("/v1/{url_kind}/{entry_id}/history")
    @_guarded
    async def history(url_kind: str, entry_id: str):
        kind = _kind_for(url_kind)
        if store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        entries = store.history(entry_id)
        return _json_response({"versions": [entry.meta_doc() for entry in entries]})

    @app.put("/v1/{url_kind}/{entry_id}")
    @_guarded
    async def put_entry(
        url_kind: str,
        entry_id: str,
        request: Request,
        spec: str | None = None,
    ):
        kind = _kind_for(url_kind)
        authorize_write(request)
        expected = _parse_if_match(request.headers.get("if-match"))
        rule_set = spec_for(kind, spec)
        body = await request.body()
        entry, created = store.publish(
            entry_id, kind, body, rule_set, expected_version=expected
        )
        return _json_response(entry.meta_doc(), 201 if created else 200)

    @app.get("/v1/{url_kind}/{entry_id}")
    @_guarded
    async def get_entry(url_kind: str, entry_id: str, version: str | None = None):
        kind = _kind_for(url_kind)
        resolved = _parse_version_param(version)
        if store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        entry = store.get(entry_id, resolved)
        return _json_response(entry.to_doc())

    return app
