"""Command-line tool over the registry library and the remote service.

Two modes, exactly one active per invocation: ``--data-dir`` opens the
registry files directly, ``--endpoint`` talks to a running service. Both
produce identical output for the same operation on the same data, so a
pipeline written against a local directory keeps working when pointed at
a service.

Exit codes: 0 success, 1 domain error (validation failure, conflict,
not found, ...), 2 usage or I/O error. The error code and message go to
stderr; data goes to stdout. ``--output json`` prints canonically encoded
documents, byte-stable across invocations.
"""

from __future__ import annotations

import json
import logging
import socket
import sys
from dataclasses import dataclass
from typing import Any

import click

from .config import load_config
from .errors import ConfigError, NotFound, QueryError, RegistryError
from .match import match_application
from .model import (
    APPLICATION_KIND,
    ENTRY_KINDS,
    RESOURCE_KIND,
    application_from_doc,
    canonical_json_bytes,
    decode_document,
)
from .schema import SpecCatalog, validate
from .store import SEARCH_OPS, FilterClause, FilterQuery, Store

URL_KINDS = {RESOURCE_KIND: "resources", APPLICATION_KIND: "applications"}

KIND_CHOICE = click.Choice(ENTRY_KINDS)


class RemoteError(RegistryError):
    """An error body returned by the service, re-raised locally."""

    def __init__(self, code: str, message: str, details: Any = None):
        super().__init__(message)
        self.code = code
        self._details = details

    def details(self) -> Any:
        return self._details


@dataclass(slots=True)
class CliState:
    endpoint: str | None
    data_dir: str | None
    token: str | None
    output: str


class LocalBackend:
    """Operations directly against a registry data directory."""

    def __init__(self, data_dir: str, token: str | None):
        self.store = Store(data_dir)
        self.catalog = SpecCatalog.bundled()

    def close(self):
        self.store.close()

    def publish(self, kind, entry_id, payload, spec_pin, expected):
        spec = self.catalog.get(kind, spec_pin) if spec_pin else self.catalog.latest(kind)
        entry, created = self.store.publish(
            entry_id, kind, payload, spec, expected_version=expected
        )
        return entry.meta_doc(), created

    def get(self, kind, entry_id, version):
        if self.store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        return self.store.get(entry_id, version).to_doc()

    def archive(self, kind, entry_id):
        if self.store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        return self.store.archive(entry_id).meta_doc()

    def history(self, kind, entry_id):
        if self.store.kind_of(entry_id) != kind:
            raise NotFound(f"no {kind} with id {entry_id!r}")
        return {"versions": [e.meta_doc() for e in self.store.history(entry_id)]}

    def search(self, kind, clauses, include_archived):
        query = FilterQuery(kind=kind, clauses=tuple(clauses), include_archived=include_archived)
        return {"results": self.store.search(query)}

    def match(self, body, compatible_only):
        if "application_id" in body:
            entry = self.store.get(body["application_id"], body.get("version", "latest"))
            if entry.kind != APPLICATION_KIND:
                raise NotFound(f"no application with id {body['application_id']!r}")
            application = application_from_doc(entry.document(), lenient=True)
        else:
            application = application_from_doc(body, lenient=True)
        results = match_application(
            application,
            self.store.active_entries(RESOURCE_KIND),
            spec=self.catalog.latest(RESOURCE_KIND),
        )
        if compatible_only:
            results = [r for r in results if r.compatible]
        return [r.to_doc() for r in results]


class RemoteBackend:
    """Operations proxied to a running service."""

    def __init__(self, endpoint: str, token: str | None):
        import httpx

        headers = {}
        if token:
            headers["authorization"] = f"Bearer {token}"
        self.client = httpx.Client(base_url=endpoint.rstrip("/"), headers=headers, timeout=30.0)

    def close(self):
        self.client.close()

    def _checked(self, response) -> Any:
        if response.status_code >= 400:
            try:
                body = response.json()
            except ValueError:
                raise RemoteError("InternalError", f"HTTP {response.status_code}")
            raise RemoteError(
                body.get("code", "InternalError"),
                body.get("message", f"HTTP {response.status_code}"),
                body.get("details"),
            )
        return response.json()

    def publish(self, kind, entry_id, payload, spec_pin, expected):
        headers = {"content-type": "application/json"}
        if expected is not None:
            headers["if-match"] = str(expected)
        params = {"spec": spec_pin} if spec_pin else None
        response = self.client.put(
            f"/v1/{URL_KINDS[kind]}/{entry_id}", content=payload, headers=headers, params=params
        )
        return self._checked(response), response.status_code == 201

    def get(self, kind, entry_id, version):
        params = {} if version == "latest" else {"version": str(version)}
        return self._checked(self.client.get(f"/v1/{URL_KINDS[kind]}/{entry_id}", params=params))

    def archive(self, kind, entry_id):
        return self._checked(self.client.post(f"/v1/{URL_KINDS[kind]}/{entry_id}/archive"))

    def history(self, kind, entry_id):
        return self._checked(self.client.get(f"/v1/{URL_KINDS[kind]}/{entry_id}/history"))

    def search(self, kind, clauses, include_archived):
        results: list[dict] = []
        cursor = None
        while True:
            body: dict[str, Any] = {
                "clauses": [c.to_doc() for c in clauses],
                "include_archived": include_archived,
            }
            if cursor:
                body["cursor"] = cursor
            page = self._checked(
                self.client.post(
                    f"/v1/{URL_KINDS[kind]}/search", content=canonical_json_bytes(body)
                )
            )
            results.extend(page.get("results", []))
            cursor = page.get("next_cursor")
            if not cursor:
                return {"results": results}

    def match(self, body, compatible_only):
        params = {"compatible_only": "true"} if compatible_only else None
        return self._checked(
            self.client.post("/v1/match", content=canonical_json_bytes(body), params=params)
        )


def _open_backend(state: CliState):
    if state.endpoint and state.data_dir:
        raise click.UsageError("--endpoint and --data-dir are mutually exclusive")
    if state.endpoint:
        return RemoteBackend(state.endpoint, state.token)
    if state.data_dir:
        return LocalBackend(state.data_dir, state.token)
    raise click.UsageError("one of --endpoint or --data-dir is required")


def _emit(state: CliState, doc: Any, table_lines) -> None:
    if state.output == "json":
        click.echo(canonical_json_bytes(doc).decode("utf-8"))
    else:
        for line in table_lines(doc):
            click.echo(line)


def _fail(exc: RegistryError):
    click.echo(f"{exc.code}: {exc.message}", err=True)
    sys.exit(1)


def _read_file(path: str) -> bytes:
    try:
        with click.open_file(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise click.UsageError(f"cannot read {path}: {exc}")


def _parse_where(triples: tuple[str, ...]) -> list[FilterClause]:
    clauses = []
    for triple in triples:
        parts = triple.split(":", 2)
        if len(parts) == 2:
            path, op = parts
            if op != "exists":
                raise click.UsageError(f"--where {triple!r}: operator {op!r} needs a value")
            value = None
        elif len(parts) == 3:
            path, op, raw = parts
            if op == "exists":
                raise click.UsageError(f"--where {triple!r}: exists takes no value")
            try:
                value = json.loads(raw)
            except ValueError:
                value = raw
        else:
            raise click.UsageError(f"--where must be path:op:value, got {triple!r}")
        if op not in SEARCH_OPS:
            raise click.UsageError(f"--where {triple!r}: unknown operator {op!r}")
        try:
            clauses.append(FilterClause(path, op, value))
        except QueryError as exc:
            raise click.UsageError(f"--where {triple!r}: {exc.message}")
    return clauses


def _parse_cli_version(raw: str) -> int | str:
    if raw == "latest":
        return raw
    if raw.isdigit() and raw != "0":
        return int(raw)
    raise click.UsageError(f"--version must be a positive integer or 'latest', got {raw!r}")


# -- table renderers ---------------------------------------------------------


def _meta_lines(meta: dict) -> list[str]:
    order = ("id", "kind", "version", "status", "spec_version", "content_hash", "published_at")
    return [f"{key}: {meta[key]}" for key in order if key in meta]


def _entry_lines(doc: dict) -> list[str]:
    lines = _meta_lines(doc)
    lines.append("document:")
    pretty = json.dumps(doc.get("document", {}), indent=2, sort_keys=True, ensure_ascii=False)
    lines.extend("  " + line for line in pretty.splitlines())
    return lines


def _history_lines(doc: dict) -> list[str]:
    lines = []
    for meta in doc.get("versions", []):
        lines.append(
            f"version {meta['version']}  {meta['status']}  spec {meta['spec_version']}  "
            f"{meta['content_hash'][:12]}  {meta['published_at']}"
        )
    return lines


def _search_lines(doc: dict) -> list[str]:
    results = doc.get("results", [])
    lines = [f"{len(results)} result(s)"]
    for hit in results:
        summary = hit.get("summary", {})
        name = summary.get("name", "")
        lines.append(
            f"{hit['id']}  v{hit['version']}  {hit['status']}"
            + (f"  {name}" if name else "")
        )
    return lines


def _match_lines(results: list) -> list[str]:
    lines = [f"{len(results)} result(s)"]
    for result in results:
        verdicts = result.get("constraints", [])
        satisfied = sum(1 for v in verdicts if v.get("satisfied"))
        state = "compatible" if result.get("compatible") else "incompatible"
        lines.append(
            f"{result['resource_id']}  {state}  score {result['score']:.2f}  "
            f"{satisfied}/{len(verdicts)} constraints"
        )
    return lines


def _report_lines(report: dict) -> list[str]:
    lines = [
        f"valid: {'true' if report['valid'] else 'false'}",
        f"spec: {report['kind']} {report['spec_version']}",
    ]
    for issue in report.get("errors", []):
        lines.append(f"error {issue['path']} [{issue['code']}]: {issue['message']}")
    for issue in report.get("warnings", []):
        lines.append(f"warning {issue['path']} [{issue['code']}]: {issue['message']}")
    return lines


# -- commands ----------------------------------------------------------------


@click.group()
@click.option("--endpoint", metavar="URL", help="Service URL; remote mode.")
@click.option(
    "--data-dir",
    metavar="DIR",
    envvar="CIREG_DATA_DIR",
    help="Registry data directory; local mode.",
)
@click.option("--token", envvar="CIREG_WRITE_TOKEN", help="Bearer token for writes.")
@click.option(
    "--output",
    type=click.Choice(("json", "table")),
    default="table",
    show_default=True,
    help="Output format.",
)
@click.pass_context
def main(ctx, endpoint, data_dir, token, output):
    """Registry of resource and application descriptions."""
    ctx.obj = CliState(endpoint=endpoint, data_dir=data_dir, token=token, output=output)


@main.command("validate")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, allow_dash=True))
@click.option("--kind", type=KIND_CHOICE, required=True)
@click.option("--spec", "spec_pin", metavar="VERSION", help="Pin a rule-set version.")
@click.pass_obj
def validate_cmd(state: CliState, file, kind, spec_pin):
    """Validate a description document without storing it."""
    payload = _read_file(file)
    try:
        catalog = SpecCatalog.bundled()
        spec = catalog.get(kind, spec_pin) if spec_pin else catalog.latest(kind)
        report = validate(payload, spec)
    except RegistryError as exc:
        _fail(exc)
    _emit(state, report.to_doc(), _report_lines)
    if not report.valid:
        sys.exit(1)


@main.command("publish")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, allow_dash=True))
@click.option("--kind", type=KIND_CHOICE, required=True)
@click.option("--id", "entry_id", metavar="ID", help="Target id; defaults to the document's id.")
@click.option("--expect-version", type=click.IntRange(min=0), default=None)
@click.option("--spec", "spec_pin", metavar="VERSION", help="Pin a rule-set version.")
@click.pass_obj
def publish_cmd(state: CliState, file, kind, entry_id, expect_version, spec_pin):
    """Validate and store a new version of a description."""
    payload = _read_file(file)
    if entry_id is None:
        try:
            doc = decode_document(payload)
        except RegistryError as exc:
            _fail(exc)
        entry_id = doc.get("id") if isinstance(doc, dict) else None
        if not isinstance(entry_id, str):
            raise click.UsageError("document has no id field; pass --id")
    backend = _open_backend(state)
    try:
        meta, created = backend.publish(kind, entry_id, payload, spec_pin, expect_version)
        _emit(state, meta, lambda m: [("created" if created else "unchanged")] + _meta_lines(m))
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("get")
@click.argument("kind", type=KIND_CHOICE)
@click.argument("entry_id", metavar="ID")
@click.option("--version", default="latest", show_default=True, metavar="N|latest")
@click.pass_obj
def get_cmd(state: CliState, kind, entry_id, version):
    """Fetch one version of an entry (payload and metadata)."""
    resolved = _parse_cli_version(version)
    backend = _open_backend(state)
    try:
        _emit(state, backend.get(kind, entry_id, resolved), _entry_lines)
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("archive")
@click.argument("kind", type=KIND_CHOICE)
@click.argument("entry_id", metavar="ID")
@click.pass_obj
def archive_cmd(state: CliState, kind, entry_id):
    """Archive an id; explicit versions stay readable."""
    backend = _open_backend(state)
    try:
        _emit(state, backend.archive(kind, entry_id), _meta_lines)
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("history")
@click.argument("kind", type=KIND_CHOICE)
@click.argument("entry_id", metavar="ID")
@click.pass_obj
def history_cmd(state: CliState, kind, entry_id):
    """List every stored version of an id."""
    backend = _open_backend(state)
    try:
        _emit(state, backend.history(kind, entry_id), _history_lines)
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("search")
@click.argument("kind", type=KIND_CHOICE)
@click.option(
    "--where",
    "wheres",
    multiple=True,
    metavar="PATH:OP:VALUE",
    help="Filter clause; repeat to AND. Ops: eq ne lt le gt ge contains exists.",
)
@click.option("--include-archived", is_flag=True, default=False)
@click.pass_obj
def search_cmd(state: CliState, kind, wheres, include_archived):
    """Search latest versions with a conjunctive filter."""
    clauses = _parse_where(wheres)
    backend = _open_backend(state)
    try:
        _emit(state, backend.search(kind, clauses, include_archived), _search_lines)
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("match")
@click.argument("app_file", required=False, type=click.Path(exists=True, dir_okay=False, allow_dash=True))
@click.option("--app-id", metavar="ID", help="Match a stored application instead of a file.")
@click.option("--app-version", default="latest", show_default=True, metavar="N|latest")
@click.option("--compatible-only", is_flag=True, default=False)
@click.pass_obj
def match_cmd(state: CliState, app_file, app_id, app_version, compatible_only):
    """Match an application's constraints against stored resources."""
    if (app_file is None) == (app_id is None):
        raise click.UsageError("pass an application file or --app-id, not both")
    if app_file is not None:
        payload = _read_file(app_file)
        try:
            body = decode_document(payload)
        except RegistryError as exc:
            _fail(exc)
        if not isinstance(body, dict):
            raise click.UsageError("application file must hold a JSON object")
    else:
        body = {"application_id": app_id}
        resolved = _parse_cli_version(app_version)
        if resolved != "latest":
            body["version"] = resolved
    backend = _open_backend(state)
    try:
        _emit(state, backend.match(body, compatible_only), _match_lines)
    except RegistryError as exc:
        _fail(exc)
    finally:
        backend.close()


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", "data_dir_opt", metavar="DIR")
@click.option("--bind", metavar="HOST:PORT")
@click.option("--token", "token_opt", metavar="TOKEN")
@click.pass_obj
def serve_cmd(state: CliState, config_path, data_dir_opt, bind, token_opt):
    """Run the HTTP service until terminated."""
    import uvicorn

    from .service import create_app

    try:
        config = load_config(
            config_path,
            data_dir=data_dir_opt or state.data_dir,
            bind=bind,
            write_token=token_opt or state.token,
        )
    except ConfigError as exc:
        raise click.UsageError(exc.message)
    # Bind before touching the data directory so a busy port leaves no
    # half-created state behind.
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((config.host, config.port))
    except OSError as exc:
        sock.close()
        click.echo(f"BindError: cannot bind {config.bind}: {exc}", err=True)
        sys.exit(1)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        catalog = SpecCatalog.bundled()
        if config.spec_dir:
            catalog.load_directory(config.spec_dir)
        store = Store(config.data_dir)
    except RegistryError as exc:
        sock.close()
        _fail(exc)
    app = create_app(store, catalog, write_token=config.write_token)
    # A signal-triggered shutdown re-raises the signal after the server
    # drains, skipping the finally below; closing in the shutdown hook
    # covers that path (close is idempotent).
    app.router.on_shutdown.append(store.close)
    click.echo(f"serving on {config.bind}, data in {config.data_dir}", err=True)
    server = uvicorn.Server(
        uvicorn.Config(app, log_level="warning", access_log=False)
    )
    try:
        server.run(sockets=[sock])
    finally:
        store.close()


if __name__ == "__main__":
    main()
