import json
import os
import signal
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import httpx
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from cireg.cli import main
from cireg.model import canonical_json_bytes
from cireg.service import create_app
from cireg.store import Store

from conftest import FIXTURE_KINDS, FIXTURES_DIR, fixture_doc

runner = CliRunner()


def invoke(*args, **kwargs):
    return runner.invoke(main, list(args), catch_exceptions=False, **kwargs)


def fixture_path(name):
    return str(FIXTURES_DIR / f"{name}.json")


@pytest.fixture()
def data_dir(tmp_path):
    return str(tmp_path / "registry")


def publish(data_dir, name, *extra):
    kind = FIXTURE_KINDS[name]
    return invoke(
        "--data-dir", data_dir, "publish", "--kind", kind, fixture_path(name), *extra
    )


# -- backend selection --------------------------------------------------------


def test_requires_exactly_one_backend(data_dir):
    neither = invoke("get", "resource", "some-id")
    assert neither.exit_code == 2
    both = invoke(
        "--data-dir", data_dir, "--endpoint", "http://localhost:1",
        "get", "resource", "some-id",
    )
    assert both.exit_code == 2


# -- validate -----------------------------------------------------------------


def test_validate_ok():
    result = invoke("validate", "--kind", "resource", fixture_path("frontera"))
    assert result.exit_code == 0
    assert "valid" in result.output


def test_validate_reports_and_fails(tmp_path):
    doc = fixture_doc("frontera")
    del doc["high_level"]["name"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = invoke("validate", "--kind", "resource", str(bad))
    assert result.exit_code == 1
    assert "high_level.name" in result.output


def test_validate_json_output(tmp_path):
    doc = fixture_doc("frontera")
    doc["id"] = "wrong id!"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = invoke("--output", "json", "validate", "--kind", "resource", str(bad))
    assert result.exit_code == 1
    report = json.loads(result.stdout)
    assert report["valid"] is False
    assert report["errors"][0]["path"] == "id"


def test_validate_usage_errors(tmp_path):
    assert invoke("validate", fixture_path("frontera")).exit_code == 2
    assert invoke("validate", "--kind", "resource", str(tmp_path / "nope.json")).exit_code == 2
    assert invoke("validate", "--kind", "gadget", fixture_path("frontera")).exit_code == 2


# -- local publish / get / archive / history ----------------------------------


def test_publish_and_get_round_trip(data_dir):
    result = publish(data_dir, "frontera")
    assert result.exit_code == 0, result.output
    assert "created" in result.output
    again = publish(data_dir, "frontera")
    assert again.exit_code == 0
    assert "unchanged" in again.output

    got = invoke(
        "--data-dir", data_dir, "--output", "json",
        "get", "resource", "frontera.tacc.utexas.edu",
    )
    assert got.exit_code == 0
    body = json.loads(got.stdout)
    assert body["document"] == fixture_doc("frontera")
    assert body["version"] == 1
    # json output is the canonical encoding
    assert got.stdout.strip() == canonical_json_bytes(body).decode()


def test_publish_invalid_is_domain_error(data_dir, tmp_path):
    doc = fixture_doc("frontera")
    doc["scheduler"]["scheduler_type"] = "cron"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = invoke("--data-dir", data_dir, "publish", "--kind", "resource", str(bad))
    assert result.exit_code == 1
    assert result.stderr.startswith("ValidationRejected:")


def test_publish_expect_version(data_dir):
    assert publish(data_dir, "jetstream", "--expect-version", "0").exit_code == 0
    stale = publish(data_dir, "jetstream", "--expect-version", "0")
    assert stale.exit_code == 1
    assert stale.stderr.startswith("VersionConflict:")


def test_get_missing_is_domain_error(data_dir):
    result = invoke("--data-dir", data_dir, "get", "resource", "absent-id")
    assert result.exit_code == 1
    assert result.stderr.startswith("NotFound:")


def test_archive_and_history(data_dir):
    publish(data_dir, "fastqc")
    archived = invoke(
        "--data-dir", data_dir, "archive", "application", "fastqc.bio.tools"
    )
    assert archived.exit_code == 0
    again = invoke(
        "--data-dir", data_dir, "archive", "application", "fastqc.bio.tools"
    )
    assert again.exit_code == 1
    assert again.stderr.startswith("AlreadyArchived:")

    latest = invoke(
        "--data-dir", data_dir, "get", "application", "fastqc.bio.tools"
    )
    assert latest.exit_code == 1
    assert latest.stderr.startswith("Archived:")
    pinned = invoke(
        "--data-dir", data_dir, "get", "application",
        "fastqc.bio.tools", "--version", "1",
    )
    assert pinned.exit_code == 0

    history = invoke(
        "--data-dir", data_dir, "--output", "json",
        "history", "application", "fastqc.bio.tools",
    )
    body = json.loads(history.stdout)
    assert [v["version"] for v in body["versions"]] == [1]
    assert body["versions"][0]["status"] == "archived"


# -- search -------------------------------------------------------------------


def test_search_where_clauses(data_dir):
    for name in ("frontera", "stockyard", "jetstream"):
        publish(data_dir, name)
    result = invoke(
        "--data-dir", data_dir, "--output", "json",
        "search", "resource",
        "--where", "scheduler.scheduler_type:eq:slurm",
    )
    assert result.exit_code == 0
    assert [r["id"] for r in json.loads(result.stdout)["results"]] == [
        "frontera.tacc.utexas.edu"
    ]

    numeric = invoke(
        "--data-dir", data_dir, "--output", "json",
        "search", "resource",
        "--where", "hardware.cores_per_node:ge:48",
    )
    hits = {r["id"] for r in json.loads(numeric.stdout)["results"]}
    assert hits == {"frontera.tacc.utexas.edu", "jetstream2.exosphere.app"}

    exists = invoke(
        "--data-dir", data_dir, "--output", "json",
        "search", "resource", "--where", "hardware.accelerators:exists",
    )
    assert [r["id"] for r in json.loads(exists.stdout)["results"]] == [
        "frontera.tacc.utexas.edu"
    ]

    conjunction = invoke(
        "--data-dir", data_dir, "--output", "json",
        "search", "resource",
        "--where", "high_level.resource_type:eq:compute",
        "--where", "scheduler.scheduler_type:eq:fork",
    )
    assert [r["id"] for r in json.loads(conjunction.stdout)["results"]] == [
        "jetstream2.exosphere.app"
    ]


def test_search_include_archived(data_dir):
    publish(data_dir, "frontera")
    invoke("--data-dir", data_dir, "archive", "resource", "frontera.tacc.utexas.edu")
    plain = invoke("--data-dir", data_dir, "--output", "json", "search", "resource")
    assert json.loads(plain.stdout)["results"] == []
    wide = invoke(
        "--data-dir", data_dir, "--output", "json",
        "search", "resource", "--include-archived",
    )
    assert len(json.loads(wide.stdout)["results"]) == 1


def test_search_where_parse_errors(data_dir):
    # malformed clauses are caught before touching the registry: usage errors
    missing_op = invoke(
        "--data-dir", data_dir, "search", "resource", "--where", "path_only"
    )
    assert missing_op.exit_code == 2
    assert "path:op" in missing_op.stderr
    unknown_op = invoke(
        "--data-dir", data_dir, "search", "resource", "--where", "a:like:b"
    )
    assert unknown_op.exit_code == 2
    assert "like" in unknown_op.stderr


# -- match --------------------------------------------------------------------


def test_match_with_app_file(data_dir):
    for name in ("frontera", "stockyard", "jetstream"):
        publish(data_dir, name)
    result = invoke(
        "--data-dir", data_dir, "--output", "json", "match", fixture_path("bwa-mem")
    )
    assert result.exit_code == 0
    rows = json.loads(result.stdout)
    assert len(rows) == 3
    assert {"resource_id", "compatible", "score", "constraints"} <= set(rows[0])


def test_match_by_stored_id(data_dir):
    publish(data_dir, "frontera")
    publish(data_dir, "fastqc")
    result = invoke(
        "--data-dir", data_dir, "--output", "json", "match", "--app-id", "fastqc.bio.tools"
    )
    assert result.exit_code == 0
    assert [r["resource_id"] for r in json.loads(result.stdout)] == [
        "frontera.tacc.utexas.edu"
    ]


def test_match_compatible_only(data_dir):
    publish(data_dir, "frontera")
    publish(data_dir, "stockyard")
    publish(data_dir, "fastqc")
    result = invoke(
        "--data-dir", data_dir, "--output", "json",
        "match", "--app-id", "fastqc.bio.tools", "--compatible-only",
    )
    rows = json.loads(result.stdout)
    assert all(r["compatible"] for r in rows)


def test_match_requires_exactly_one_source(data_dir):
    assert invoke("--data-dir", data_dir, "match").exit_code == 2
    assert invoke(
        "--data-dir", data_dir, "match", fixture_path("bwa-mem"), "--app-id", "x"
    ).exit_code == 2


# -- remote mode: byte equivalence with local mode -----------------------------


@pytest.fixture()
def remote(tmp_path, catalog, monkeypatch):
    """Route CLI remote mode through an in-process service."""
    store = Store(tmp_path / "remote-data", fsync=False)
    app = create_app(store, catalog, write_token="cli-token")

    def fake_client(base_url=None, headers=None, timeout=None):
        client = TestClient(app)
        client.headers.update(headers or {})
        return client

    monkeypatch.setattr(httpx, "Client", fake_client)
    yield
    store.close()


REMOTE = ("--endpoint", "http://registry.invalid", "--token", "cli-token")


def test_remote_and_local_outputs_are_identical(remote, data_dir):
    for name in ("frontera", "stockyard", "jetstream", "fastqc"):
        local_pub = publish(data_dir, name)
        remote_pub = invoke(*REMOTE, "publish", "--kind", FIXTURE_KINDS[name], fixture_path(name))
        assert local_pub.exit_code == remote_pub.exit_code == 0

    commands = [
        ("get", "resource", "frontera.tacc.utexas.edu"),
        ("history", "resource", "frontera.tacc.utexas.edu"),
        ("search", "resource", "--where", "high_level.resource_type:eq:compute"),
        ("search", "resource"),
        ("match", "--app-id", "fastqc.bio.tools"),
        ("match", fixture_path("bwa-mem")),
    ]
    for command in commands:
        for output in ("json", "table"):
            local = invoke("--data-dir", data_dir, "--output", output, *command)
            via_http = invoke(*REMOTE, "--output", output, *command)
            assert local.exit_code == via_http.exit_code == 0, command
            assert local.stdout == via_http.stdout, (command, output)


def test_remote_errors_map_to_domain_exit(remote):
    result = invoke(*REMOTE, "get", "resource", "absent-id")
    assert result.exit_code == 1
    assert result.stderr.startswith("NotFound:")


def test_remote_unauthorized(remote):
    result = invoke(
        "--endpoint", "http://registry.invalid", "--token", "wrong",
        "publish", "--kind", "resource", fixture_path("frontera"),
    )
    assert result.exit_code == 1
    assert result.stderr.startswith("Unauthorized:")


# -- serve --------------------------------------------------------------------


def test_serve_requires_data_dir():
    assert invoke("serve").exit_code == 2


def test_serve_rejects_bad_bind(data_dir):
    assert invoke("serve", "--data-dir", data_dir, "--bind", "nonsense").exit_code == 2


def test_serve_busy_port_fails_cleanly(tmp_path):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    port = blocker.getsockname()[1]
    try:
        data = tmp_path / "never-created"
        result = invoke("serve", "--data-dir", str(data), "--bind", f"127.0.0.1:{port}")
        assert result.exit_code == 1
        assert "BindError" in result.stderr
        # the store was never opened, so no data directory appeared
        assert not data.exists()
    finally:
        blocker.close()


@pytest.mark.slow
def test_serve_subprocess_round_trip(tmp_path):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    data = str(tmp_path / "served")
    proc = subprocess.Popen(
        [sys.executable, "-m", "cireg.cli", "serve",
         "--data-dir", data, "--bind", f"127.0.0.1:{port}"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 20
        while True:
            try:
                with urllib.request.urlopen(f"{base}/v1/health", timeout=1) as response:
                    assert json.loads(response.read())["status"] == "ok"
                break
            except OSError:
                if time.time() > deadline:
                    raise AssertionError("service did not come up")
                time.sleep(0.1)

        published = invoke("--endpoint", base, "publish", "--kind", "resource",
                           fixture_path("frontera"))
        assert published.exit_code == 0, published.output
        fetched = invoke("--endpoint", base, "--output", "json",
                         "get", "resource", "frontera.tacc.utexas.edu")
        assert json.loads(fetched.stdout)["document"] == fixture_doc("frontera")
    finally:
        proc.send_signal(signal.SIGTERM)
        # after draining, the server re-raises the signal so the exit
        # status reflects it (0 would mean a non-signal exit path)
        assert proc.wait(timeout=15) in (0, -signal.SIGTERM)

    # a clean shutdown leaves a readable store behind
    with Store(Path(data)) as store:
        assert store.count_entries() == 1


def test_env_var_backend(data_dir, tmp_path):
    result = runner.invoke(
        main,
        ["publish", "--kind", "resource", fixture_path("frontera")],
        env={"CIREG_DATA_DIR": data_dir},
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    assert os.environ.get("CIREG_DATA_DIR") is None
