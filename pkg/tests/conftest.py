import json
from pathlib import Path

import pytest

from cireg.schema import SpecCatalog
from cireg.store import Store

FIXTURES_DIR = Path(__file__).parent / "fixtures"

# Known-good documents used across the suite; the value is the entry kind.
FIXTURE_KINDS = {
    "frontera": "resource",
    "campus-cluster": "resource",
    "stockyard": "resource",
    "jetstream": "resource",
    "ec2-fleet": "resource",
    "lab-workstation": "resource",
    "fastqc": "application",
    "jupyter-lab": "application",
    "stream-ingest": "application",
    "bwa-mem": "application",
}


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES_DIR / f"{name}.json").read_bytes()


def fixture_doc(name: str) -> dict:
    return json.loads(fixture_bytes(name))


@pytest.fixture(scope="session")
def catalog() -> SpecCatalog:
    return SpecCatalog.bundled()


@pytest.fixture(scope="session")
def resource_spec(catalog):
    return catalog.latest("resource")


@pytest.fixture(scope="session")
def application_spec(catalog):
    return catalog.latest("application")


@pytest.fixture()
def store(tmp_path):
    with Store(tmp_path / "data") as st:
        yield st


@pytest.fixture()
def fast_store(tmp_path):
    """Store without fsync, for tests that publish in bulk."""
    with Store(tmp_path / "data", fsync=False) as st:
        yield st
