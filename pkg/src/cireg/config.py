"""Service configuration from a JSON file and environment overrides.

Precedence: explicit arguments beat environment variables beat the config
file beat defaults. Environment variables: CIREG_BIND, CIREG_DATA_DIR,
CIREG_WRITE_TOKEN, CIREG_SPEC_DIR.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

DEFAULT_BIND = "127.0.0.1:8300"

_FILE_KEYS = ("bind", "data_dir", "write_token", "spec_dir")


@dataclass(frozen=True, slots=True)
class ServiceConfig:
    """Everything the HTTP service needs to start."""

    data_dir: str
    bind: str = DEFAULT_BIND
    write_token: str | None = None
    spec_dir: str | None = None

    def __post_init__(self):
        if not self.data_dir:
            raise ConfigError("data_dir is required")
        host, _, port = self.bind.rpartition(":")
        if not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise ConfigError(f"bind must be host:port, got {self.bind!r}")

    @property
    def host(self) -> str:
        return self.bind.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.bind.rpartition(":")[2])


def load_config(
    path: str | Path | None = None,
    *,
    data_dir: str | None = None,
    bind: str | None = None,
    write_token: str | None = None,
    spec_dir: str | None = None,
) -> ServiceConfig:
    """Merge a config file, the environment, and explicit overrides."""
    values: dict[str, str | None] = {}
    if path is not None:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        try:
            doc = json.loads(raw)
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for key in doc:
            if key not in _FILE_KEYS:
                raise ConfigError(f"config file {path}: unknown key {key!r}")
            if not isinstance(doc[key], str):
                raise ConfigError(f"config file {path}: {key} must be a string")
        values.update(doc)
    for key, env in (
        ("bind", "CIREG_BIND"),
        ("data_dir", "CIREG_DATA_DIR"),
        ("write_token", "CIREG_WRITE_TOKEN"),
        ("spec_dir", "CIREG_SPEC_DIR"),
    ):
        override = os.environ.get(env)
        if override:
            values[key] = override
    for key, override in (
        ("bind", bind),
        ("data_dir", data_dir),
        ("write_token", write_token),
        ("spec_dir", spec_dir),
    ):
        if override is not None:
            values[key] = override
    if not values.get("data_dir"):
        raise ConfigError("no data directory configured (data_dir / CIREG_DATA_DIR)")
    return ServiceConfig(
        data_dir=values["data_dir"],
        bind=values.get("bind") or DEFAULT_BIND,
        write_token=values.get("write_token") or None,
        spec_dir=values.get("spec_dir") or None,
    )
