"""Runtime configuration: defaults, config file, environment, CLI flags.

Precedence is flags over environment variables over the config file over
defaults. The file is plain JSON with the same keys as the dataclass.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "ECABOT_"

PROVIDERS = ("scripted", "remote")


@dataclass
class Config:
    provider: str = "scripted"
    script: str | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key_var: str = "ECABOT_API_KEY"
    fixtures_dir: str | None = None
    cascade_limit: int = 8
    listen: str = "127.0.0.1:8750"
    context_budget: int = 6000
    frontend_dir: str | None = None

    def validate(self) -> None:
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.provider == "scripted" and not self.script:
            raise ConfigError("scripted provider needs --script (or ECABOT_SCRIPT)")
        if self.provider == "remote" and not (self.endpoint and self.model):
            raise ConfigError("remote provider needs --endpoint and --model")
        if self.cascade_limit < 1:
            raise ConfigError(f"cascade limit must be positive, got {self.cascade_limit}")
        if self.context_budget < 500:
            raise ConfigError(f"context budget must be at least 500, got {self.context_budget}")
        if self.fixtures_dir is not None and not Path(self.fixtures_dir).is_dir():
            raise ConfigError(f"fixtures dir does not exist: {self.fixtures_dir}")

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen address must be host:port, got {self.listen!r}")
        return host, int(port)


_INT_FIELDS = {"cascade_limit", "context_budget"}


def load_config(
    path: str | Path | None = None,
    env: dict[str, str] | None = None,
    overrides: dict | None = None,
) -> Config:
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise ConfigError(f"config file not found: {file_path}")
        try:
            doc = json.loads(file_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file_path}:{exc.lineno}: {exc.msg}")
        if not isinstance(doc, dict):
            raise ConfigError(f"{file_path}: config must be a JSON object")
        values.update(doc)
    known = {f.name for f in fields(Config)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in known:
        var = ENV_PREFIX + name.upper()
        if var in env:
            values[name] = env[var]
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    for name in _INT_FIELDS:
        if name in values and not isinstance(values[name], int):
            try:
                values[name] = int(values[name])
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be an integer, got {values[name]!r}")
    config = Config(**values)
    config.validate()
    return config
