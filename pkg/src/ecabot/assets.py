"""Access to packaged data files: fixtures, prompts, scripts, reference data."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError


def _package_dir(name: str) -> Path:
    return Path(resources.files("ecabot") / name)  # type: ignore[arg-type]


def fixture_path(name: str) -> Path:
    """Resolve an embedded fixture name like 'vr-museum' to its JSON file."""
    path = _package_dir("fixtures") / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no embedded fixture named {name!r}")
    return path


def list_fixtures() -> list[str]:
    return sorted(p.stem for p in _package_dir("fixtures").glob("*.json"))


def prompt_text(stage: str, scenario: str) -> str:
    path = _package_dir("prompts") / f"{stage}.{scenario}.txt"
    if not path.exists():
        raise ConfigError(f"no prompt file for stage {stage!r}, scenario {scenario!r}")
    return path.read_text(encoding="utf-8")


def script_path(name: str) -> Path:
    """Resolve an embedded script name like 'angie-vr' to its JSON file."""
    path = _package_dir("scripts") / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no embedded script named {name!r}")
    return path


def reference_data_path(name: str) -> Path:
    path = _package_dir("data") / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no embedded reference data named {name!r}")
    return path
