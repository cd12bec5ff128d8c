"""Pipeline configuration and configuration-file loading."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, cast

from .errors import ConfigurationError
from .fifo import DEFAULT_CAPACITY
from .types import OPTIMIZATIONS

yaml_available = False
try:
    import yaml

    yaml_available = True
except ImportError:
    yaml = None

toml_available = False
try:
    import tomllib as tomli

    toml_available = True
except ImportError:
    try:
        import tomli

        toml_available = True
    except ImportError:
        tomli = None

DEFAULT_OPTIMIZATIONS = frozenset({"A", "B", "C", "E"})
MODES = ("lockstep", "threaded")


def parse_optimizations(text: str | Iterable[str]) -> frozenset[str]:
    """Turn ``"ABCE"``, ``"none"`` or an iterable of letters into a set of rule letters.

    Raises:
        ConfigurationError: On a letter outside A..E
    """
    if isinstance(text, str):
        text = "" if text.strip().lower() in ("", "none", "-") else text.replace(",", "").strip().upper()
    letters = frozenset(str(letter).upper() for letter in text)
    unknown = letters - set(OPTIMIZATIONS)
    if unknown:
        raise ConfigurationError(f"Unknown optimizations: {''.join(sorted(unknown))}")
    return letters


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of one pipeline run."""

    buffer_bytes: int = 2048
    enabled_opts: frozenset[str] = field(default=DEFAULT_OPTIMIZATIONS)
    compression: bool = True
    fifo_capacity: int = DEFAULT_CAPACITY
    seed: int = 0
    opt_d_ungated: bool = False
    detect_double_dfi: bool = False
    mode: str = "lockstep"
    step_limit: int = 1_000_000

    def validate(self) -> PipelineConfig:
        """Check the settings and return ``self``.

        Raises:
            ConfigurationError: If any setting is out of range
        """
        if self.buffer_bytes <= 0:
            raise ConfigurationError(f"buffer_bytes must be positive, got {self.buffer_bytes}")
        if self.fifo_capacity < 2:
            raise ConfigurationError(f"fifo_capacity must be at least 2, got {self.fifo_capacity}")
        parse_optimizations(self.enabled_opts)
        if self.mode not in MODES:
            raise ConfigurationError(f"Unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.step_limit <= 0:
            raise ConfigurationError(f"step_limit must be positive, got {self.step_limit}")
        return self

    def with_overrides(self, **overrides: Any) -> PipelineConfig:
        """Copy with the given non-None fields replaced."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        if "enabled_opts" in changes:
            changes["enabled_opts"] = parse_optimizations(changes["enabled_opts"])
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> PipelineConfig:
        """Build a config from a mapping; keys may also sit under ``pipeline``.

        Raises:
            ConfigurationError: On unknown keys
        """
        section = data.get("pipeline", data)
        if not isinstance(section, Mapping):
            raise ConfigurationError("The 'pipeline' section must be a table")
        known = {f.name for f in fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        return cls().with_overrides(**section).validate()


def _read_mapping(path: Path) -> Mapping[str, Any]:
    suffix = path.suffix.lower()
    if suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            return cast(Mapping[str, Any], json.load(f))
    if suffix in [".yaml", ".yml"]:
        if not yaml_available or yaml is None:
            raise ImportError("PyYAML is required for YAML support. Install with: pip install pyyaml")
        with open(path, "r", encoding="utf-8") as f:
            return cast(Mapping[str, Any], yaml.safe_load(f) or {})  # type: ignore
    if suffix == ".toml":
        if not toml_available or tomli is None:
            raise ImportError("tomli is required for TOML support. Install with: pip install tomli")
        with open(path, "rb") as f:
            return cast(Mapping[str, Any], tomli.load(f))  # type: ignore
    raise ConfigurationError(f"Unsupported file format: {suffix}. Supported formats: .json, .yaml, .yml, .toml")


def load_config(file_path: str | Path) -> PipelineConfig:
    """Load a pipeline configuration from a JSON, YAML or TOML file.

    Args:
        file_path: Path to the configuration file

    Returns:
        Validated configuration

    Raises:
        FileNotFoundError: If the file does not exist
        ImportError: If the optional parser for the format is not installed
        ConfigurationError: On unsupported formats or invalid values
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {file_path}")
    return PipelineConfig.from_mapping(_read_mapping(path))


__all__ = ["DEFAULT_OPTIMIZATIONS", "MODES", "PipelineConfig", "load_config", "parse_optimizations"]
