"""Run configuration files.

A config file holds UTF-8 `key = value` lines; `#` starts a comment and blank
lines are ignored. Keys are the field names of ModelConfig, TrainConfig and
DataConfig; a key declared by more than one of them (such as `vocab_size`)
sets it in each.
"""

from pathlib import Path
from typing import Any, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hsdacs.data.synthetic import DataConfig
from hsdacs.models.config import ModelConfig
from hsdacs.training.trainer import TrainConfig
from hsdacs.types import ConfigError

SECTIONS: dict[str, type[BaseModel]] = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)


def known_keys() -> set[str]:
    return {key for section in SECTIONS.values() for key in section.model_fields}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip()] = value.strip()
    return values


def parse_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, str(path))


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    values: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        values[key.strip()] = value.strip()
    return values


def build_run_config(values: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """
    Validate flat key/value settings into a RunConfig; `overrides` win over `values`.

    Raises:
        ConfigError: For unknown keys or values a section rejects.
    """
    merged = dict(values)
    merged.update(overrides or {})
    unknown = sorted(set(merged) - known_keys())
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    sections: dict[str, BaseModel] = {}
    for name, section in SECTIONS.items():
        fields = {key: value for key, value in merged.items() if key in section.model_fields}
        try:
            sections[name] = section(**fields)
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or name}: {err['msg']}" for err in e.errors())
            raise ConfigError(f"invalid {name} config: {problems}") from e
    return RunConfig(**sections)


def load_run_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    values = parse_config_file(path) if path is not None else {}
    return build_run_config(values, overrides)
