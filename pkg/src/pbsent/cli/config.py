"""Experiment configuration: YAML file + ``--set`` overrides, schema-checked."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import yaml

from pbsent.entanglement import ChshSettings
from pbsent.optics import SourceParams

PHASES = {"1": 1 + 0j, "i": 1j, "-1": -1 + 0j, "-i": -1j}
COMMANDS = ("derive", "bell", "qkd", "dist")
# not part of the experiment identity
_OUTPUT_KEYS = ("out", "format")


class ConfigError(ValueError):
    pass


def _load_schema() -> dict:
    return json.loads(resources.files("pbsent.schemas").joinpath("config.schema.json").read_text())


CONFIG_SCHEMA = _load_schema()


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    source: str = "squeezed"
    P: float = 0.1
    r: float = 0.3
    r_grid: tuple[float, ...] | None = None
    cutoff: int = 8
    reflection_phase: str = "1"
    rounds: int = 10000
    seed: int | None = None
    eta: float = 1.0
    angles: ChshSettings = ChshSettings.standard()
    grid_steps: int = 64
    samples: int = 0
    out: str | None = None
    format: str = "records"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        data = copy.deepcopy(dict(data))
        if isinstance(data.get("reflection_phase"), int):
            data["reflection_phase"] = str(data["reflection_phase"])
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = ".".join(map(str, exc.absolute_path)) or "<root>"
            raise ConfigError(f"{path}: {exc.message}") from None
        if "command" not in data:
            raise ConfigError("command is required")
        for key in ("P", "r", "eta"):
            if key in data:
                data[key] = float(data[key])
                if not math.isfinite(data[key]):
                    raise ConfigError(f"{key} must be finite")
        if data.get("r_grid") is not None:
            data["r_grid"] = tuple(float(x) for x in data["r_grid"])
        if "angles" in data:
            data["angles"] = ChshSettings(**{k: float(v) for k, v in data["angles"].items()})
        cfg = cls(**data)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.command in ("qkd",) and self.seed is None:
            raise ConfigError("qkd requires an explicit seed")
        if self.command == "dist" and self.samples > 0 and self.seed is None:
            raise ConfigError("sampling requires an explicit seed")
        if self.command == "qkd" and self.source != "squeezed":
            raise ConfigError("qkd runs on squeezed sources")
        if self.command == "qkd" and self.cutoff < 1:
            raise ConfigError("qkd needs cutoff >= 1")

    def to_mapping(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ChshSettings):
                v = {"alpha": v.alpha, "alpha_prime": v.alpha_prime, "beta": v.beta, "beta_prime": v.beta_prime}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def experiment_mapping(self) -> dict[str, Any]:
        d = self.to_mapping()
        for k in _OUTPUT_KEYS:
            d.pop(k)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.experiment_mapping(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def source_params(self) -> SourceParams:
        if self.source == "weak-pair":
            return SourceParams.weak(self.P)
        return SourceParams.squeezed(self.r)

    @property
    def phase(self) -> complex:
        return PHASES[self.reflection_phase]

    def dump(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=True)


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    if key == "reflection_phase":
        value = str(raw)
    elif isinstance(value, str):
        # PyYAML reads exponent literals such as 1e-3 as strings
        try:
            value = float(value)
        except ValueError:
            pass
    return key.strip().split("."), value


def load_config(
    path: str | Path | None,
    command: str,
    overrides: list[str] = (),
    **direct: Any,
) -> ExperimentConfig:
    """Merge file, ``--set`` overrides and explicit options (later wins)."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a key-value mapping")
        data.update(loaded)
    for item in overrides:
        keys, value = parse_override(item)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set nested key under {k!r}")
        node[keys[-1]] = value
    data.update({k: v for k, v in direct.items() if v is not None})
    if data.get("command", command) != command:
        raise ConfigError(f"config is for {data['command']!r}, invoked as {command!r}")
    data["command"] = command
    return ExperimentConfig.from_mapping(data)
