"""Experiment configuration: JSON documents validated against a schema."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

BODY_TYPES = ["ball2", "pball", "cube", "polytope", "ellipsoid", "linear_image", "scaled",
              "polar", "random_polytope"]

BODY_SPEC = {
    "oneOf": [
        {"type": "string", "pattern": "^(cube|ball2|ball1|ballinf|ballp[0-9.]+|crosspoly|randpoly)$"},
        {"type": "object", "required": ["type"],
         "properties": {"type": {"enum": BODY_TYPES}}},
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "samples": {"type": "integer", "minimum": 100},
        "dims": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 12},
                 "minItems": 1},
        "s_values": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 256},
                     "minItems": 1},
        "bodies": {"type": "object", "additionalProperties": BODY_SPEC},
        "measures": {"type": "object", "additionalProperties": {"type": "object"}},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
        "output_dir": {"type": "string"},
        "params": {"type": "object"},
    },
}


class ConfigError(ValueError):
    """Malformed or schema-invalid configuration."""


@dataclass
class ExperimentConfig:
    name: str
    seed: int = 0
    samples: int = 100_000
    dims: list = field(default_factory=lambda: [2, 3])
    s_values: list = field(default_factory=lambda: [4, 8])
    bodies: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "reports"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        validate(d)
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def param(self, key: str, default=None):
        return self.params.get(key, default)


def validate(d) -> None:
    try:
        jsonschema.validate(d, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return ExperimentConfig.from_dict(data)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def builtin_config_path(name: str) -> Path:
    return Path(str(resources.files("isonorm.lab") / "configs" / f"{name}.json"))


def builtin_config(name: str) -> ExperimentConfig:
    return load_config(builtin_config_path(name))
