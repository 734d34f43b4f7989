"""Experiment configuration: a flat INI file with one typed section per command.

Values are written in a canonical text form (comma-separated lists, ``inf``,
``true``/``false``) so a config survives a write/read cycle unchanged and its
hash is stable.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError

ENV_PREFIX = "LATTICEMAX_"

# command -> parameter -> (kind, default); kinds: int, float, str, bool, and list forms
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "count": {
        "d": ("int_list", [1, 2, 3, 4]),
        "N": ("float_list", [1, 2, 3, 4, 5, 6]),
        "q": ("str_list", ["two"]),
        "volume_d": ("int_list", []),
        "C1": ("float", 1.0),
    },
    "multiplier-verify": {
        "kind": ("str", "origin"),
        "d": ("int", 1),
        "N": ("float", 2.0),
        "samples": ("int", 100),
        "offset": ("int", 0),
        "strata": ("str_list", ["uniform", "gaussian", "corner"]),
        "C_fit": ("float", math.nan),
        "c_fit": ("float", math.nan),
    },
    "semigroup-check": {
        "M": ("int", 8),
        "d": ("int", 2),
        "n": ("int", 2),
        "t": ("float_list", [0.5, 2.0]),
        "fields": ("int", 10),
    },
    "maximal-experiment": {
        "inputs": ("str_list", ["delta"]),
        "p": ("float", 2.0),
        "d": ("int_list", [1, 2, 3, 4, 5, 6]),
        "N_max": ("int", 64),
        "n": ("int", 2),
        "c0": ("float", 1.0),
        "c1": ("float", 1.0),
        "c2": ("float", 1.0),
        "c3": ("float", 1.0),
        "tol": ("float", 1e-4),
        "delta_bound": ("float", 2.0),
    },
    "domination-check": {
        "d": ("int", 2),
        "N": ("float", 8.0),
        "samples": ("int", 1_000_000),
        "input": ("str", "delta"),
        "C1": ("float", 1.0),
        "C2": ("float", math.nan),
    },
    "ergodic-demo": {
        "M": ("int", 8),
        "d": ("int", 1),
        "n": ("int", 2),
        "p": ("float_list", [2.0, 4.0]),
        "R": ("int", 16),
        "eps": ("float", 0.5),
        "radii": ("float_list", [1, 2, 4]),
        "cases": ("int", 4),
    },
    "bau-demo": {
        "length": ("int", 32),
        "eps": ("float", 0.6),
        "tail_tol": ("float", 0.1),
    },
}

COMMANDS = tuple(SCHEMA)


def _format(kind: str, value) -> str:
    if kind.endswith("_list"):
        return ",".join(_format(kind[:-5], v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        v = float(value)
        if math.isnan(v):
            return "nan"
        return "inf" if math.isinf(v) else repr(v)
    return str(value)


def _parse(kind: str, text: str, key: str):
    text = text.strip()
    try:
        if kind.endswith("_list"):
            return [_parse(kind[:-5], t, key) for t in text.split(",") if t.strip()]
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from None


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    budget_updates: int = 2**34

    def __post_init__(self):
        if self.command not in SCHEMA:
            raise ConfigError(f"unknown command {self.command!r}")
        schema = SCHEMA[self.command]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigError(f"unknown keys for {self.command}: {sorted(unknown)}")
        full = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in schema.items()}
        full.update(self.params)
        self.params = full
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.budget_updates < 1:
            raise ConfigError("budget-updates must be positive")

    def set(self, key: str, text: str) -> None:
        """Override one parameter from its text form."""
        schema = SCHEMA[self.command]
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {self.command}")
        self.params[key] = _parse(schema[key][0], text, key)

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = {"command": self.command, "seed": str(self.seed), "threads": str(self.threads),
                     "budget_updates": str(self.budget_updates)}
        schema = SCHEMA[self.command]
        cp[self.command] = {k: _format(schema[k][0], self.params[k]) for k in sorted(schema)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, command: str | None = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from None
        run = cp["run"] if cp.has_section("run") else {}
        command = command or run.get("command")
        if command is None:
            raise ConfigError("config names no command")
        if command not in SCHEMA:
            raise ConfigError(f"unknown command {command!r}")
        params = {}
        if cp.has_section(command):
            for key, text_value in cp[command].items():
                if key not in SCHEMA[command]:
                    raise ConfigError(f"unknown key {key!r} for {command}")
                params[key] = _parse(SCHEMA[command][key][0], text_value, key)
        return cls(command, params,
                   seed=_parse("int", run.get("seed", "0"), "seed"),
                   threads=_parse("int", run.get("threads", "1"), "threads"),
                   budget_updates=_parse("int", run.get("budget_updates", str(2**34)), "budget_updates"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def env_overrides(environ=None) -> dict[str, str]:
    """Run-level overrides from LATTICEMAX_SEED, _THREADS, _BUDGET_UPDATES, _OUT."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in ("SEED", "THREADS", "BUDGET_UPDATES", "OUT"):
        if ENV_PREFIX + key in environ:
            out[key.lower()] = environ[ENV_PREFIX + key]
    return out
