"""Experiment configuration: one JSON document per run.

Top-level keys::

    group          {"kind": "free" | "free-abelian", "generators": [...] | "rank": k}
    measure        {"type": "simple-random-walk"} | {"atoms": [...]} | ...
    quasimorphism  {"type": "hom" | "brooks" | "combine" | "bounded-noise", ...}
    seed           master seed (int)
    mode           "exact" | "monte-carlo"
    tau            truncation threshold for convolution powers
    outputs        {"dir": "out"}
    <subcommand>   per-subcommand parameters, e.g. "clt": {"n": 4096, "trials": 20000}

Everything except ``outputs`` and ``threads`` enters the config hash.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .group import AlphabetError, Group, group_from_spec
from .measure import FiniteMeasure, measure_from_spec
from .montecarlo import config_hash
from .quasimorphism import ConfigError, Quasimorphism, quasimorphism_from_spec

SUBCOMMANDS = ("walk", "clt", "lil", "distortion", "defect", "harmonic", "tame",
               "martingale", "boundary", "rn-kernel", "report")
TOP_LEVEL = {"group", "measure", "quasimorphism", "seed", "mode", "tau", "outputs", "threads",
             "description"} | set(SUBCOMMANDS)
HASH_EXCLUDED = ("outputs", "threads")


class ConfigFieldError(ConfigError):
    """Invalid config, tagged with the offending field path (or line)."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    raw: dict
    group_spec: dict | None = None
    measure_spec: dict | None = None
    quasimorphism_spec: dict | None = None
    seed: int = 0
    mode: str = "exact"
    tau: float = 0.0
    output_dir: str = "out"
    params: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash({k: v for k, v in self.raw.items() if k not in HASH_EXCLUDED})

    def section(self, name: str) -> dict:
        return self.params.get(name, {})

    def build_group(self) -> Group:
        if self.group_spec is None:
            raise ConfigFieldError("group", "missing")
        try:
            return group_from_spec(self.group_spec)
        except (ValueError, AlphabetError, TypeError) as e:
            raise ConfigFieldError("group", str(e)) from None

    def build_measure(self, G: Group) -> FiniteMeasure:
        if self.measure_spec is None:
            raise ConfigFieldError("measure", "missing")
        try:
            return measure_from_spec(G, self.measure_spec)
        except (KeyError, ValueError, AlphabetError, TypeError) as e:
            raise ConfigFieldError("measure", _describe(e)) from None

    def build_quasimorphism(self, G: Group) -> Quasimorphism:
        if self.quasimorphism_spec is None:
            raise ConfigFieldError("quasimorphism", "missing")
        try:
            return quasimorphism_from_spec(G, self.quasimorphism_spec)
        except (KeyError, ValueError, AlphabetError, TypeError) as e:
            raise ConfigFieldError("quasimorphism", _describe(e)) from None

    def build(self):
        G = self.build_group()
        return G, self.build_measure(G), self.build_quasimorphism(G)


def _describe(e: Exception) -> str:
    if isinstance(e, KeyError):
        return f"missing key {e.args[0]!r}"
    return str(e)


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply "a.b.c=value" assignments; values are read as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigFieldError(item, "override must look like key.path=value")
        path, _, value = item.partition("=")
        keys = path.strip().split(".")
        node = out
        for k in keys[:-1]:
            nxt = node.setdefault(k, {})
            if not isinstance(nxt, dict):
                raise ConfigFieldError(path, f"{k} is not a section")
            node = nxt
        node[keys[-1]] = _parse_scalar(value)
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigFieldError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigFieldError(unknown[0], "unknown top-level field")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigFieldError("seed", f"expected a non-negative integer, got {seed!r}")
    mode = raw.get("mode", "exact")
    if mode not in ("exact", "monte-carlo"):
        raise ConfigFieldError("mode", f"expected 'exact' or 'monte-carlo', got {mode!r}")
    tau = raw.get("tau", 0)
    if not isinstance(tau, (int, float)) or not 0 <= tau < 1:
        raise ConfigFieldError("tau", f"expected 0 <= tau < 1, got {tau!r}")
    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigFieldError("outputs", "expected an object")
    for key in ("group", "measure", "quasimorphism"):
        if key in raw and not isinstance(raw[key], (dict, list)):
            raise ConfigFieldError(key, "expected an object")
    params = {}
    for name in SUBCOMMANDS:
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigFieldError(name, "expected an object")
        params[name] = sec
    return ExperimentConfig(raw, raw.get("group"), raw.get("measure"), raw.get("quasimorphism"),
                            seed, mode, float(tau), str(outputs.get("dir", "out")), params)


def load_config(path, overrides=()) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigFieldError(str(path), e.strerror or str(e)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigFieldError(f"line {e.lineno}, column {e.colno}", e.msg) from None
    return parse_config(apply_overrides(raw, overrides))


def require(section: dict, name: str, key: str, kind=int, default=None, minimum=None):
    """Typed lookup in a subcommand section with a field-path diagnostic."""
    if key not in section:
        if default is None:
            raise ConfigFieldError(f"{name}.{key}", "missing")
        return default
    v = section[key]
    ok = isinstance(v, kind) and not isinstance(v, bool)
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v, ok = float(v), True
    if not ok:
        raise ConfigFieldError(f"{name}.{key}", f"expected {kind.__name__}, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigFieldError(f"{name}.{key}", f"must be >= {minimum}, got {v!r}")
    return v
