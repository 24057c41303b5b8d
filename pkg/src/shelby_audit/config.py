"""Flat ``key = value`` scenario configuration.

One assignment per line, ``#`` starts a comment. Real-valued parameters
are parsed as exact rationals (``Fraction`` accepts ``1e-7``, ``0.01``,
``3/4``), which keeps parsing independent of the process locale.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .commitments import CommitmentError, check_hash_name
from .model import INT_FIELDS, REAL_FIELDS, ParamError, ProtocolParams

SCENARIOS = ("check", "simulate", "nash", "uniqueness", "coalition", "calibrate")
PROFILES = ("honest", "dishonest", "collusive")
FORMATS = ("json", "csv")

REQUIRED = REAL_FIELDS + INT_FIELDS
PROBABILITIES = ("p_a", "epsilon")

_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}

OPTIONAL = {
    "chunks": "int",
    "chunk_size": "int",
    "onchain_noise": "bool",
    "hash_name": "str",
    "scenario": "str",
    "epochs": "int",
    "profile": "str",
    "members": "intlist",
    "commitment": "bool",
    "extension": "bool",
    "n_small": "int",
    "max_coalition": "int",
    "exact": "bool",
    "output": "str",
    "format": "str",
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when the problem has a location."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class ScenarioConfig:
    params: ProtocolParams
    scenario: str | None = None
    epochs: int = 1000
    profile: str = "honest"
    members: tuple[int, ...] = ()
    commitment: bool = False
    extension: bool = False
    n_small: int = 4
    max_coalition: int | None = None
    exact: bool = True
    output: str | None = None
    format: str = "json"
    lines: dict = field(default_factory=dict, repr=False)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_params(self, **changes) -> "ScenarioConfig":
        return self.replace(params=self.params.replace(**changes))


def _parse_value(key: str, raw: str, kind: str, line: int, source: str):
    try:
        if kind == "real":
            return Fraction(raw)
        if kind == "int":
            return int(raw, 0)
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "intlist":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except (ValueError, KeyError, ZeroDivisionError):
        raise ConfigError(f"cannot parse {key} = {raw!r} as {kind}", line, source) from None


def _kind(key: str) -> str | None:
    if key in REAL_FIELDS:
        return "real"
    if key in INT_FIELDS:
        return "int"
    return OPTIONAL.get(key)


def parse_pairs(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Raw ``{key: value}`` and ``{key: line}`` maps, rejecting malformed, unknown and duplicate keys."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno, source)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", lineno, source)
        if _kind(key) is None:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, source)
        values[key] = value
        lines[key] = lineno
    return values, lines


def build_config(values: dict, lines: dict | None = None, source: str = "<config>") -> ScenarioConfig:
    """Validate raw string values into a :class:`ScenarioConfig`."""
    lines = lines or {}
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}", None, source)
    parsed = {k: _parse_value(k, str(v), _kind(k), lines.get(k), source) for k, v in values.items()}

    def bad(key, msg):
        return ConfigError(f"{key} {msg}", lines.get(key), source)

    for key in PROBABILITIES:
        if not 0 <= parsed[key] <= 1:
            raise bad(key, f"= {values[key]} is outside [0, 1]")
    if parsed["epsilon"] == 1:
        raise bad("epsilon", "must be < 1")
    for key in ("r_s", "r_a", "c_s", "c_a", "c_read", "sigma_s", "sigma_a"):
        if parsed[key] < 0:
            raise bad(key, f"= {values[key]} must be >= 0")
    for key, low in (("n", 3), ("p_s", 1), ("k", 1), ("c_max", 0), ("seed", 0), ("chunks", 1), ("chunk_size", 1),
                     ("epochs", 1), ("n_small", 3), ("max_coalition", 1)):
        if key in parsed and parsed[key] < low:
            raise bad(key, f"= {values[key]} must be >= {low}")
    if parsed["seed"] >= 2**64:
        raise bad("seed", "must fit in 64 bits")
    if "scenario" in parsed and parsed["scenario"] not in SCENARIOS:
        raise bad("scenario", f"must be one of {', '.join(SCENARIOS)}")
    if "profile" in parsed and parsed["profile"] not in PROFILES:
        raise bad("profile", f"must be one of {', '.join(PROFILES)}")
    if "format" in parsed and parsed["format"] not in FORMATS:
        raise bad("format", f"must be one of {', '.join(FORMATS)}")
    if "hash_name" in parsed:
        try:
            check_hash_name(parsed["hash_name"])
        except CommitmentError as exc:
            raise bad("hash_name", str(exc)) from None

    param_keys = REQUIRED + ("chunks", "chunk_size", "onchain_noise", "hash_name")
    try:
        params = ProtocolParams(**{k: parsed[k] for k in param_keys if k in parsed})
    except ParamError as exc:
        raise ConfigError(str(exc), None, source) from None
    extra = {k: v for k, v in parsed.items() if k not in param_keys}
    for m in extra.get("members", ()):
        if not 0 <= m < params.n:
            raise bad("members", f"entry {m} is outside [0, {params.n})")
    return ScenarioConfig(params=params, lines=dict(lines), **extra)


def load_config(source: str | Path, *, text: str | None = None) -> ScenarioConfig:
    """Load from a path, or from inline ``text`` (``source`` then only labels diagnostics)."""
    if text is None:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror or exc}", None, str(source)) from None
    values, lines = parse_pairs(text, str(source))
    return build_config(values, lines, str(source))


def loads_config(text: str) -> ScenarioConfig:
    return load_config("<inline>", text=text)


def shipped_config(name: str = "calibration.cfg") -> Path:
    return Path(__file__).with_name("configs") / name
