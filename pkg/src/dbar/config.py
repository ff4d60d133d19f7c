"""JSON run configuration: two chain blocks plus run parameters.

Example::

    {
      "x": {"family": "markov", "order": 1, "table": {"0": 0.2, "1": 0.4}},
      "y": {"family": "markov", "order": 1, "table": {"0": 0.5, "1": 0.7}},
      "seed": 1, "replicas": 200, "window": [0, 4999],
      "truncation": 64, "kmax": 256,
      "tolerances": {"dbar_floor": 0.001},
      "out": "results"
    }

Markov tables map chronological suffix strings (newest symbol last) to
``P(1 | suffix)``. Renewal chains take a ``hazard`` block, either
``{"kind": "geometric", "q_inf": .., "amplitude": .., "ratio": ..}`` for
``q_l = q_inf + amplitude * ratio**l`` or
``{"kind": "explicit", "values": [q_1, ..., q_K], "q_inf": ..}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .coupling import DEFAULT_K_HARD
from .errors import UsageError
from .estimator import DBAR_FLOOR, REGEN_DEPTH
from .kernel import ChainSpec, spec_from_dict, spec_to_dict

_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_OPEN_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}


def _when(key: str, value: str, then: dict) -> dict:
    return {"if": {"properties": {key: {"const": value}}, "required": [key]}, "then": then}


_HAZARD_SCHEMA = {
    "type": "object",
    "required": ["kind", "q_inf"],
    "properties": {"kind": {"enum": ["geometric", "explicit"]}},
    "allOf": [
        _when("kind", "geometric", {
            "properties": {"kind": True, "q_inf": _OPEN_PROB,
                           "amplitude": {"type": "number", "minimum": 0}, "ratio": _OPEN_PROB},
            "required": ["amplitude", "ratio"], "additionalProperties": False}),
        _when("kind", "explicit", {
            "properties": {"kind": True, "q_inf": _OPEN_PROB,
                           "values": {"type": "array", "items": _OPEN_PROB}},
            "required": ["values"], "additionalProperties": False}),
    ],
}

CHAIN_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {"family": {"enum": ["iid", "markov", "renewal"]}},
    "allOf": [
        _when("family", "iid", {
            "properties": {"family": True, "p": _PROB},
            "required": ["p"], "additionalProperties": False}),
        _when("family", "markov", {
            "properties": {"family": True,
                           "order": {"type": "integer", "minimum": 1, "maximum": 8},
                           "table": {"type": "object",
                                     "propertyNames": {"pattern": "^[01]+$"},
                                     "additionalProperties": _PROB}},
            "required": ["order", "table"], "additionalProperties": False}),
        _when("family", "renewal", {
            "properties": {"family": True, "hazard": _HAZARD_SCHEMA},
            "required": ["hazard"], "additionalProperties": False}),
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["x", "y"],
    "properties": {
        "x": CHAIN_SCHEMA,
        "y": CHAIN_SCHEMA,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "replicas": {"type": "integer", "minimum": 1},
        "window": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "truncation": {"type": "integer", "minimum": 1},
        "kmax": {"type": "integer", "minimum": 0},
        "k_hard": {"type": "integer", "minimum": 1},
        "max_backtrack": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object",
                       "properties": {"dbar_floor": {"type": "number", "minimum": 0}},
                       "additionalProperties": False},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunConfig:
    x: ChainSpec
    y: ChainSpec
    seed: int = 0
    replicas: int = 1
    window: tuple[int, int] = (0, 999)
    truncation: int = REGEN_DEPTH
    kmax: int = 256
    k_hard: int = DEFAULT_K_HARD
    max_backtrack: int | None = None
    dbar_floor: float = DBAR_FLOOR
    out: Path = field(default_factory=lambda: Path("."))

    def __post_init__(self):
        m, n = self.window
        if m > n:
            raise UsageError(f"window start {m} exceeds end {n}")
        if self.replicas < 1:
            raise UsageError("replicas must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.kmax < 0:
            raise UsageError("kmax must be non-negative")

    @property
    def window_length(self) -> int:
        return self.window[1] - self.window[0] + 1

    def with_overrides(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = {"x": spec_to_dict(self.x), "y": spec_to_dict(self.y), "seed": self.seed,
             "replicas": self.replicas, "window": list(self.window),
             "truncation": self.truncation, "kmax": self.kmax, "k_hard": self.k_hard,
             "tolerances": {"dbar_floor": self.dbar_floor}, "out": str(self.out)}
        if self.max_backtrack is not None:
            d["max_backtrack"] = self.max_backtrack
        return d


def parse_config(data: dict) -> RunConfig:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA, cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid config at {loc}: {exc.message}") from None
    try:
        x, y = spec_from_dict(data["x"]), spec_from_dict(data["y"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"invalid chain block: {exc}") from None
    kw = {k: data[k] for k in ("seed", "replicas", "truncation", "kmax", "k_hard", "max_backtrack")
          if k in data}
    if "window" in data:
        kw["window"] = tuple(data["window"])
    if "dbar_floor" in data.get("tolerances", {}):
        kw["dbar_floor"] = float(data["tolerances"]["dbar_floor"])
    if "out" in data:
        kw["out"] = Path(data["out"])
    return RunConfig(x=x, y=y, **kw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data)


def parse_window(text: str) -> tuple[int, int]:
    """``"M:N"`` to ``(M, N)``; negative times are allowed."""
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError(f"window must look like M:N, got {text!r}")
    try:
        m, n = int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"window bounds must be integers, got {text!r}") from None
    if m > n:
        raise UsageError(f"window start {m} exceeds end {n}")
    return m, n
