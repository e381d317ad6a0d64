"""JSON schemas for channel, state and trajectory documents.

``docs/schemas/*.json`` are generated from these dictionaries by
``python -m gaussian_channels.schemas docs/schemas``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

_NUM = {"type": "number"}


def _vec(n):
    return {"type": "array", "items": _NUM, "minItems": n, "maxItems": n}


COEFFICIENTS = {
    "type": "object",
    "properties": {"a": _vec(3), "b": _vec(4), "c": _vec(2), "e": _vec(3), "d": _vec(2)},
    "additionalProperties": False,
}

_DELTA1 = {
    "type": "object",
    "properties": {"alpha": _NUM, "beta": _NUM},
    "required": ["alpha", "beta"],
    "additionalProperties": False,
}
_DELTA2 = {
    "type": "object",
    "properties": {"alpha": _NUM, "beta": _NUM, "gamma": _NUM, "eta": _NUM},
    "required": ["alpha", "beta", "gamma", "eta"],
    "additionalProperties": False,
}

_KERNEL_BODY = {
    "coefficients": COEFFICIENTS,
    "delta": {"type": "object"},
}

_FORM_RULES = [
    {
        "if": {"properties": {"form": {"const": "delta1"}}, "required": ["form"]},
        "then": {"required": ["delta"], "properties": {"delta": _DELTA1}},
    },
    {
        "if": {"properties": {"form": {"const": "delta2"}}, "required": ["form"]},
        "then": {"required": ["delta"], "properties": {"delta": _DELTA2}},
    },
    {
        "if": {"properties": {"form": {"const": "gaussian"}}, "required": ["form"]},
        "then": {"not": {"required": ["delta"]}},
    },
]

CHANNEL = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ChannelDocument",
    "type": "object",
    "properties": {
        "form": {"enum": ["gaussian", "delta1", "delta2"]},
        **_KERNEL_BODY,
    },
    "required": ["form", "coefficients"],
    "additionalProperties": False,
    "allOf": _FORM_RULES,
}

STATE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "StateDocument",
    "type": "object",
    "properties": {
        "sigma": {"type": "array", "items": _vec(2), "minItems": 2, "maxItems": 2},
        "mean": _vec(2),
    },
    "required": ["sigma"],
    "additionalProperties": False,
}

TRAJECTORY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "TrajectoryDocument",
    "type": "object",
    "properties": {
        "form": {"enum": ["delta1", "delta2"]},
        "samples": {
            "type": "array",
            "minItems": 3,
            "items": {
                "type": "object",
                "properties": {"t": _NUM, **_KERNEL_BODY},
                "required": ["t", "coefficients", "delta"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["form", "samples"],
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"form": {"const": name}}},
            "then": {"properties": {"samples": {"items": {"properties": {"delta": schema}}}}},
        }
        for name, schema in (("delta1", _DELTA1), ("delta2", _DELTA2))
    ],
}

ALL = {"channel": CHANNEL, "state": STATE, "trajectory": TRAJECTORY}


def write_all(directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, schema in ALL.items():
        (out / f"{name}.schema.json").write_text(json.dumps(schema, indent=2) + "\n")


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else "docs/schemas")
