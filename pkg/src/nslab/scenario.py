"""Scenario files: JSON documents describing one run.

A scenario names a grid, the initial data, the solver settings, the
diagnostics to compute and where outputs go.  Validation uses a JSON schema;
failures raise :class:`ConfigError` carrying the dotted path of the offending
field (``grid.N``, ``initial_data.post[1]``).  The only environment variable
consulted is ``NSLAB_OUTPUT_ROOT``, which prefixes relative output
directories.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .mild import SolverConfig
from .spectral import Grid

__all__ = ["SCHEMA", "DIAGNOSTICS", "Scenario", "load_scenario", "error_path", "OUTPUT_ROOT_ENV"]

OUTPUT_ROOT_ENV = "NSLAB_OUTPUT_ROOT"

DIAGNOSTICS = ("energy", "omega", "rate", "typeI", "concentration", "support")

_NUM = {"type": "number"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nslab scenario",
    "type": "object",
    "required": ["name", "grid", "initial_data"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "grid": {
            "type": "object",
            "required": ["d", "N"],
            "additionalProperties": False,
            "properties": {
                "d": {"enum": [2, 3]},
                "N": {"type": "integer", "minimum": 8},
                "box_scale": {"type": "number", "exclusiveMinimum": 0},
                "dealias": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "initial_data": {
            "type": "object",
            "required": ["generator"],
            "additionalProperties": False,
            "properties": {
                "generator": {"enum": ["taylor_green", "random_divfree", "half_space", "bump", "file"]},
                "params": {"type": "object"},
                "post": {
                    "type": "array",
                    "items": {
                        "oneOf": [
                            {"const": "leray_project"},
                            {
                                "type": "object",
                                "required": ["rescale"],
                                "additionalProperties": False,
                                "properties": {"rescale": {"type": "number", "exclusiveMinimum": 0}},
                            },
                        ]
                    },
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "C_solve": _NUM,
                "p": _NUM,
                "nodes": {"type": "integer", "minimum": 4},
                "max_steps": {"type": "integer", "minimum": 1},
                "omega_cap_factor": {"type": "number", "exclusiveMinimum": 1},
                "dt_floor": {"type": "number", "exclusiveMinimum": 0},
                "T_horizon": {"type": "number", "exclusiveMinimum": 0},
                "picard_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_sweeps": {"type": "integer", "minimum": 1},
                "max_halvings": {"type": "integer", "minimum": 0},
                "refine_sup": {"type": "boolean"},
                "dt_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "diagnostics": {"type": "array", "items": {"enum": list(DIAGNOSTICS)}, "uniqueItems": True},
        "diagnostics_p": {"type": "number", "exclusiveMinimum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "stride": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "required": ["parameters"],
            "additionalProperties": False,
            "properties": {
                "parameters": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": {"type": "array", "minItems": 1},
                },
                "mode": {"enum": ["solve", "global_criterion"]},
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "n0_max": {"type": "integer", "minimum": 0},
            },
        },
        "verify": {"type": "object"},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def error_path(path) -> str:
    """Dotted path with list indices in brackets: ``initial_data.post[1]``."""
    out = ""
    for part in path:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _validate(doc: dict):
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = error_path(err.absolute_path)
        raise ConfigError(err.message, path or "<root>")


@dataclass
class Scenario:
    """One validated scenario document.

    ``raw`` keeps the document exactly as parsed; :meth:`to_dict` returns it,
    so parse -> serialize -> parse is the identity.
    """

    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ConfigError("scenario must be a JSON object", "")
        _validate(doc)
        sc = cls(copy.deepcopy(doc))
        sc.grid()  # grid constraints beyond the schema
        sc.solver_config()
        return sc

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def seed(self) -> int | None:
        return self.raw.get("seed")

    @property
    def diagnostics(self) -> list:
        return list(self.raw.get("diagnostics", ["energy", "omega"]))

    @property
    def diagnostics_p(self) -> float:
        return float(self.raw.get("diagnostics_p", 6.0))

    @property
    def stride(self) -> int:
        return int(self.raw.get("output", {}).get("stride", 1))

    def grid(self) -> Grid:
        g = self.raw["grid"]
        try:
            return Grid(g["d"], g["N"], float(g.get("box_scale", 1.0)), float(g.get("dealias", 2.0 / 3.0)))
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            key = next((k for k in ("box_scale", "dealias", "N", "d") if msg.startswith(k) or f" {k} " in msg), None)
            raise ConfigError(msg, f"grid.{key}" if key else "grid") from exc

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.raw.get("solver", {}))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "solver") from exc

    def initial_data_spec(self) -> dict:
        """Initial-data spec; the scenario seed fills in a missing ``params.seed``."""
        spec = copy.deepcopy(self.raw["initial_data"])
        if spec["generator"] == "random_divfree" and self.seed is not None:
            spec.setdefault("params", {}).setdefault("seed", self.seed)
        return spec

    def output_dir(self, override: str | None = None) -> Path:
        d = Path(override or self.raw.get("output", {}).get("dir", f"runs/{self.name}"))
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not d.is_absolute():
            d = Path(root) / d
        return d

    def with_value(self, dotted: str, value) -> "Scenario":
        """Copy with one field replaced (``initial_data.params.c``), re-validated."""
        doc = self.to_dict()
        keys = dotted.split(".")
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {dotted}", dotted)
        node[keys[-1]] = value
        doc.pop("sweep", None)
        return Scenario.from_dict(doc)


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}", "") from exc
    return Scenario.from_json(text)
