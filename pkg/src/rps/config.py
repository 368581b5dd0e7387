"""Experiment configuration: JSON files validated against a shipped schema."""
from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .coeff import CoeffSpec
from .errors import ConfigurationError

__all__ = ["ExperimentConfig", "load_config", "parse_override", "schema"]

DEFAULTS = {
    "name": "experiment",
    "layers": "global",
    "rhs": "sin_sin",
    "problem": {"type": "elliptic"},
    "solver": {"tol": 1e-10, "max_iter": None, "method": "auto"},
    "workers": 1,
    "outputs": {"dumps": [], "plots": True},
}


def schema() -> dict:
    with resources.files("rps").joinpath("data/experiment.schema.json").open() as f:
        return json.load(f)


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b=value``; value is JSON when it parses, ``m..n`` is an inclusive
    integer range, anything else is a string."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not key=value", field="--override")
    key, raw = text.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ConfigurationError(f"override {text!r} has an empty key", field="--override")
    m = _RANGE.match(raw)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ConfigurationError(f"empty range {raw!r}", field=key)
        return keys, list(range(lo, hi + 1))
    try:
        return keys, json.loads(raw)
    except json.JSONDecodeError:
        return keys, raw


def _apply(d, keys, value):
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigurationError("cannot override inside a non-object", field=".".join(keys))
    d[keys[-1]] = value


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    base_dir: Path

    def __getitem__(self, key):
        return self.data[key]

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def dimension(self) -> int:
        return self.data["dimension"]

    @property
    def coeff(self) -> CoeffSpec:
        return CoeffSpec.from_dict(self.data["coeff"])

    @property
    def problem(self) -> dict:
        return self.data["problem"]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def fine_divisions(self) -> int:
        return self.data["coarse_divisions"] * 2 ** self.data["refinements"]

    def layer_list(self, H: float | None = None) -> list:
        """Layer settings as a list; None means the global basis."""
        from .analysis import auto_layers

        L = self.data["layers"]
        if L == "global":
            return [None]
        if L == "auto":
            H = 1.0 / self.data["coarse_divisions"] if H is None else H
            return [auto_layers(H)]
        if isinstance(L, int):
            return [L]
        return list(L)

    def output_dir(self) -> Path:
        d = self.data["outputs"].get("dir")
        if d is None:
            root = os.environ.get("RPS_OUTPUT_DIR", "rps-output")
            return Path(root) / self.name
        return Path(d)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _check_semantics(data):
    dim = data["dimension"]
    kind = data["coeff"]["kind"]
    if kind == "trig_multiscale_2d" and dim != 2:
        raise ConfigurationError("trig_multiscale_2d requires dimension 2", field="coeff.kind")
    if kind == "random_fourier_1d":
        if dim != 1:
            raise ConfigurationError("random_fourier_1d requires dimension 1", field="coeff.kind")
        if "seed" not in data["coeff"]:
            raise ConfigurationError("random_fourier_1d needs a seed", field="coeff.seed")
    if data["refinements"] < 1:
        raise ConfigurationError("at least one refinement is needed for free fine nodes",
                                 field="refinements")
    prob = data["problem"]
    if prob["type"] in ("wave", "parabolic") and "T" not in prob:
        raise ConfigurationError(f"{prob['type']} problems need a final time", field="problem.T")
    if prob["type"] == "recover" and "measurements" not in prob:
        raise ConfigurationError("recover needs a measurement file", field="problem.measurements")
    fine = data["coarse_divisions"] * 2 ** data["refinements"]
    for nc in prob.get("sweep_divisions", []):
        ratio = fine // nc
        if nc * ratio != fine or ratio < 2 or ratio & (ratio - 1):
            raise ConfigurationError(f"{nc} does not divide the fine mesh ({fine}) by a power "
                                     f"of two >= 2", field="problem.sweep_divisions")


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read, override, validate.  Raises ConfigurationError naming the field."""
    path = Path(path)
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}", field=str(path)) from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("top level must be an object", field=str(path))
    for item in overrides:
        keys, value = parse_override(item)
        _apply(raw, keys, value)
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        field = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(exc.message, field=field) from None
    data = _merge(DEFAULTS, raw)
    if "name" not in raw:
        data["name"] = path.stem
    _check_semantics(data)
    return ExperimentConfig(data, path.parent.resolve())
