"""Scenario configuration: TOML or JSON, validated against every parameter range."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .weights import WeightParams

DEFAULTS = {
    "seed": 0,
    "domain": {"kind": "slab", "half_width": 0.5, "radius": 1.0, "dim": 3, "semi_axes": [1.0, 1.0, 1.0]},
    "grid": {"nx": 64, "nv": 16, "vmax": 6.0},
    "collision": {"varrho": -1.0, "eps_chi": 0.2, "n_omega": 72, "b0_kind": "abs_cos", "cache_dir": "",
                  "mode": "linear", "nonlinear": False, "interpolation": "auto"},
    "weights": {"q": 0.5, "theta": 2.0, "vartheta": 0.5, "lambda0": 0.0},
    "bc": {"kind": "diffuse"},
    "time": {"dt": 0.01, "n_steps": 100, "sample_every": 1},
    "initial": {"kind": "random", "amplitude": 1.0, "width": 0.1, "center": 0.0, "remove": ["mass"]},
    "output": {"dir": ".", "diagnostics": "diagnostics.ndjson", "field": "field.bin"},
}

_SECTIONS = tuple(k for k, v in DEFAULTS.items() if isinstance(v, dict))


@dataclass
class ScenarioConfig:
    data: dict

    def __getitem__(self, section):
        return self.data[section]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def weights(self) -> WeightParams:
        w = self.data["weights"]
        return WeightParams(w["q"], w["theta"], w["vartheta"], self.data["collision"]["varrho"])

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def echo(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)


def _merge(raw: dict) -> tuple[dict, list[str]]:
    out = copy.deepcopy(DEFAULTS)
    problems = []
    for key, value in raw.items():
        if key not in DEFAULTS:
            problems.append(f"unknown key '{key}'")
            continue
        if key in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"section [{key}] must be a table")
                continue
            for sub, sv in value.items():
                if sub not in DEFAULTS[key]:
                    problems.append(f"unknown key '{key}.{sub}'")
                else:
                    out[key][sub] = sv
        else:
            out[key] = value
    return out, problems


def validate(data: dict) -> list[str]:
    bad = []
    col, grid, tm, dom = data["collision"], data["grid"], data["time"], data["domain"]

    def number(section, key, cond, msg):
        val = data[section][key]
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val) or not cond(val):
            bad.append(f"{section}.{key}={val!r}: {msg}")
            return False
        return True

    if not isinstance(data["seed"], int) or isinstance(data["seed"], bool) or data["seed"] < 0:
        bad.append(f"seed={data['seed']!r}: must be a non-negative integer")
    ok = number("collision", "varrho", lambda x: -3 < x < 0, "soft potentials require -3 < varrho < 0")
    number("collision", "eps_chi", lambda x: x > 0, "cutoff radius must be positive")
    n_om = col["n_omega"]
    p = math.isqrt(n_om // 2) if isinstance(n_om, int) and n_om > 0 else 0
    if not (isinstance(n_om, int) and n_om >= 32 and 2 * p * p == n_om and p % 2 == 0):
        bad.append(f"collision.n_omega={n_om!r}: must be 2 p^2 with p even and >= 32 (e.g. 32, 72, 128)")
    if col["b0_kind"] != "abs_cos":
        bad.append(f"collision.b0_kind={col['b0_kind']!r}: only 'abs_cos' is available")
    if col["mode"] not in ("linear", "exponential_euler", "damping", "none"):
        bad.append(f"collision.mode={col['mode']!r}: one of linear, exponential_euler, damping, none")
    if col["interpolation"] not in ("auto", "ratio", "direct"):
        bad.append(f"collision.interpolation={col['interpolation']!r}: one of auto, ratio, direct")
    if not isinstance(col["nonlinear"], bool):
        bad.append("collision.nonlinear must be true or false")
    if not (isinstance(grid["nv"], int) and grid["nv"] >= 2 and grid["nv"] % 2 == 0):
        bad.append(f"grid.nv={grid['nv']!r}: must be an even integer >= 2")
    if not (isinstance(grid["nx"], int) and grid["nx"] >= 2):
        bad.append(f"grid.nx={grid['nx']!r}: must be an integer >= 2")
    number("grid", "vmax", lambda x: x > 0, "must be positive")
    number("time", "dt", lambda x: x > 0, "must be positive")
    if not (isinstance(tm["n_steps"], int) and tm["n_steps"] >= 0):
        bad.append(f"time.n_steps={tm['n_steps']!r}: must be a non-negative integer")
    if not (isinstance(tm["sample_every"], int) and tm["sample_every"] >= 1):
        bad.append(f"time.sample_every={tm['sample_every']!r}: must be an integer >= 1")
    w = data["weights"]
    numeric = all(isinstance(w[k], (int, float)) and not isinstance(w[k], bool) for k in ("q", "theta", "vartheta"))
    if numeric and ok:
        bad += [f"weights: {m}" for m in WeightParams(w["q"], w["theta"], w["vartheta"], col["varrho"]).violations()]
    elif not numeric:
        bad.append("weights.q, weights.theta and weights.vartheta must be numbers")
    number("weights", "lambda0", lambda x: x >= 0, "must be >= 0 (0 selects the admissible bound)")
    if data["bc"]["kind"] not in ("diffuse", "specular"):
        bad.append(f"bc.kind={data['bc']['kind']!r}: one of diffuse, specular")
    if dom["kind"] not in ("slab", "ball", "ellipsoid"):
        bad.append(f"domain.kind={dom['kind']!r}: one of slab, ball, ellipsoid")
    elif dom["kind"] == "slab":
        number("domain", "half_width", lambda x: x > 0, "must be positive")
    elif dom["kind"] == "ball":
        number("domain", "radius", lambda x: x > 0, "must be positive")
        if dom["dim"] not in (2, 3):
            bad.append(f"domain.dim={dom['dim']!r}: ball dimension must be 2 or 3")
    else:
        ax = dom["semi_axes"]
        if not (isinstance(ax, list) and len(ax) in (2, 3) and all(isinstance(a, (int, float)) and a > 0 for a in ax)):
            bad.append(f"domain.semi_axes={ax!r}: two or three positive numbers")
    init = data["initial"]
    if init["kind"] not in ("zero", "gaussian_pulse", "maxwellian", "tail", "random"):
        bad.append(f"initial.kind={init['kind']!r}: one of zero, gaussian_pulse, maxwellian, tail, random")
    if not (isinstance(init["remove"], list) and set(init["remove"]) <= {"mass", "energy", "momentum"}):
        bad.append(f"initial.remove={init['remove']!r}: subset of mass, energy, momentum")
    return bad


def from_dict(raw: dict) -> ScenarioConfig:
    data, problems = _merge(raw)
    problems += validate(data)
    if problems:
        raise ValidationError(problems)
    return ScenarioConfig(data)


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    elif path.suffix.lower() == ".toml":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    else:
        raise ParseError(f"{path}: expected a .toml or .json file")
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a table")
    return from_dict(raw)
