"""
Scenario file parser

Scenarios are YAML documents with one mapping per section. Every key is
checked against SCHEMA; unknown keys are rejected with the nearest valid
name, and all problems are collected before raising.
"""

import copy
import difflib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Any, Dict, List, Optional, Sequence

import yaml

EXPERIMENT_KINDS = (
    "classical-density",
    "quantum-branched",
    "shadow-comparison",
    "manifold-map",
    "stability-scan",
    "retention-scan",
    "superwire",
)
QUANTUM_KINDS = ("quantum-branched", "shadow-comparison", "superwire")
SCAN_KINDS = ("stability-scan", "retention-scan")

CLASSICAL_SOURCES = ("point-source", "plane-manifold", "gaussian-ensemble")
QUANTUM_SOURCES = ("gaussian", "plane-wave", "bloch")

SECTIONS = (
    "scenario",
    "potential",
    "initial_state",
    "numerics",
    "absorber",
    "energy_filter",
    "analysis",
    "scan",
    "map",
    "outputs",
)


class ScenarioError(ValueError):
    """All validation problems of one scenario, each "<dotted.path>: <message>" """

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("Invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Key:
    type: str
    default: Any = None
    choices: Optional[Sequence[str]] = None
    length: Optional[int] = None
    required: bool = False
    schema: Optional[Dict[str, "Key"]] = None


def _nested(schema: Dict[str, Key], default=None) -> Key:
    return Key("section", default=default, schema=schema)


LATTICE_SCHEMA = {
    "kind": Key("str", "square", choices=("square", "triangular", "random")),
    "constant": Key("float", 1.0),
    "extent": Key("floats", [-10.0, 10.0, -10.0, 10.0], length=4),
    "origin": Key("floats", [0.0, 0.0], length=2),
    "count": Key("int", 0),
    "min_spacing": Key("float", None),
}

GRID_SCHEMA = {
    "nx": Key("int", 256),
    "ny": Key("int", 256),
    "extent": Key("floats", [-10.0, 10.0, -10.0, 10.0], length=4),
}

DISK_SCHEMA = {
    "center": Key("floats", [0.0, 0.0], length=2),
    "radius": Key("float", 1.0),
    "width": Key("float", 1.0),
    "strength": Key("float", None),
}

DIFFUSION_SCHEMA = {
    "n_traj": Key("int", 1000),
    "n_steps": Key("int", 1000),
}

SCHEMA: Dict[str, Dict[str, Key]] = {
    "scenario": {
        "name": Key("str", required=True),
        "kind": Key("str", required=True, choices=EXPERIMENT_KINDS),
        "seed": Key("int", 0),
        "description": Key("str", ""),
    },
    "potential": {
        "kind": Key("str", "zero", choices=("zero", "constant", "cosine", "mathieu", "fermi")),
        "amplitude": Key("float", 1.0),
        "sigma": Key("float", 0.1),
        "r_off": Key("float", 0.0),
        "a": Key("float", 1.0),
        "q": Key("float", 0.0),
        "value": Key("float", 0.0),
        "lattice": _nested(LATTICE_SCHEMA),
    },
    "initial_state": {
        "kind": Key("str", "point-source", choices=CLASSICAL_SOURCES + QUANTUM_SOURCES),
        "center": Key("floats", [0.0, 0.0], length=2),
        "speed": Key("float", math.sqrt(2.0)),
        "angle_deg": Key("float", 0.0),
        "wedge_deg": Key("float", 360.0),
        "n": Key("int", 1000),
        "y_range": Key("floats", [-1.0, 1.0], length=2),
        "x0": Key("float", 0.0),
        "sigma0": Key("float", 0.5),
        "k0": Key("floats", [1.0, 0.0], length=2),
        "k": Key("floats", [0.0, 0.0], length=2),
        "band": Key("int", 0),
        "envelope_sigma": Key("float", None),
    },
    "numerics": {
        "dt": Key("float", None),
        "steps": Key("int", 1000),
        "integrator": Key("str", None, choices=("verlet", "yoshida4")),
        "scheme": Key("str", "strang", choices=("strang", "lie")),
        "observe_every": Key("int", None),
        "hbar": Key("float", 1.0),
        "mass": Key("float", 1.0),
        "grid": _nested(GRID_SCHEMA),
        "domain": Key("floats", None, length=4),
    },
    "absorber": {
        "border_width": Key("float", None),
        "strength": Key("float", 0.05),
        "disk": _nested(DISK_SCHEMA),
    },
    "energy_filter": {
        "energies": Key("floats", []),
        "window": Key("str", "hann", choices=("hann", "rect")),
    },
    "analysis": {
        "channel_y0": Key("float", 0.0),
        "channel_half_width": Key("float", math.pi / 2.0),
        "cross_half_width": Key("float", None),
        "divergence_samples": Key("int", 0),
        "divergence_delta0": Key("float", 1e-8),
        "divergence_time": Key("float", None),
        "quantum_correspondence": Key("bool", False),
        "coarse_factor": Key("int", 4),
        "shadow_half_angle_deg": Key("float", 20.0),
        "shadow_length": Key("float", None),
        "baseline": Key("bool", True),
        "lattice_period": Key("float", math.pi),
    },
    "scan": {
        "a_range": Key("floats", [-1.0, 5.0], length=2),
        "q_range": Key("floats", [-2.0, 2.0], length=2),
        "resolution": Key("ints", [40, 40], length=2),
        "omega": Key("float", 1.0),
        "T": Key("float", 1.0),
        "wedge_deg": Key("float", 60.0),
        "n_traj": Key("int", 100),
        "t_final": Key("float", None),
    },
    "map": {
        "K": Key("float", 1.0),
        "n_steps": Key("int", 10),
        "snapshot_at": Key("ints", None),
        "points_per_curve": Key("int", 400),
        "diffusion": _nested(DIFFUSION_SCHEMA),
    },
    "outputs": {
        "grids": Key("bool", True),
        "images": Key("bool", True),
        "points": Key("bool", True),
        "report": Key("bool", True),
        "snapshots": Key("ints", []),
    },
}


@dataclass
class Scenario:
    """A fully defaulted, validated scenario; equal scenarios run identically"""

    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.sections["scenario"]["name"]

    @property
    def kind(self) -> str:
        return self.sections["scenario"]["kind"]

    @property
    def seed(self) -> int:
        return self.sections["scenario"]["seed"]

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.sections[section]

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.sections)


def _suggest(key: str, valid: Sequence[str]) -> str:
    close = difflib.get_close_matches(key, list(valid), n=1, cutoff=0.5)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _coerce(value: Any, key: Key, path: str, errors: List[str]) -> Any:
    if value is None:
        return None

    def number(v, kind):
        if isinstance(v, bool):
            raise ValueError
        if kind == "int":
            if isinstance(v, float) and not v.is_integer():
                raise ValueError
            return int(v)
        result = float(v)
        if not math.isfinite(result):
            raise ValueError
        return result

    try:
        if key.type in ("float", "int"):
            return number(value, key.type)
        if key.type == "str":
            if not isinstance(value, str):
                raise ValueError
            if key.choices and value not in key.choices:
                errors.append(
                    f"{path}: '{value}' is not one of {', '.join(key.choices)}{_suggest(value, key.choices)}"
                )
            return value
        if key.type == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if key.type in ("floats", "ints"):
            if not isinstance(value, (list, tuple)):
                raise ValueError
            if key.length is not None and len(value) != key.length:
                errors.append(f"{path}: expected {key.length} values, got {len(value)}")
                return list(value)
            return [number(v, key.type[:-1]) for v in value]
    except (TypeError, ValueError):
        expected = {
            "float": "a finite number",
            "int": "an integer",
            "str": "a string",
            "bool": "true or false",
            "floats": "a list of numbers",
            "ints": "a list of integers",
        }[key.type]
        errors.append(f"{path}: expected {expected}, got {value!r}")
        return copy.deepcopy(key.default)
    raise ValueError(f"Unknown schema type {key.type}")


def _parse_section(data: Any, schema: Dict[str, Key], path: str, errors: List[str]) -> Dict[str, Any]:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping, got {type(data).__name__}")
        data = {}

    for key in data:
        if key not in schema:
            errors.append(f"{path}.{key}: unknown key{_suggest(str(key), schema)}")

    result: Dict[str, Any] = {}
    for name, key in schema.items():
        where = f"{path}.{name}"
        if name not in data:
            if key.required:
                errors.append(f"{where}: required")
            result[name] = copy.deepcopy(key.default)
            continue
        value = data[name]
        if key.type == "section":
            result[name] = None if value is None else _parse_section(value, key.schema, where, errors)
        else:
            result[name] = _coerce(value, key, where, errors)
    return result


def _check_positive(errors, path, value, strict=True):
    if value is None:
        return
    if (strict and not value > 0) or (not strict and value < 0):
        errors.append(f"{path}: must be {'> 0' if strict else '>= 0'}, got {value}")


def _grid_spacing(grid: Dict[str, Any]) -> Optional[float]:
    try:
        x0, x1, y0, y1 = grid["extent"]
        return max((x1 - x0) / grid["nx"], (y1 - y0) / grid["ny"])
    except (TypeError, ValueError, ZeroDivisionError):
        return None


def _check_physics(
    s: Dict[str, Dict[str, Any]], errors: List[str], dirty: AbstractSet[str] = frozenset()
) -> None:
    """Cross-field checks, limited to sections that parsed without errors"""

    def clean(*names: str) -> bool:
        return dirty.isdisjoint(names)

    kind = s["scenario"]["kind"] if clean("scenario") else None
    pot = s["potential"]
    init = s["initial_state"]
    num = s["numerics"]
    absorber = s["absorber"]

    if clean("potential") and pot["kind"] == "fermi":
        _check_positive(errors, "potential.sigma", pot["sigma"])
        _check_positive(errors, "potential.r_off", pot["r_off"], strict=False)
        lattice = pot["lattice"]
        if lattice is None:
            errors.append("potential.lattice: required for kind 'fermi'")
        else:
            _check_positive(errors, "potential.lattice.constant", lattice["constant"])
            if lattice["kind"] == "random" and lattice["count"] < 1:
                errors.append("potential.lattice.count: random lattices need count >= 1")
            ext = lattice["extent"]
            if len(ext) == 4 and not (ext[1] > ext[0] and ext[3] > ext[2]):
                errors.append("potential.lattice.extent: expected x0 < x1 and y0 < y1")
    if clean("potential") and pot["kind"] == "cosine" and pot["amplitude"] == 0:
        errors.append("potential.amplitude: cosine lattice needs a non-zero amplitude")

    if clean("numerics"):
        _check_numerics(num, kind, errors)
    grid = num["grid"]

    if kind == "classical-density" and clean("initial_state", "numerics"):
        if init["kind"] not in CLASSICAL_SOURCES:
            errors.append(
                f"initial_state.kind: '{init['kind']}' is not a classical source ({', '.join(CLASSICAL_SOURCES)})"
            )
        if grid is None:
            errors.append("numerics.grid: required for classical-density")
        if init["n"] < 1:
            errors.append("initial_state.n: must be >= 1")
        if not 0 < init["wedge_deg"] <= 360:
            errors.append(f"initial_state.wedge_deg: must lie in (0, 360], got {init['wedge_deg']}")

    if kind in QUANTUM_KINDS and clean("initial_state", "numerics", "absorber", "energy_filter"):
        allowed = ("gaussian",) if kind == "superwire" else QUANTUM_SOURCES
        if init["kind"] not in allowed:
            errors.append(f"initial_state.kind: '{init['kind']}' not allowed for {kind} ({', '.join(allowed)})")
        if grid is None:
            errors.append(f"numerics.grid: required for {kind}")
        if num["dt"] is None:
            errors.append(f"numerics.dt: required for {kind}")
        spacing = _grid_spacing(grid) if grid is not None else None
        if spacing is not None and init["kind"] == "gaussian" and not init["sigma0"] > spacing:
            errors.append(
                f"initial_state.sigma0: {init['sigma0']} is not resolved by grid spacing {spacing:.4g}"
            )
        if not 0 <= absorber["strength"] < 1:
            errors.append(f"absorber.strength: must lie in [0, 1), got {absorber['strength']}")
        if spacing is not None:
            if absorber["border_width"] is not None and absorber["border_width"] < 4 * spacing:
                errors.append(
                    f"absorber.border_width: {absorber['border_width']} is thinner than 4 grid cells ({4 * spacing:.4g})"
                )
            disk = absorber["disk"]
            if disk is not None and disk["width"] < 4 * spacing:
                errors.append(
                    f"absorber.disk.width: {disk['width']} is thinner than 4 grid cells ({4 * spacing:.4g})"
                )
        disk = absorber["disk"]
        if disk is not None and disk["strength"] is not None and not 0 <= disk["strength"] < 1:
            errors.append(f"absorber.disk.strength: must lie in [0, 1), got {disk['strength']}")
        if kind == "shadow-comparison" and absorber["disk"] is None:
            errors.append("absorber.disk: required for shadow-comparison")
        if kind == "superwire" and not s["energy_filter"]["energies"]:
            errors.append("energy_filter.energies: superwire needs at least one energy")

    if clean("analysis"):
        analysis = s["analysis"]
        if analysis["divergence_samples"] < 0:
            errors.append("analysis.divergence_samples: must be >= 0")
        _check_positive(errors, "analysis.divergence_delta0", analysis["divergence_delta0"])
        _check_positive(errors, "analysis.divergence_time", analysis["divergence_time"])

    if kind in SCAN_KINDS and clean("scan"):
        scan = s["scan"]
        for name in ("a_range", "q_range"):
            r = scan[name]
            if len(r) == 2 and not r[1] > r[0]:
                errors.append(f"scan.{name}: expected min < max, got {r}")
        if any(n < 2 for n in scan["resolution"]):
            errors.append(f"scan.resolution: each axis needs >= 2 nodes, got {scan['resolution']}")
        _check_positive(errors, "scan.omega", scan["omega"])
        _check_positive(errors, "scan.T", scan["T"])
        if not 0 < scan["wedge_deg"] <= 360:
            errors.append(f"scan.wedge_deg: must lie in (0, 360], got {scan['wedge_deg']}")
        if scan["n_traj"] < 1:
            errors.append("scan.n_traj: must be >= 1")
        _check_positive(errors, "scan.t_final", scan["t_final"])

    if kind == "manifold-map" and clean("map"):
        m = s["map"]
        if m["n_steps"] < 0:
            errors.append("map.n_steps: must be >= 0")
        marks = m["snapshot_at"]
        if marks is not None:
            if marks != sorted(marks):
                errors.append(f"map.snapshot_at: must be sorted, got {marks}")
            if marks and (marks[0] < 0 or marks[-1] > m["n_steps"]):
                errors.append(f"map.snapshot_at: values must lie in [0, {m['n_steps']}]")


def _check_numerics(num: Dict[str, Any], kind: Optional[str], errors: List[str]) -> None:
    if num["dt"] is not None:
        _check_positive(errors, "numerics.dt", num["dt"])
    if num["steps"] < 1:
        errors.append(f"numerics.steps: must be >= 1, got {num['steps']}")
    if num["observe_every"] is not None and num["observe_every"] < 1:
        errors.append("numerics.observe_every: must be >= 1")
    _check_positive(errors, "numerics.hbar", num["hbar"])
    _check_positive(errors, "numerics.mass", num["mass"])

    grid = num["grid"]
    if grid is not None:
        ext = grid["extent"]
        if len(ext) == 4 and not (ext[1] > ext[0] and ext[3] > ext[2]):
            errors.append("numerics.grid.extent: expected x0 < x1 and y0 < y1")
        minimum = 8 if kind in QUANTUM_KINDS else 2
        for axis in ("nx", "ny"):
            if grid[axis] < minimum:
                errors.append(f"numerics.grid.{axis}: must be >= {minimum}, got {grid[axis]}")


def validate_document(data: Any) -> Scenario:
    errors: List[str] = []
    if not isinstance(data, dict):
        raise ScenarioError([f"<root>: expected a mapping of sections, got {type(data).__name__}"])
    for section in data:
        if section not in SCHEMA:
            errors.append(f"{section}: unknown section{_suggest(str(section), SCHEMA)}")
    sections: Dict[str, Dict[str, Any]] = {}
    dirty = set()
    for name in SECTIONS:
        before = len(errors)
        sections[name] = _parse_section(data.get(name), SCHEMA[name], name, errors)
        if len(errors) > before:
            dirty.add(name)
    _check_physics(sections, errors, dirty)
    if errors:
        raise ScenarioError(errors)
    return Scenario(sections)


def parse_scenario(text: str, overrides: Sequence[str] = ()) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError([f"<root>: not valid YAML ({e})"])
    if data is None:
        data = {}
    if overrides:
        data = apply_overrides(data, overrides)
    return validate_document(data)


def serialize_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None)


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply "section.key=value" assignments; values are parsed as YAML"""
    result = copy.deepcopy(data) if isinstance(data, dict) else {}
    errors = []
    for item in overrides:
        if "=" not in item:
            errors.append(f"--override {item}: expected section.key=value")
            continue
        path, raw = item.split("=", 1)
        parts = [p for p in path.strip().split(".") if p]
        if len(parts) < 2:
            errors.append(f"--override {item}: expected section.key=value")
            continue
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        target = result
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                target[part] = {}
            target = target[part]
        target[parts[-1]] = value
    if errors:
        raise ScenarioError(errors)
    return result


class ScenarioParser:
    def parse(self, file_path: Path, overrides: Sequence[str] = ()) -> Scenario:
        """Parse a scenario file"""
        try:
            content = Path(file_path).read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioError([f"<file>: cannot read {file_path}: {e}"])
        return parse_scenario(content, overrides)
