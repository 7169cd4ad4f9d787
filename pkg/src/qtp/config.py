"""Scenario configuration: YAML schema, defaults, validation and round-trip."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError, QTPError

SCENARIOS = ("arrival_single", "arrival_pair", "scatter_chain", "hierarchy_check", "mi_sweep")
KERNEL_KINDS = ("exponential", "kallen_lehmann", "pointlike", "constant")
KERNEL_PARAMS = {
    "exponential": ("A", "gamma0", "gamma1"),
    "kallen_lehmann": ("mu0_sq", "width", "scale"),
    "pointlike": ("B", "tau"),
    "constant": ("c",),
}


@dataclass(frozen=True)
class Physics:
    mass: float = 0.0
    momentum: float = 50.0
    width: float = 1.0
    separation: float = 4.0
    detector_position: float = 20.0
    separation_ratio: float | None = None
    second_distance: float = 10.0
    state: str = "gaussian"


@dataclass(frozen=True)
class Numerics:
    n_momentum: int = 2048
    momentum_std: float = 8.0
    time_min: float | None = None
    time_max: float | None = None
    n_time: int = 801
    time_std: float = 8.0
    n_outgoing: int = 128
    q_min: float = 0.6
    q_margin: float = 0.1
    tau_max: float = 40.0
    n_tau: int = 161
    conditional_time: float | None = None


@dataclass(frozen=True)
class Sweep:
    parameter: str = "separation"
    start: float = 1.0
    stop: float = 8.0
    steps: int = 8


@dataclass(frozen=True)
class HierarchyBlock:
    dim: int = 4
    outcomes: int = 4
    seed: int = 0
    g1: list | None = None
    g2: list | None = None
    responses: list | None = None
    states: int = 3
    levels: int = 3


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    physics: Physics = field(default_factory=Physics)
    detector: dict = field(default_factory=lambda: {"first": {"kind": "exponential", "A": 1.0, "gamma0": 0.0,
                                                              "gamma1": 0.0}})
    numerics: Numerics = field(default_factory=Numerics)
    sweep: Sweep = field(default_factory=Sweep)
    hierarchy: HierarchyBlock = field(default_factory=HierarchyBlock)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SCATTER_DETECTOR = {
    "first": {"kind": "pointlike", "B": 1.0, "tau": 5.0},
    "second": {"kind": "exponential", "A": 1.0, "gamma0": 0.0, "gamma1": 0.0},
}

SCENARIO_DEFAULTS = {
    "arrival_single": {},
    "arrival_pair": {"physics": {"separation": 6.0, "detector_position": 60.0}, "numerics": {"n_time": 301}},
    "mi_sweep": {"physics": {"separation": 1.0, "separation_ratio": 0.1}},
    "scatter_chain": {
        "physics": {"mass": 1.0, "momentum": 3.0, "width": 4.0, "separation": 0.0, "detector_position": 0.0,
                    "second_distance": 10.0},
        "detector": _SCATTER_DETECTOR,
        "numerics": {"n_momentum": 42, "momentum_std": 5.0, "n_time": 105, "time_std": 6.0},
    },
    "hierarchy_check": {},
}


def default_config(scenario):
    """Fully populated default configuration of a scenario."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}'; choose from {', '.join(SCENARIOS)}", field="scenario")
    return from_dict({"scenario": scenario})


def _coerce(name, value, template):
    """Convert a raw YAML value to the type of the template default."""
    if value is None:
        return None
    kind = type(template) if template is not None else None
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is float or (template is None and isinstance(value, (int, float))):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {value!r}", field=name) from None
    return value


_FLOAT_OR_NONE = {"separation_ratio", "time_min", "time_max", "conditional_time"}


def _block(cls, raw, base, prefix):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", field=prefix)
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=prefix)
    values = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        template = getattr(base, f.name)
        if f.name in _FLOAT_OR_NONE:
            template = 0.0
        if f.name in ("g1", "g2", "responses"):
            values[f.name] = raw[f.name]
            continue
        values[f.name] = _coerce(f"{prefix}.{f.name}", raw[f.name], template)
    return replace(base, **values)


def _merge(a, b):
    out = dict(a)
    for key, val in b.items():
        out[key] = _merge(out[key], val) if isinstance(val, dict) and isinstance(out.get(key), dict) else val
    return out


def _kernel(spec, name):
    if not isinstance(spec, dict):
        raise ConfigError("expected a mapping", field=name)
    kind = spec.get("kind", "exponential")
    if kind not in KERNEL_KINDS:
        raise ConfigError(f"unknown kernel kind '{kind}'; choose from {', '.join(KERNEL_KINDS)}",
                          field=f"{name}.kind")
    allowed = KERNEL_PARAMS[kind]
    unknown = set(spec) - set(allowed) - {"kind"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for kernel '{kind}'", field=name)
    out = {"kind": kind}
    for key in allowed:
        if key in spec:
            out[key] = _coerce(f"{name}.{key}", spec[key], 0.0)
    return out


def from_dict(data):
    """Validate a raw mapping and fill in scenario defaults."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    unknown = set(data) - {f.name for f in fields(ScenarioConfig)}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}'; choose from {', '.join(SCENARIOS)}", field="scenario")
    merged = _merge(SCENARIO_DEFAULTS[scenario], {k: v for k, v in data.items() if v is not None})
    base = ScenarioConfig(scenario)
    detector_raw = merged.get("detector", base.detector)
    if not isinstance(detector_raw, dict) or set(detector_raw) - {"first", "second"}:
        raise ConfigError("detector block takes 'first' and optionally 'second'", field="detector")
    detector = {key: _kernel(spec, f"detector.{key}") for key, spec in detector_raw.items()}
    if "first" not in detector:
        detector["first"] = dict(base.detector["first"])
    cfg = ScenarioConfig(
        scenario=scenario,
        physics=_block(Physics, merged.get("physics"), Physics(), "physics"),
        detector=detector,
        numerics=_block(Numerics, merged.get("numerics"), Numerics(), "numerics"),
        sweep=_block(Sweep, merged.get("sweep"), Sweep(), "sweep"),
        hierarchy=_block(HierarchyBlock, merged.get("hierarchy"), HierarchyBlock(), "hierarchy"),
    )
    _check_ranges(cfg)
    return cfg


def _require(cond, message, name):
    if not cond:
        raise ConfigError(message, field=name)


def _check_ranges(cfg):
    ph, nu, sw, hi = cfg.physics, cfg.numerics, cfg.sweep, cfg.hierarchy
    _require(ph.mass >= 0, "must be >= 0", "physics.mass")
    _require(ph.momentum > 0, "must be > 0", "physics.momentum")
    _require(ph.width > 0, "must be > 0", "physics.width")
    _require(ph.separation >= 0, "must be >= 0", "physics.separation")
    _require(ph.second_distance > 0, "must be > 0", "physics.second_distance")
    _require(ph.separation_ratio is None or ph.separation_ratio > 0, "must be > 0", "physics.separation_ratio")
    _require(ph.state in ("gaussian", "bimodal"), "must be 'gaussian' or 'bimodal'", "physics.state")
    _require(nu.n_momentum >= 8, "must be >= 8", "numerics.n_momentum")
    _require(nu.momentum_std > 0, "must be > 0", "numerics.momentum_std")
    _require(nu.n_time >= 3, "must be >= 3", "numerics.n_time")
    _require(nu.time_std > 0, "must be > 0", "numerics.time_std")
    _require(nu.n_outgoing >= 8, "must be >= 8", "numerics.n_outgoing")
    _require(nu.q_min > 0, "must be > 0", "numerics.q_min")
    _require(nu.q_margin >= 0, "must be >= 0", "numerics.q_margin")
    _require(nu.tau_max > 0, "must be > 0", "numerics.tau_max")
    _require(nu.n_tau >= 3, "must be >= 3", "numerics.n_tau")
    if (nu.time_min is None) != (nu.time_max is None):
        raise ConfigError("set both time_min and time_max or neither", field="numerics.time_min")
    if nu.time_min is not None:
        _require(nu.time_max > nu.time_min, "must exceed time_min", "numerics.time_max")
    _require(sw.steps >= 1, "must be >= 1", "sweep.steps")
    _require(hi.dim >= 1 and hi.outcomes >= 1 and hi.states >= 1, "sizes must be >= 1", "hierarchy")
    _require(1 <= hi.levels <= 4, "must be between 1 and 4", "hierarchy.levels")
    if cfg.scenario == "scatter_chain":
        _require("second" in cfg.detector, "scatter_chain needs a second detector", "detector.second")
    if cfg.scenario in ("arrival_pair", "mi_sweep"):
        first = cfg.detector["first"]
        _require(first["kind"] == "exponential" or first["kind"] == "pointlike",
                 "the pair scenarios assume maximum localization (exponential or pointlike kernel)",
                 "detector.first.kind")


def load_config(path):
    """Parse, validate and resolution-check a YAML configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML parse error: {exc.problem}", line=mark.line + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from None
    cfg = from_dict(data if data is not None else {})
    check_numerics(cfg)
    return cfg


def check_numerics(cfg):
    """Build the grids a run would use and apply the oscillation-resolution rule."""
    from .scenarios import plan_grids

    try:
        plan_grids(cfg)
    except ConfigError:
        raise
    except QTPError as exc:
        raise ConfigError(str(exc), field="numerics") from None
    return cfg


def dump_config(cfg, path=None):
    """YAML text of a configuration; written to ``path`` when given."""
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text


def set_parameter(cfg, name, value):
    """Copy of ``cfg`` with one parameter replaced, addressed as 'block.key' or a bare physics key."""
    block, _, key = name.rpartition(".")
    block = block or "physics"
    if block not in ("physics", "numerics"):
        raise ConfigError("only physics and numerics parameters can be swept", field=name)
    raw = cfg.to_dict()
    if key not in raw[block]:
        raise ConfigError(f"unknown parameter '{key}'", field=name)
    raw[block][key] = value
    return from_dict(raw)
