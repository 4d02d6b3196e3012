"""Simulation configuration: schema, validation, presets and initial data.

A configuration is a JSON object.  Every section is optional and falls back
to defaults; ``"preset"`` names a built-in scenario whose document is used as
the base onto which the remaining keys are merged.  Validation collects every
violation before raising, each tagged with its dotted path.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .horizon import InitialDataSummary
from .interp import KINDS
from .kinetic import MIN_NODES, DistributionGrid, PhaseSpaceGrid, neutralize_background


# ---------------------------------------------------------------- profiles

def bump(r, power: int = 2):
    """Compactly supported bump (1 - r^2)^power on |r| < 1, zero outside.

    ``power = 2`` is C^1 across the edge; each extra power adds one order of
    smoothness.
    """
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    return np.where(inside, (1.0 - np.minimum(r * r, 1.0)) ** power, 0.0)


@dataclass
class XProfile:
    """One spatial bump: amplitude * bump((x - center) / width)."""

    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    power: int = 2

    def evaluate(self, x):
        return self.amplitude * bump((np.asarray(x) - self.center) / self.width, self.power)

    @property
    def x_radius(self) -> float:
        return abs(self.center) + self.width if self.amplitude != 0 else 0.0


@dataclass
class FProfile:
    """Phase-space bump: A * bump((x - xc)/wx) * bump(|v - vc| / wv)."""

    amplitude: float = 0.0
    x_center: float = 0.0
    x_width: float = 0.5
    v_center: list = field(default_factory=lambda: [0.0, 0.0])
    v_width: float = 0.5
    power: int = 2

    def evaluate(self, X, V1, V2):
        rx = (X - self.x_center) / self.x_width
        rv = np.hypot(V1 - self.v_center[0], V2 - self.v_center[1]) / self.v_width
        return self.amplitude * bump(rx, self.power) * bump(rv, self.power)

    @property
    def v_radius(self) -> float:
        return math.hypot(*self.v_center) + self.v_width if self.amplitude != 0 else 0.0

    @property
    def x_radius(self) -> float:
        return abs(self.x_center) + self.x_width if self.amplitude != 0 else 0.0


# ------------------------------------------------------------------ schema

@dataclass
class GridConfig:
    x_min: float = -1.5
    x_max: float = 1.5
    nx: int = 128
    v_max: float = 1.7
    nv1: int = 48
    nv2: int = 48

    def build(self) -> PhaseSpaceGrid:
        return PhaseSpaceGrid(self.x_min, self.x_max, self.nx, self.v_max, self.nv1, self.nv2)


@dataclass
class TimeConfig:
    t_end: float = 1.0
    cfl: float = 0.5
    dt: float | None = None


@dataclass
class InitialDataConfig:
    f: list = field(default_factory=list)
    theta2: list = field(default_factory=list)
    thetaB: list = field(default_factory=list)
    n: object = "auto"
    P0: float | None = None
    summary: dict | None = None


@dataclass
class SolverConfig:
    mode: str = "direct"
    interp_order: int = 3
    kinetic_interp: str = "spline"
    clip: bool = False
    field_iterations: int = 2
    picard_tol: float = 1e-11
    picard_max_iter: int = 30


@dataclass
class Tolerances:
    eps_guard: float = 1e-3
    separation_floor: float = 1e-6
    support_rel_tol: float = 1e-6
    boundary_tol_rel: float = 1e-6
    field_boundary_tol: float = 1e-6
    f_overshoot_rel: float = 1e-3
    envelope_slack: float = 1e-3
    support_growth_tol: float = 1e-6
    safety_fraction: float = 0.01
    t_max: float = 1e3
    envelope_dt: float = 1e-3


@dataclass
class OutputConfig:
    cadence: int = 1
    snapshot_times: list = field(default_factory=list)


@dataclass
class Overrides:
    certified: bool = False
    assumptions: bool = False
    grid_envelope: bool = False


@dataclass
class SimConfig:
    preset: str | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputConfig = field(default_factory=OutputConfig)
    overrides: Overrides = field(default_factory=Overrides)

    # -- derived quantities
    @property
    def f_profiles(self) -> list[FProfile]:
        return [FProfile(**c) for c in self.initial_data.f]

    def x_profiles(self, name: str) -> list[XProfile]:
        return [XProfile(**c) for c in getattr(self.initial_data, name)]

    @property
    def P0(self) -> float:
        if self.initial_data.P0 is not None:
            return float(self.initial_data.P0)
        return max([p.v_radius for p in self.f_profiles], default=0.0)

    def time_step(self) -> tuple[float, int]:
        """(dt, number of steps) with dt adjusted to land exactly on t_end."""
        g = self.grid
        dx = (g.x_max - g.x_min) / (g.nx - 1)
        dt = self.time.dt if self.time.dt is not None else self.time.cfl * dx
        nt = max(1, int(math.ceil(self.time.t_end / dt - 1e-9)))
        return self.time.t_end / nt, nt

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(obj) -> str:
    """Canonical JSON text used for config echoes and summaries."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ----------------------------------------------------------------- presets

def _simple_wave() -> dict:
    # alpha = 0 and beta = 0.3 * bump: theta2 = thetaB = beta / 2
    wave = {"amplitude": 0.15, "center": -0.5, "width": 0.5, "power": 2}
    return {
        "grid": {"x_min": -2.5, "x_max": 2.5, "nx": 320, "v_max": 1.0, "nv1": 4, "nv2": 4},
        "time": {"t_end": 1.0, "cfl": 0.5},
        "initial_data": {"f": [], "theta2": [dict(wave)], "thetaB": [dict(wave)], "n": "auto"},
        "output": {"cadence": 8, "snapshot_times": [0.0, 1.0]},
    }


def _small_coupled() -> dict:
    return {
        "grid": {"x_min": -1.5, "x_max": 1.5, "nx": 128, "v_max": 1.7, "nv1": 48, "nv2": 48},
        "time": {"t_end": 0.5, "cfl": 0.5},
        "initial_data": {
            "f": [{"amplitude": 0.05, "x_center": 0.0, "x_width": 0.5,
                   "v_center": [0.1, 0.1], "v_width": 0.35, "power": 2}],
            "theta2": [{"amplitude": 0.1, "center": -0.1, "width": 0.4, "power": 2}],
            "thetaB": [{"amplitude": 0.1, "center": 0.1, "width": 0.4, "power": 2}],
            "n": [{"amplitude": 1.0, "center": 0.0, "width": 0.6, "power": 2}],
            "P0": 0.5,
        },
        "output": {"cadence": 1, "snapshot_times": [0.0, 0.25, 0.5]},
    }


def _guard_blowup() -> dict:
    # beta = theta2 + thetaB starts 1e-2 below -pi/2 and a strong positive j2
    # drives it further down; alpha = 0 keeps the particles well separated
    half = 0.5 * (0.5 * math.pi - 1e-2)
    field_bump = {"amplitude": -half, "center": 0.0, "width": 1.5, "power": 2}
    return {
        "grid": {"x_min": -2.0, "x_max": 2.0, "nx": 128, "v_max": 2.0, "nv1": 64, "nv2": 64},
        "time": {"t_end": 1.0, "cfl": 0.5},
        "initial_data": {
            "f": [{"amplitude": 6.0, "x_center": 0.0, "x_width": 0.5,
                   "v_center": [1.0, 1.0], "v_width": 0.25, "power": 2}],
            "theta2": [dict(field_bump)],
            "thetaB": [dict(field_bump)],
            "n": "auto",
        },
        "output": {"cadence": 1, "snapshot_times": [0.0, 0.05]},
        "overrides": {"certified": True, "assumptions": True, "grid_envelope": True},
    }


def _a3_violation() -> dict:
    doc = _small_coupled()
    doc["initial_data"]["theta2"][0]["amplitude"] = 0.4
    doc["initial_data"]["thetaB"][0]["amplitude"] = 0.4
    doc["initial_data"]["f"][0]["v_center"] = [0.0, 0.0]
    doc["initial_data"]["f"][0]["v_width"] = 1.0
    doc["initial_data"]["P0"] = 1.0
    return doc


def _horizon_linear() -> dict:
    return {
        "initial_data": {"summary": {"theta2_sup": 0.25, "thetaB_sup": 0.25, "f_sup": 0.0,
                                     "f_l1": 0.0, "n_sup": 0.1, "n_l1": 0.0, "P0": 1.0}},
    }


def _vacuum() -> dict:
    return {
        "grid": {"x_min": -1.0, "x_max": 1.0, "nx": 32, "v_max": 1.0, "nv1": 8, "nv2": 8},
        "time": {"t_end": 0.25, "cfl": 0.5},
        "output": {"cadence": 1, "snapshot_times": [0.0, 0.25]},
    }


PRESETS = {
    "vacuum": _vacuum,
    "simple_wave": _simple_wave,
    "small_coupled": _small_coupled,
    "guard_blowup": _guard_blowup,
    "a3_violation": _a3_violation,
    "horizon_linear": _horizon_linear,
}


def preset_document(name: str) -> dict:
    return PRESETS[name]()


def deep_merge(base: dict, top: dict) -> dict:
    """Recursively merge ``top`` into a copy of ``base``; lists are replaced."""
    out = copy.deepcopy(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


# -------------------------------------------------------------- validation

_SECTIONS = {
    "grid": GridConfig,
    "time": TimeConfig,
    "initial_data": InitialDataConfig,
    "solver": SolverConfig,
    "tolerances": Tolerances,
    "output": OutputConfig,
    "overrides": Overrides,
}

_SUMMARY_KEYS = ("theta2_sup", "thetaB_sup", "f_sup", "f_l1", "n_sup", "n_l1", "P0")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_section(path, cls, doc, errors):
    """Type-check one flat section against the dataclass defaults."""
    if not isinstance(doc, dict):
        errors.append((path, "must be an object"))
        return {}
    known = {f.name: f for f in fields(cls)}
    defaults = asdict(cls())
    out = {}
    for key, value in doc.items():
        if key not in known:
            errors.append((f"{path}.{key}", "unknown key"))
            continue
        default = defaults[key]
        where = f"{path}.{key}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                errors.append((where, "must be true or false"))
                continue
        elif isinstance(default, int):
            if not _is_int(value):
                errors.append((where, "must be an integer"))
                continue
        elif isinstance(default, float) or (default is None and key in ("dt", "P0")):
            if value is not None and not _is_number(value):
                errors.append((where, "must be a finite number"))
                continue
            value = None if value is None else float(value)
        out[key] = value
    return out


def _check_profiles(path, items, cls, errors):
    if not isinstance(items, list):
        errors.append((path, "must be a list of profile objects"))
        return []
    out = []
    names = {f.name for f in fields(cls)}
    for i, item in enumerate(items):
        where = f"{path}[{i}]"
        if not isinstance(item, dict):
            errors.append((where, "must be an object"))
            continue
        bad = False
        for key, value in item.items():
            if key not in names:
                errors.append((f"{where}.{key}", "unknown key"))
                bad = True
            elif key == "power":
                if not _is_int(value) or value < 2:
                    errors.append((f"{where}.power", "must be an integer >= 2 (C1 profiles)"))
                    bad = True
            elif key == "v_center":
                if not (isinstance(value, list) and len(value) == 2
                        and all(_is_number(c) for c in value)):
                    errors.append((f"{where}.v_center", "must be a pair of numbers"))
                    bad = True
            elif not _is_number(value):
                errors.append((f"{where}.{key}", "must be a finite number"))
                bad = True
        if bad:
            continue
        prof = asdict(cls(**item))
        for key in ("width", "x_width", "v_width"):
            if key in prof and not prof[key] > 0:
                errors.append((f"{where}.{key}", "must be positive"))
                bad = True
        if cls is FProfile and prof["amplitude"] < 0:
            errors.append((f"{where}.amplitude", "distribution must be nonnegative"))
            bad = True
        if not bad:
            for key, value in prof.items():
                if key == "v_center":
                    prof[key] = [float(c) for c in value]
                elif key != "power":
                    prof[key] = float(value)
            out.append(prof)
    return out


def validate_document(doc) -> SimConfig:
    """Turn a (preset-expanded) document into a SimConfig or raise ConfigError."""
    errors: list[tuple[str, str]] = []
    if not isinstance(doc, dict):
        raise ConfigError([("$", "configuration must be a JSON object")])

    preset = doc.get("preset")
    if preset is not None:
        if not isinstance(preset, str) or preset not in PRESETS:
            errors.append(("preset", f"unknown preset; choose from {sorted(PRESETS)}"))
            preset = None
        else:
            doc = deep_merge(preset_document(preset), {k: v for k, v in doc.items() if k != "preset"})

    for key in doc:
        if key not in _SECTIONS and key != "preset":
            errors.append((key, "unknown section"))

    sections = {}
    for name, cls in _SECTIONS.items():
        raw = doc.get(name, {})
        if name == "initial_data":
            sections[name] = _check_initial_data(raw, errors)
        else:
            sections[name] = _check_section(name, cls, raw, errors)

    # keys that failed type checks were dropped, so the value checks below
    # still run on the rest and every violation is reported together
    cfg = SimConfig(
        preset=preset,
        grid=GridConfig(**sections["grid"]),
        time=TimeConfig(**sections["time"]),
        initial_data=InitialDataConfig(**sections["initial_data"]),
        solver=SolverConfig(**sections["solver"]),
        tolerances=Tolerances(**sections["tolerances"]),
        output=OutputConfig(**sections["output"]),
        overrides=Overrides(**sections["overrides"]),
    )
    _check_values(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _check_initial_data(raw, errors) -> dict:
    path = "initial_data"
    if not isinstance(raw, dict):
        errors.append((path, "must be an object"))
        return {}
    known = {f.name for f in fields(InitialDataConfig)}
    out = {}
    for key, value in raw.items():
        where = f"{path}.{key}"
        if key not in known:
            errors.append((where, "unknown key"))
        elif key == "f":
            out[key] = _check_profiles(where, value, FProfile, errors)
        elif key in ("theta2", "thetaB"):
            out[key] = _check_profiles(where, value, XProfile, errors)
        elif key == "n":
            if value == "auto":
                out[key] = "auto"
            else:
                out[key] = _check_profiles(where, value, XProfile, errors)
        elif key == "P0":
            if value is not None and not (_is_number(value) and value >= 0):
                errors.append((where, "must be a nonnegative number"))
            else:
                out[key] = None if value is None else float(value)
        elif key == "summary":
            if value is None:
                out[key] = None
                continue
            if not isinstance(value, dict):
                errors.append((where, "must be an object"))
                continue
            bad = False
            for k in value:
                if k not in _SUMMARY_KEYS:
                    errors.append((f"{where}.{k}", "unknown key"))
                    bad = True
            for k in _SUMMARY_KEYS:
                v = value.get(k)
                if not (_is_number(v) and v >= 0):
                    errors.append((f"{where}.{k}", "required nonnegative number"))
                    bad = True
            if not bad:
                out[key] = {k: float(value[k]) for k in _SUMMARY_KEYS}
    return out


def _check_values(cfg: SimConfig, errors) -> None:
    g = cfg.grid
    for name in ("nx", "nv1", "nv2"):
        if getattr(g, name) < MIN_NODES:
            errors.append((f"grid.{name}", f"grid too coarse: need at least {MIN_NODES} nodes"))
    if not g.x_max > g.x_min:
        errors.append(("grid.x_max", "must exceed grid.x_min"))
    if not g.v_max > 0:
        errors.append(("grid.v_max", "must be positive"))

    t = cfg.time
    if not t.t_end > 0:
        errors.append(("time.t_end", "must be positive"))
    if t.dt is not None:
        if not t.dt > 0:
            errors.append(("time.dt", "must be positive"))
        elif g.nx > 1 and g.x_max > g.x_min and t.dt > (g.x_max - g.x_min) / (g.nx - 1):
            errors.append(("time.dt", "exceeds dx: field feet would move more than one cell"))
    if not (0 < t.cfl <= 1):
        errors.append(("time.cfl", "must lie in (0, 1]"))

    s = cfg.solver
    if s.mode not in ("direct", "picard"):
        errors.append(("solver.mode", "must be 'direct' or 'picard'"))
    if s.interp_order not in (1, 3):
        errors.append(("solver.interp_order", "must be 1 (linear) or 3 (cubic)"))
    if s.kinetic_interp not in KINDS:
        errors.append(("solver.kinetic_interp", f"must be one of {', '.join(KINDS)}"))
    if s.field_iterations < 1:
        errors.append(("solver.field_iterations", "must be at least 1"))
    if not s.picard_tol > 0:
        errors.append(("solver.picard_tol", "must be positive"))
    if s.picard_max_iter < 1:
        errors.append(("solver.picard_max_iter", "must be at least 1"))

    for f in fields(Tolerances):
        if not getattr(cfg.tolerances, f.name) > 0:
            errors.append((f"tolerances.{f.name}", "must be positive"))
    if not cfg.tolerances.safety_fraction < 1:
        errors.append(("tolerances.safety_fraction", "must be below 1"))

    o = cfg.output
    if o.cadence < 1:
        errors.append(("output.cadence", "must be at least 1"))
    if not isinstance(o.snapshot_times, list) or not all(
            _is_number(v) and v >= 0 for v in o.snapshot_times):
        errors.append(("output.snapshot_times", "must be a list of nonnegative times"))
    else:
        o.snapshot_times = [float(v) for v in o.snapshot_times]

    idata = cfg.initial_data
    if idata.summary is not None and (idata.f or idata.theta2 or idata.thetaB):
        errors.append(("initial_data.summary", "give either a norm summary or profiles, not both"))
    if idata.summary is None and idata.P0 is not None:
        radius = max([p.v_radius for p in cfg.f_profiles], default=0.0)
        if idata.P0 < radius:
            errors.append(("initial_data.P0",
                           f"smaller than the support radius {radius:.6g} of the profiles"))


def parse_config(text: str) -> SimConfig:
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"malformed JSON: {exc.msg} at line {exc.lineno}")]) from exc
    return validate_document(doc)


def config_from_preset(name: str, **sections) -> SimConfig:
    """Preset plus section overrides, e.g. ``grid={"nx": 64}``."""
    doc = {"preset": name}
    doc.update(sections)
    return validate_document(doc)


# -------------------------------------------------------------- initial data

@dataclass
class InitialData:
    grid: PhaseSpaceGrid
    f: np.ndarray
    theta2: np.ndarray
    thetaB: np.ndarray
    n: np.ndarray
    P0: float
    sup_bounds: dict = field(default_factory=dict)


def build_initial_data(cfg: SimConfig) -> InitialData:
    """Sample the analytic profiles on the grid and neutralize the background."""
    if cfg.initial_data.summary is not None:
        raise ConfigError([("initial_data.summary",
                            "a norm summary has no gridded data; only 'horizon' and 'check' accept it")])
    grid = cfg.grid.build()
    X, V1, V2 = grid.mesh()
    f = np.zeros(grid.shape)
    for p in cfg.f_profiles:
        f += p.evaluate(X, V1, V2)
    x = grid.x
    theta2 = np.zeros(grid.nx)
    for p in cfg.x_profiles("theta2"):
        theta2 += p.evaluate(x)
    thetaB = np.zeros(grid.nx)
    for p in cfg.x_profiles("thetaB"):
        thetaB += p.evaluate(x)
    fg = DistributionGrid(grid, f)
    # grid maxima can miss the peak of a profile between nodes; the sum of
    # amplitudes bounds the continuous sup norm (exactly for one profile)
    bounds = {
        "f_sup": sum(p.amplitude for p in cfg.f_profiles),
        "theta2_sup": sum(abs(p.amplitude) for p in cfg.x_profiles("theta2")),
        "thetaB_sup": sum(abs(p.amplitude) for p in cfg.x_profiles("thetaB")),
    }
    if cfg.initial_data.n == "auto":
        n = neutralize_background(fg, None)
    else:
        raw = np.zeros(grid.nx)
        for p in cfg.x_profiles("n"):
            raw += p.evaluate(x)
        n = neutralize_background(fg, raw)
        total = float(np.sum(grid.x_weights * raw))
        if total != 0.0:
            scale = float(np.sum(grid.x_weights * n)) / total
            bounds["n_sup"] = abs(scale) * sum(abs(p.amplitude) for p in cfg.x_profiles("n"))
    return InitialData(grid, f, theta2, thetaB, n, cfg.P0, bounds)


def summary_from_config(cfg: SimConfig) -> InitialDataSummary | None:
    s = cfg.initial_data.summary
    return None if s is None else InitialDataSummary(**s)


def support_x_radius(cfg: SimConfig) -> float:
    """Largest |x| reached by any initial profile's support."""
    radii = [p.x_radius for p in cfg.f_profiles]
    for name in ("theta2", "thetaB"):
        radii += [p.x_radius for p in cfg.x_profiles(name)]
    if cfg.initial_data.n != "auto":
        radii += [p.x_radius for p in cfg.x_profiles("n")]
    return max(radii, default=0.0)
