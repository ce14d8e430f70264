"""Run configuration: JSON document, environment overrides, command-line flags.

Precedence, lowest first: built-in defaults, the JSON file, ``TAPERQED_*``
environment variables, explicit flags.  Environment keys are the
upper-cased config keys, e.g. ``TAPERQED_DX=5`` or
``TAPERQED_WORKERS=4``; values are parsed as JSON when possible.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import CrossSectionSpec, GeometryError, GridSpec, validate

ENV_PREFIX = "TAPERQED_"


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    wch: list = field(default_factory=lambda: list(range(190, 351, 10)))  # nm
    axes: tuple = ("x", "z")
    z_scan: tuple = (1.0, 5.0)  # um, collection window
    z_points: int = 801
    workers: int = 1
    output: str = "out"
    seed: int = 20091
    radiation: dict = field(default_factory=lambda: {"kind": "calibrated", "target": 0.73,
                                                     "reference_wch": 220.0})
    z0: object = "half_beat"  # um, or "half_beat" for L_pi / 2
    zmax: float = 8.0  # um beyond z0
    t_points: int = 1601
    detuning: float = 0.0
    lineshape_span: float = 5.0
    lineshape_points: int = 201
    fig4_wch: tuple = (220.0, 300.0)
    transmit_axis: str = "x"

    def __post_init__(self):
        self.wch = [float(w) for w in self.wch]
        if not self.wch:
            raise ConfigError("sweep range is empty")
        if any(w <= 0 for w in self.wch):
            raise ConfigError("channel widths must be positive")
        if len(set(self.wch)) != len(self.wch):
            raise ConfigError("duplicate channel widths in sweep")
        self.axes = tuple(self.axes)
        if not self.axes or any(a not in ("x", "z") for a in self.axes):
            raise ConfigError("dipole axes must be drawn from {x, z}")
        lo, hi = self.z_scan
        if not 0 <= lo < hi:
            raise ConfigError("z_scan must satisfy 0 <= lo < hi")
        self.z_scan = (float(lo), float(hi))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.transmit_axis not in self.axes:
            raise ConfigError("transmit_axis must be one of the sweep axes")
        self.fig4_wch = tuple(float(w) for w in self.fig4_wch)


def wch_range(start: float, stop: float, step: float) -> list:
    if step <= 0:
        raise ConfigError("step must be > 0")
    if stop < start:
        raise ConfigError("sweep range is empty")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [float(start + i * step) for i in range(n)]


@dataclass
class RunConfig:
    spec: CrossSectionSpec
    grid: GridSpec
    sweep: SweepConfig

    def as_dict(self) -> dict:
        return {"geometry": dataclasses.asdict(self.spec), "grid": dataclasses.asdict(self.grid),
                "sweep": dataclasses.asdict(self.sweep)}

    def digest(self) -> str:
        doc = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(doc.encode()).hexdigest()


_SPEC_KEYS = {f.name for f in dataclasses.fields(CrossSectionSpec)}
_GRID_KEYS = {f.name for f in dataclasses.fields(GridSpec)}
_SWEEP_KEYS = {f.name for f in dataclasses.fields(SweepConfig)}


def _parse_env(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _flatten(doc: dict) -> dict:
    """Accept both flat documents and ``geometry``/``grid``/``sweep`` sections."""
    flat = {}
    for key, val in doc.items():
        if key in ("geometry", "grid", "sweep") and isinstance(val, dict):
            flat.update(val)
        else:
            flat[key] = val
    return flat


def build(doc: dict | None = None, env: dict | None = None, **overrides) -> RunConfig:
    flat = _flatten(doc or {})
    env = os.environ if env is None else env
    for key, val in env.items():
        if key.startswith(ENV_PREFIX):
            flat[key[len(ENV_PREFIX):].lower()] = _parse_env(val)
    flat.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(flat.get("wch"), dict):
        r = flat["wch"]
        try:
            flat["wch"] = wch_range(r["start"], r["stop"], r["step"])
        except KeyError as exc:
            raise ConfigError(f"wch range needs start, stop and step (missing {exc})") from None
    unknown = set(flat) - _SPEC_KEYS - _GRID_KEYS - _SWEEP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        spec = CrossSectionSpec(**{k: v for k, v in flat.items() if k in _SPEC_KEYS})
        grid = GridSpec(**{k: v for k, v in flat.items() if k in _GRID_KEYS})
        sweep = SweepConfig(**{k: v for k, v in flat.items() if k in _SWEEP_KEYS})
        for w in sweep.wch:
            validate(spec.replace(channel_width=w), grid)
    except (TypeError, GeometryError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(spec, grid, sweep)


def load(path=None, env: dict | None = None, **overrides) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    return build(doc, env, **overrides)
