"""Experiment configuration: YAML schema, validation and figure presets."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError, EnsembleControlError
from .model import (
    CURVES,
    LinearEnsembleSystem,
    ParameterBox,
    ParameterGrid,
    TimeGrid,
    TransferSpec,
    constant_transfer,
    curve_transfer,
    harmonic_oscillator_system,
    make_parameter_grid,
    make_time_grid,
    random_timevarying_system,
    tabulated_affine_system,
)
from .ode import IntegratorConfig
from .operator import check_shape

SCHEMA_VERSION = 1

FIG4_X0 = [0.83, 1.38, -1.06, -0.47]
FIG4_XF = [-0.27, 1.10, -0.28, 0.70]

PRESETS: dict[str, dict] = {
    "fig1": {
        "system": {"name": "harmonic_oscillator"},
        "parameters": {"lower": [-10.0], "upper": [10.0], "counts": [20]},
        "time": {"T": 1.0, "N": 20000},
        "transfer": {"kind": "constant", "x0": [1.0, 0.0], "xF": [0.0, 0.0]},
    },
    "fig2": {
        "system": {"name": "harmonic_oscillator"},
        "parameters": {"lower": [-10.0], "upper": [10.0], "counts": [40]},
        "time": {"T": 1.0, "N": 10000},
        "transfer": {"kind": "constant", "x0": [1.0, 0.0], "xF": [0.0, 0.0]},
        "convergence": {"T_list": [0.1, 0.5, 1.0, 2.0, 5.0], "N_list": [1250, 2500, 5000, 12500]},
    },
    "fig3": {
        "system": {"name": "harmonic_oscillator"},
        "parameters": {"lower": [-10.0], "upper": [10.0], "counts": [89]},
        "time": {"T": 40.0, "N": 20000},
        "transfer": {"kind": "curves", "initial": "star", "target": "leaf"},
    },
    "fig4": {
        "system": {"name": "random_timevarying", "seed": 0},
        "parameters": {"lower": [-0.01, -0.1], "upper": [0.01, 0.1], "counts": [8, 13]},
        "time": {"T": 1.0, "N": 10000},
        "transfer": {"kind": "constant", "x0": FIG4_X0, "xF": FIG4_XF},
        "truncation": {"ratio_cap": float("inf"), "hard_cap": 12},
    },
    "null": {
        "system": {"name": "harmonic_oscillator"},
        "parameters": {"lower": [-10.0], "upper": [10.0], "counts": [10]},
        "time": {"T": 1.0, "N": 200},
        "transfer": {"kind": "constant", "x0": [0.0, 0.0], "xF": [0.0, 0.0]},
    },
}

DEFAULTS: dict[str, Any] = {
    "version": SCHEMA_VERSION,
    "integrator": {"rel_tol": 1e-6, "abs_tol": 1e-9, "max_step": None, "initial_step": None},
    "truncation": {"ratio_cap": 1e4, "hard_cap": None},
    "output": {"dir": "out", "downsample": 0},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    system: LinearEnsembleSystem
    pgrid: ParameterGrid
    tgrid: TimeGrid
    transfer: TransferSpec
    integrator: IntegratorConfig
    ratio_cap: float
    hard_cap: Optional[int]
    out_dir: Path
    downsample: int
    raw: dict = field(repr=False, default_factory=dict)
    T_list: Optional[list] = None
    N_list: Optional[list] = None

    def with_time(self, T: float, N: int) -> "ExperimentConfig":
        raw = _merge(self.raw, {"time": {"T": T, "N": N}})
        return build_config(raw)


def _require(section: dict, key: str, where: str):
    if not isinstance(section, dict) or key not in section:
        raise ConfigError("missing required field", f"{where}.{key}")
    return section[key]


def _build_system(sec: dict) -> LinearEnsembleSystem:
    name = _require(sec, "name", "system")
    if name == "harmonic_oscillator":
        return harmonic_oscillator_system()
    if name == "random_timevarying":
        seed = sec.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("must be a non-negative integer", "system.seed")
        return random_timevarying_system(seed)
    if name == "tables":
        path = _require(sec, "path", "system")
        try:
            data = np.load(path)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}", "system.path") from exc
        for key in ("t", "A", "B"):
            if key not in data:
                raise ConfigError(f"table file lacks array '{key}'", "system.path")
        return tabulated_affine_system(data["t"], data["A"], data["B"], label=str(path))
    raise ConfigError(f"unknown system '{name}'", "system.name")


def _build_transfer(sec: dict, system: LinearEnsembleSystem, pgrid: ParameterGrid) -> TransferSpec:
    kind = _require(sec, "kind", "transfer")
    if kind == "constant":
        x0 = np.asarray(_require(sec, "x0", "transfer"), float)
        xF = np.asarray(_require(sec, "xF", "transfer"), float)
        if x0.shape != (system.n,) or xF.shape != (system.n,):
            raise ConfigError(f"x0 and xF must have length n={system.n}", "transfer")
        return constant_transfer(x0, xF)
    if kind == "curves":
        names = (_require(sec, "initial", "transfer"), _require(sec, "target", "transfer"))
        for key, nm in zip(("initial", "target"), names):
            if nm not in CURVES:
                raise ConfigError(f"unknown curve '{nm}' (have {sorted(CURVES)})", f"transfer.{key}")
        return curve_transfer(CURVES[names[0]], CURVES[names[1]], pgrid, system)
    raise ConfigError(f"unknown transfer kind '{kind}'", "transfer.kind")


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a configuration mapping; shape constraints are checked here,
    before any flow is computed."""
    try:
        return _build_config(raw)
    except EnsembleControlError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed value: {exc}", "<root>") from exc


def _build_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping", "<root>")
    raw = _merge(DEFAULTS, raw)
    if raw.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported version {raw.get('version')!r}", "version")
    system = _build_system(_require(raw, "system", "<root>"))

    par = _require(raw, "parameters", "<root>")
    box = ParameterBox(_require(par, "lower", "parameters"), _require(par, "upper", "parameters"))
    if box.d != system.d:
        raise ConfigError(f"box has dimension {box.d}, system has d={system.d}", "parameters")
    pgrid = make_parameter_grid(box, _require(par, "counts", "parameters"))

    tsec = _require(raw, "time", "<root>")
    tgrid = make_time_grid(_require(tsec, "T", "time"), _require(tsec, "N", "time"))
    transfer = _build_transfer(_require(raw, "transfer", "<root>"), system, pgrid)

    isec = raw["integrator"]
    integrator = IntegratorConfig(
        rel_tol=float(isec["rel_tol"]), abs_tol=float(isec["abs_tol"]),
        max_step=None if isec.get("max_step") is None else float(isec["max_step"]),
        initial_step=None if isec.get("initial_step") is None else float(isec["initial_step"]),
    )
    tr = raw["truncation"]
    ratio_cap = float(tr["ratio_cap"])
    if not ratio_cap > 1:
        raise ConfigError("must exceed 1", "truncation.ratio_cap")
    hard_cap = tr.get("hard_cap")
    if hard_cap is not None and (not isinstance(hard_cap, int) or hard_cap < 1):
        raise ConfigError("must be a positive integer", "truncation.hard_cap")

    out = raw["output"]
    downsample = int(out.get("downsample") or 0)
    if downsample < 0:
        raise ConfigError("must be non-negative", "output.downsample")

    conv = raw.get("convergence") or {}
    cfg = ExperimentConfig(
        system=system, pgrid=pgrid, tgrid=tgrid, transfer=transfer, integrator=integrator,
        ratio_cap=ratio_cap, hard_cap=hard_cap, out_dir=Path(out["dir"]), downsample=downsample,
        raw=raw, T_list=conv.get("T_list"), N_list=conv.get("N_list"),
    )
    check_shape(system.n, system.m, pgrid.size, tgrid.N)
    return cfg


def load_config(path=None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Start from a preset and/or a YAML file (file wins), then apply overrides."""
    raw: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}' (have {sorted(PRESETS)})", "--preset")
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}", "--config") from exc
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}", "--config") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("configuration must be a mapping", "--config")
        raw = _merge(raw, loaded)
    if not raw:
        raise ConfigError("need --config or --preset", "<root>")
    if overrides:
        raw = _merge(raw, overrides)
    return build_config(raw)
