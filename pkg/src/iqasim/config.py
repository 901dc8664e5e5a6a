"""Run-configuration parsing: TOML files with flat per-module tables,
figure presets shipped with the package, and flag overrides.  Unknown
keys are rejected and every resolved configuration hashes canonically so
outputs can be tied to the exact run that produced them.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .models import PSpinModel, make_deterministic_sk, sample_sk
from .schedules import AnnealPath, FieldProfile, ProfileKind

_PATH_KEYS = {"s0": float, "tau0": float, "s1": float, "tau1": float,
              "T": float, "dt": float}
_PROFILE_KEYS = {"kind": str}
_MODEL_KEYS = {"kind": str, "n": int, "p": int, "seed": int}
_OUTPUT_KEYS = {"dir": str}

SCHEMAS: Dict[str, Dict[str, Dict[str, type]]] = {
    "meanfield": {
        "path": _PATH_KEYS, "profile": _PROFILE_KEYS, "model": _MODEL_KEYS,
        "meanfield": {"stride": int, "ref_points": int},
        "output": _OUTPUT_KEYS,
    },
    "exact": {
        "path": _PATH_KEYS, "profile": _PROFILE_KEYS, "model": _MODEL_KEYS,
        "exact": {"stride": int},
        "output": _OUTPUT_KEYS,
    },
    "spectrum": {
        "path": _PATH_KEYS, "profile": _PROFILE_KEYS, "model": _MODEL_KEYS,
        "spectrum": {"n_grid": int, "k_levels": int},
        "output": _OUTPUT_KEYS,
    },
    "saddle": {
        "saddle": {"s": float, "tau": float, "p": int, "beta": float},
        "output": _OUTPUT_KEYS,
    },
    "ensemble-fraction": {
        "path": {"s0": float, "tau0": float, "s1": float, "tau1": float},
        "profile": _PROFILE_KEYS,
        "ensemble": {"n_values": list, "realizations": int, "base_seed": int,
                     "n_grid": int},
        "output": _OUTPUT_KEYS,
    },
    "ensemble-compare": {
        "path": {"s0": float, "tau0": float, "s1": float, "tau1": float},
        "profile": _PROFILE_KEYS,
        "ensemble": {"n_values": list, "realizations": int, "base_seed": int,
                     "n_grid": int, "t_values": list, "dt": float,
                     "min_qualifying": int},
        "output": _OUTPUT_KEYS,
    },
}

DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "meanfield": {
        "path": {"s0": 0.1, "tau0": 0.1, "s1": 1.0, "tau1": 1.0,
                 "T": 1000.0, "dt": 0.01},
        "profile": {"kind": "ramp"},
        "model": {"kind": "pspin", "n": 5000, "p": 3},
        "meanfield": {"stride": 0, "ref_points": 101},
        "output": {"dir": "meanfield-run"},
    },
    "exact": {
        "path": {"s0": 0.0, "tau0": 0.0, "s1": 1.0, "tau1": 1.0,
                 "T": 10.0, "dt": 0.1},
        "profile": {"kind": "ramp"},
        "model": {"kind": "fig4", "n": 4},
        "exact": {"stride": 1},
        "output": {"dir": "exact-run"},
    },
    "spectrum": {
        "path": {"s0": 0.0, "tau0": 0.0, "s1": 1.0, "tau1": 1.0,
                 "T": 1.0, "dt": 1.0},
        "profile": {"kind": "ramp"},
        "model": {"kind": "fig5", "n": 8},
        "spectrum": {"n_grid": 0, "k_levels": 0},
        "output": {"dir": "spectrum-run"},
    },
    "saddle": {
        "saddle": {"s": 1.0, "tau": 1.0, "p": 3, "beta": math.inf},
        "output": {"dir": "saddle-run"},
    },
    "ensemble-fraction": {
        "path": {"s0": 0.0, "tau0": 0.0, "s1": 1.0, "tau1": 1.0},
        "profile": {"kind": "ramp"},
        "ensemble": {"n_values": [4, 6, 8, 10], "realizations": 200,
                     "base_seed": 0, "n_grid": 0},
        "output": {"dir": "fraction-run"},
    },
    "ensemble-compare": {
        "path": {"s0": 0.0, "tau0": 0.0, "s1": 1.0, "tau1": 1.0},
        "profile": {"kind": "ramp"},
        "ensemble": {"n_values": [8], "realizations": 40, "base_seed": 0,
                     "n_grid": 0, "t_values": [1.0, 10.0, 100.0, 1000.0,
                                               5000.0, 10000.0],
                     "dt": 0.01, "min_qualifying": 20},
        "output": {"dir": "compare-run"},
    },
}

_PROFILE_NAMES = {"ramp": ProfileKind.RAMP, "quench": ProfileKind.QUENCH,
                  "homogeneous": ProfileKind.HOMOGENEOUS}


def load_preset(name: str) -> Dict[str, Any]:
    ref = resources.files("iqasim.presets").joinpath(f"{name}.toml")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}", key="preset")
    with ref.open("rb") as fh:
        return tomllib.load(fh)


def _coerce(subcommand: str, section: str, key: str, value):
    schema = SCHEMAS[subcommand]
    if section not in schema:
        raise ConfigError(f"unknown section [{section}] for {subcommand}",
                          key=section)
    if key not in schema[section]:
        raise ConfigError(f"unknown key {section}.{key} for {subcommand}",
                          key=f"{section}.{key}")
    want = schema[section][key]
    try:
        if want is float:
            if isinstance(value, str):
                value = float(value)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if want is int:
            if isinstance(value, str):
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return int(value)
        if want is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if want is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [float(v) if key == "t_values" else int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {section}.{key}: {value!r}",
                          key=f"{section}.{key}") from None
    raise ConfigError(f"unhandled type for {section}.{key}")


def resolve_config(subcommand: str, config_file: Optional[str] = None,
                   preset: Optional[str] = None,
                   overrides: Optional[Dict[str, Dict[str, Any]]] = None
                   ) -> Dict[str, Any]:
    """defaults <- preset <- config file <- flag overrides, validated."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg = {sec: dict(keys) for sec, keys in DEFAULTS[subcommand].items()}

    def merge(doc, origin):
        for section, table in doc.items():
            if section == "subcommand":
                if table != subcommand:
                    raise ConfigError(
                        f"{origin} is for subcommand {table!r}, "
                        f"not {subcommand!r}", key="subcommand")
                continue
            if not isinstance(table, dict):
                raise ConfigError(f"{origin}: [{section}] is not a table",
                                  key=section)
            for key, value in table.items():
                cfg.setdefault(section, {})[key] = _coerce(
                    subcommand, section, key, value)

    if preset:
        merge(load_preset(preset), f"preset {preset!r}")
    if config_file:
        try:
            with open(config_file, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {config_file!r} not found",
                              key="config") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file: {exc}",
                              key="config") from None
        merge(doc, f"config file {config_file!r}")
    if overrides:
        merge(overrides, "command line")
    _validate(subcommand, cfg)
    return cfg


def _validate(subcommand: str, cfg: Dict[str, Any]):
    if "path" in cfg and "T" in cfg["path"]:
        try:
            build_path(cfg)
        except DomainError as exc:
            raise ConfigError(str(exc), key="path") from None
    if "profile" in cfg:
        kind = cfg["profile"]["kind"]
        if kind not in _PROFILE_NAMES:
            raise ConfigError(f"profile.kind must be one of "
                              f"{sorted(_PROFILE_NAMES)}, got {kind!r}",
                              key="profile.kind")
    if "model" in cfg:
        kind = cfg["model"]["kind"]
        if kind not in ("pspin", "sk", "fig4", "fig5"):
            raise ConfigError(f"unknown model.kind {kind!r}", key="model.kind")
        fixed = {"fig4": 4, "fig5": 8}.get(kind)
        n = cfg["model"].get("n")
        if fixed is not None:
            if n is not None and n != fixed:
                raise ConfigError(f"model.kind={kind} requires n={fixed}",
                                  key="model.n")
            cfg["model"]["n"] = fixed
        elif n is None or n < 1:
            raise ConfigError(f"model.kind={kind} needs a positive model.n",
                              key="model.n")
        if kind == "sk" and "seed" not in cfg["model"]:
            raise ConfigError("model.kind=sk needs model.seed",
                              key="model.seed")
    if "saddle" in cfg:
        sd = cfg["saddle"]
        if not (0.0 <= sd["s"] <= 1.0 and 0.0 <= sd["tau"] <= 1.0):
            raise ConfigError("saddle.s and saddle.tau must lie in [0, 1]",
                              key="saddle.s")
        if not sd["beta"] > 0:
            raise ConfigError("saddle.beta must be positive (inf allowed)",
                              key="saddle.beta")
    if "ensemble" in cfg:
        ens = cfg["ensemble"]
        if ens["realizations"] < 1:
            raise ConfigError("ensemble.realizations must be >= 1",
                              key="ensemble.realizations")
        if any(n < 2 for n in ens["n_values"]):
            raise ConfigError("ensemble.n_values entries must be >= 2",
                              key="ensemble.n_values")
        if "t_values" in ens:
            ts = ens["t_values"]
            if not ts or sorted(ts) != list(ts):
                raise ConfigError("ensemble.t_values must be non-empty and "
                                  "ascending", key="ensemble.t_values")
            if ens["dt"] <= 0 or ens["dt"] > min(ts):
                raise ConfigError("ensemble.dt must be in (0, min(t_values)]",
                                  key="ensemble.dt")


def build_path(cfg: Dict[str, Any]) -> AnnealPath:
    p = cfg["path"]
    return AnnealPath(p["s0"], p["tau0"], p["s1"], p["tau1"], p["T"], p["dt"])


def build_profile(cfg: Dict[str, Any], n_spins: int) -> FieldProfile:
    return FieldProfile(_PROFILE_NAMES[cfg["profile"]["kind"]], n_spins)


def build_model(cfg: Dict[str, Any]):
    m = cfg["model"]
    if m["kind"] == "pspin":
        return PSpinModel(m["n"], m.get("p", 3))
    if m["kind"] == "sk":
        return sample_sk(m["n"], m["seed"])
    return make_deterministic_sk(m["kind"], m["n"])


def config_hash(subcommand: str, cfg: Dict[str, Any]) -> str:
    doc = json.dumps({"subcommand": subcommand, "config": cfg},
                     sort_keys=True, default=str)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def resolve_output_dir(cfg: Dict[str, Any], root_env: Optional[str]) -> Path:
    out = Path(cfg["output"]["dir"])
    if not out.is_absolute() and root_env:
        out = Path(root_env) / out
    return out
