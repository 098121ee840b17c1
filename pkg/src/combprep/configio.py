"""Experiment configuration: schema validation with unknown-field rejection,
default resolution, content hashing and target/grid construction."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grids import (GridSpec, TargetSpec, gaussian_spec, ricker_spec,
                    student_t_spec)

REQUIRED = object()


class Field:
    def __init__(self, types, default=REQUIRED, schema=None, choices=None, elem=None):
        self.types = types if isinstance(types, tuple) else (types,)
        self.default = default
        self.schema = schema
        self.choices = choices
        self.elem = elem


def validate(doc: dict, schema: dict, path: str = "config") -> dict:
    """Resolve defaults and types; any unknown field is an error."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must be an object")
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    out = {}
    for name, f in schema.items():
        if name in doc:
            val = doc[name]
        elif f.default is REQUIRED:
            raise ConfigError(f"{path}.{name} is required")
        else:
            val = f.default() if callable(f.default) else f.default
        if val is None:
            out[name] = None
            continue
        if f.schema is not None:
            out[name] = validate(val if val else {}, f.schema, f"{path}.{name}")
            continue
        if bool not in f.types and isinstance(val, bool) and int in f.types:
            raise ConfigError(f"{path}.{name}: expected a number, got a bool")
        if float in f.types and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, f.types):
            raise ConfigError(f"{path}.{name}: expected {f.types}, got {type(val).__name__}")
        if f.choices is not None and val not in f.choices:
            raise ConfigError(f"{path}.{name}: must be one of {f.choices}")
        if f.elem is not None and isinstance(val, list):
            for i, v in enumerate(val):
                if isinstance(v, int) and f.elem is float:
                    val[i] = float(v)
                elif not isinstance(val[i], f.elem):
                    raise ConfigError(f"{path}.{name}[{i}]: expected {f.elem.__name__}")
        out[name] = val
    return out


TARGET_SCHEMA = {
    "family": Field(str, choices=("gaussian", "ricker", "student_t")),
    "d": Field(int, REQUIRED),
    "s0": Field(float, 0.05),
    "gamma": Field(float, 0.2),
    "sigma": Field(float, 0.25),
    "covariance_family": Field(str, "tridiagonal", choices=("tridiagonal", "inverse_square")),
    "mu": Field(list, None, elem=float),
    "lambda": Field(float, 1.0),
}

SCHEDULE_SCHEMA = {
    "delta_lambda": Field(float, 0.05),
    "n_epochs": Field(int, 1000),
    "n_epochs_final": Field(int, 10000),
    "lr": Field(float, 1e-2),
    "adaptive": Field(bool, False),
    "epsilon": Field(float, 0.05),
    "max_steps": Field(int, 200),
}

TCI_SCHEMA = {
    "chi_max": Field(int, 16),
    "tol": Field(float, 1e-10),
    "max_sweeps": Field(int, 24),
}

BACKEND_SCHEMA = {
    "kind": Field(str, "dense", choices=("dense", "mps")),
    "dtype": Field(str, "complex128", choices=("complex128", "complex64")),
    "chi_max": Field(int, 128),
    "tol": Field(float, 1e-12),
}

NOISE_SCHEMA = {
    "a": Field(float, 2.1e-4),
    "b": Field(float, 1.43e-3),
}

FINETUNE_SCHEMA = {
    "n_epochs": Field(int, 20),
    "lr": Field(float, 1e-2),
    "n_traj_train": Field(int, 16),
    "n_traj_eval": Field(int, 10000),
    "pressure_traj": Field(int, 512),
    "pressure_refresh": Field(int, 5),
    "theta_min": Field(float, 1e-4),
}

SCHEMAS: dict[str, dict] = {
    "tci-build": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 6),
        "chi_max": Field(int, 16),
        "tol": Field(float, 1e-10),
        "max_sweeps": Field(int, 24),
        "n_avg": Field(int, 10000),
        "with_comb": Field(bool, False),
        "seed": Field(int, 0),
    },
    "iqsp-run": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 6),
        "layers": Field(int, 3),
        "schedule": Field(dict, dict, schema=SCHEDULE_SCHEMA),
        "tci": Field(dict, dict, schema=TCI_SCHEMA),
        "backend": Field(dict, dict, schema=BACKEND_SCHEMA),
        "engine": Field(str, "adjoint", choices=("adjoint", "parameter_shift", "finite_diff")),
        "jitter": Field(float, 1e-2),
        "seed": Field(int, 0),
    },
    "cci-run": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 4),
        "layers": Field(int, 2),
        "n_pivots_max": Field(int, 16),
        "n_epochs": Field(int, 200),
        "max_iters": Field(int, 30),
        "tol": Field(float, 1e-10),
        "lr": Field(float, 1e-2),
        "jitter": Field(float, 1e-2),
        "seed": Field(int, 0),
    },
    "grad-scan": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 6),
        "dims": Field(list, lambda: [2, 3, 4], elem=int),
        "layers": Field(int, 3),
        "modes": Field(list, lambda: ["random_init", "warm_start"], elem=str),
        "n_repeats": Field(int, 100),
        "warm_seeds": Field(list, lambda: [0, 1, 2, 3, 4], elem=int),
        "warm_schedule": Field(dict, dict, schema=SCHEDULE_SCHEMA),
        "warm_dtype": Field(str, "complex64", choices=("complex128", "complex64")),
        "random_dtype": Field(str, "complex128", choices=("complex128", "complex64")),
        "jitter": Field(float, 1e-2),
        "tci": Field(dict, dict, schema=TCI_SCHEMA),
        "seed": Field(int, 0),
    },
    "noise-finetune": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 6),
        "layers": Field(int, 2),
        "checkpoint": Field(str, None),
        "schedule": Field(dict, dict, schema=SCHEDULE_SCHEMA),
        "tci": Field(dict, dict, schema=TCI_SCHEMA),
        "noise": Field(dict, dict, schema=NOISE_SCHEMA),
        "finetune": Field(dict, dict, schema=FINETUNE_SCHEMA),
        "jitter": Field(float, 1e-2),
        "seed": Field(int, 0),
    },
    "sample-stats": {
        "target": Field(dict, REQUIRED, schema=TARGET_SCHEMA),
        "n_x": Field(int, 6),
        "layers": Field(int, 3),
        "checkpoint": Field(str, None),
        "schedule": Field(dict, dict, schema=SCHEDULE_SCHEMA),
        "tci": Field(dict, dict, schema=TCI_SCHEMA),
        "n_shots": Field(int, 10000),
        "n_seeds": Field(int, 20),
        "noise": Field(dict, None, schema=NOISE_SCHEMA),
        "jitter": Field(float, 1e-2),
        "seed": Field(int, 0),
    },
    "compile": {
        "checkpoint": Field(str, REQUIRED),
        "prune": Field(bool, True),
        "theta_min": Field(float, 1e-4),
        "measure": Field(bool, False),
        "seed": Field(int, 0),
    },
    "compare-baseline": {
        "targets": Field(list, lambda: ["ricker", "student_t"], elem=str),
        "d": Field(int, 2),
        "n_x": Field(int, 6),
        "layers_list": Field(list, lambda: [1, 2, 3], elem=int),
        "sigma": Field(float, 0.25),
        "s0": Field(float, 0.05),
        "schedule": Field(dict, dict, schema=SCHEDULE_SCHEMA),
        "tci": Field(dict, dict, schema=TCI_SCHEMA),
        "jitter": Field(float, 1e-2),
        "seed": Field(int, 0),
    },
}


def build_target(doc: dict) -> TargetSpec:
    """Construct a TargetSpec from a validated target config block."""
    mu = None if doc.get("mu") is None else np.asarray(doc["mu"], dtype=float)
    lam = doc.get("lambda", 1.0)
    if doc["family"] == "gaussian":
        return gaussian_spec(doc["d"], s0=doc["s0"], gamma=doc["gamma"],
                             covariance_family=doc["covariance_family"], lam=lam, mu=mu)
    if doc["family"] == "ricker":
        return ricker_spec(doc["d"], sigma=doc["sigma"], lam=lam, mu=mu)
    return student_t_spec(doc["d"], s0=doc["s0"], lam=lam, mu=mu)


def build_grid(target_doc: dict, n_x: int) -> GridSpec:
    return GridSpec(d=target_doc["d"], n_x=n_x)


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def dump_json(path: str | Path, doc: dict):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: str | Path, rows: list[dict], columns: list[str]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
