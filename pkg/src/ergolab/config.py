"""Experiment configuration: YAML files merged over per-subcommand defaults.

Schema (every key optional; unknown keys are rejected)::

    seed: 0                      # base seed, echoed in every report
    output_dir: reports          # overridden by $ERGOLAB_OUTPUT_DIR and --out
    model:
      kind: ou                   # ou | langevin-quartic | reflected
      dim: 1
      sigma: 1.0
      half_width: null           # working box half-width (ou, langevin-quartic)
      drift: 0.0                 # constant drift on [0, 1] (reflected only)
    # subcommand keys, e.g. for clt:
    t: 50.0
    dt: 0.01
    replicates: 2000
    g: x                         # catalog label, see ergolab.functions.catalog

Test functions are looked up by label in the catalog built on the working
box: centred at the box centre with half-width ``support_half_width``
(default 0.9 times the smallest box half-width, capped at 5).
"""
from __future__ import annotations

import copy
import math
import os

import numpy as np
import yaml

from .functions import TestFunction, catalog
from .models import DiffusionModel, make_ou_model, make_quartic_model, make_reflected_model

OUTPUT_ENV = "ERGOLAB_OUTPUT_DIR"
DEFAULT_OUTPUT = "reports"
MODEL_KINDS = ("ou", "langevin-quartic", "reflected")


class ConfigError(ValueError):
    pass


_MODEL_DEFAULT = {"kind": "ou", "dim": 1, "sigma": 1.0, "half_width": None, "drift": 0.0}
_COMMON = {"seed": 0, "output_dir": None, "model": _MODEL_DEFAULT, "support_half_width": None}

DEFAULTS: dict[str, dict] = {
    "simulate": {"t": 10.0, "dt": 0.01, "replicates": 1, "init": "stationary"},
    "clt": {"t": 50.0, "dt": 0.01, "replicates": 2000, "g": "x", "g2": None, "ks_max": 0.05,
            "var_rtol": 0.10, "dynkin_rtol": 0.10, "cov_atol": 0.05},
    "clt-smoothed": {"t": 50.0, "dt": 0.01, "replicates": 2000, "g": "x", "kernel_order": 1,
                     "schedule": {"variant": "corollary-ii", "beta": 2.0, "eta": None}, "h": None,
                     "ks_max": 0.07, "ks_two_max": 0.08, "var_rtol": 0.15},
    "bernstein": {"t": 50.0, "dt": 0.01, "replicates": 2000, "g": "gauss(0.3,0.5)",
                  "g_is_poisson": True, "thresholds": [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5]},
    "zeta": {"t_grid": [100.0], "delta_grid": [0.3, 0.2, 0.1], "dt": 0.01, "replicates": 500,
             "y": None, "max_ratio": 10.0, "model": {**_MODEL_DEFAULT, "dim": 2}},
    "occupation": {"t_grid": [25.0, 50.0, 100.0], "r_grid": [0.1, 0.05, 0.02], "dt": 1e-4,
                   "replicates": 50, "box": [[-1.0, 1.0], [-1.0, 1.0]], "max_ratio": 5.0,
                   "trend_floor": 0.5},
    "timechange": {"t": 1.0, "dt": 1e-4, "replicate": 0, "box": [[-1.5, 4.0], [-3.0, 3.0]],
                   "r": 0.2, "grid_step": None, "rtol": 0.05},
    "bias-audit": {"t": 50.0, "dt": 0.01, "replicates": 50, "g": "x^2-1/2", "kernel_order": 1,
                   "h_grid": [0.2, 0.1, 0.05], "max_ratio": 3.0},
}
SUBCOMMANDS = tuple(DEFAULTS)


def load_file(path: str | os.PathLike) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def parse_override(item: str) -> tuple[str, object]:
    """``key=value`` with a YAML-parsed value; dotted keys reach into mappings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {item!r}") from exc


def _merge(base: dict, extra: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}{k!r}")
        if isinstance(out[k], dict) and out[k] is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"{where}{k} must be a mapping")
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def resolve(subcommand: str, file_cfg: dict | None = None, overrides=()) -> dict:
    """Defaults, then file values, then ``key=value`` overrides; validated."""
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg = {**copy.deepcopy(_COMMON), **copy.deepcopy(DEFAULTS[subcommand])}
    cfg = _merge(cfg, file_cfg or {}, "")
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        *path, last = key.split(".")
        nested: dict = {}
        cur = nested
        for p in path:
            cur = cur.setdefault(p, {})
        cur[last] = value
        cfg = _merge(cfg, nested, "")
    validate(subcommand, cfg)
    return cfg


def _positive(cfg, key):
    v = cfg[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or not math.isfinite(v):
        raise ConfigError(f"{key} must be a positive number (got {v!r})")


def _positive_list(cfg, key):
    v = cfg[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty list")
    for x in v:
        if not isinstance(x, (int, float)) or not x > 0:
            raise ConfigError(f"{key} entries must be positive (got {x!r})")


def validate(subcommand: str, cfg: dict) -> None:
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer (got {seed!r})")
    m = cfg["model"]
    if m["kind"] not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    if not isinstance(m["dim"], int) or m["dim"] < 1:
        raise ConfigError("model.dim must be a positive integer")
    if not isinstance(m["sigma"], (int, float)) or not m["sigma"] > 0:
        raise ConfigError("model.sigma must be positive")
    if m["kind"] == "reflected" and m["dim"] != 1:
        raise ConfigError("reflected models are one-dimensional")
    for key in ("t", "dt", "r"):
        if key in cfg:
            _positive(cfg, key)
    if "t" in cfg and "dt" in cfg and not cfg["t"] > cfg["dt"]:
        raise ConfigError("t must exceed dt")
    for key in ("t_grid", "delta_grid", "r_grid", "h_grid"):
        if key in cfg:
            _positive_list(cfg, key)
    if "replicates" in cfg:
        r = cfg["replicates"]
        if not isinstance(r, int) or isinstance(r, bool) or r < 1:
            raise ConfigError(f"replicates must be a positive integer (got {r!r})")
    if "thresholds" in cfg and (not isinstance(cfg["thresholds"], list)
                                or any(not isinstance(x, (int, float)) or x < 0 for x in cfg["thresholds"])):
        raise ConfigError("thresholds must be a list of nonnegative numbers")
    if "box" in cfg:
        box = cfg["box"]
        if (not isinstance(box, list) or any(not isinstance(b, list) or len(b) != 2 or not b[1] > b[0]
                                             for b in box)):
            raise ConfigError("box must be a list of [lo, hi] pairs with hi > lo")
    if subcommand in ("occupation", "timechange") and len(cfg["box"]) != 2:
        raise ConfigError("box must be two-dimensional")


def output_dir(cfg: dict, cli_value: str | None = None) -> str:
    return cli_value or os.environ.get(OUTPUT_ENV) or cfg.get("output_dir") or DEFAULT_OUTPUT


def build_model(spec: dict) -> DiffusionModel:
    kind = spec["kind"]
    if kind == "ou":
        return make_ou_model(spec["dim"], spec["sigma"], spec.get("half_width"))
    if kind == "langevin-quartic":
        hw = spec.get("half_width") or 4.0
        return make_quartic_model(spec["dim"], spec["sigma"], hw)
    c = float(spec.get("drift") or 0.0)
    return make_reflected_model(lambda x: np.full(np.shape(x), c), spec["sigma"])


def function_catalog(model: DiffusionModel, half_width: float | None = None) -> list[TestFunction]:
    """Catalog centred in the model's working box."""
    box = model.working_box
    centre = np.array([(a + b) / 2.0 for a, b in box])
    hw = half_width or min(5.0, 0.9 * min((b - a) / 2.0 for a, b in box))
    fns = catalog(model.dim, hw)
    if np.any(centre != 0.0):
        fns = [f.shifted(centre) for f in fns]
    return fns


def lookup_function(model: DiffusionModel, label: str, half_width: float | None = None) -> TestFunction:
    fns = function_catalog(model, half_width)
    labels = [f.label.split("(.-s)")[0] for f in fns]
    if label not in labels:
        raise ConfigError(f"unknown test function {label!r}; choose from {labels}")
    return fns[labels.index(label)]
