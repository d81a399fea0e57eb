"""Experiment configuration files.

A config is a JSON object::

    {
      "schema_version": 1,
      "model": "harmonic-oscillator",          # built-in name, model-file path, or inline model object
      "horizon": 255,                         # optional, built-in models only
      "alpha": "terminal",                    # optional: "total", "terminal" or a list of T+1 weights
      "filters": ["kalman", "tic", "pkf_auc", "pkf_minT", "recursive_opt", "stationary"],
      "n_trajectories": 1024,
      "master_seed": 0,
      "window": 16,
      "output_dir": "out",
      "optimizer": {"max_iters": 400, "restarts": 8, "seed": 0},
      "plots": true
    }

``alpha`` sets the model's error weights, which are the objective of
``recursive_opt``; ``pkf_auc`` and ``pkf_minT`` always use the total and
terminal costs. Relative paths resolve against the config file's folder.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .demos import DEMOS, get_demo
from .errors import ConfigError, PKFError
from .filters import spectral_radius
from .io import SCHEMA_VERSION, load_model, model_from_dict
from .optimizer import OptimizerOptions

FILTERS = ("kalman", "tic", "pkf_auc", "pkf_minT", "recursive_opt", "stationary")
KNOWN_KEYS = {"schema_version", "model", "horizon", "alpha", "filters", "n_trajectories", "master_seed", "window",
              "output_dir", "optimizer", "plots"}
OPTIMIZER_KEYS = {"max_iters", "step_size", "shrink_tolerance", "convergence_tol", "restarts", "seed",
                  "init_scale", "momentum"}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: object
    filters: tuple
    n_trajectories: int = 1024
    master_seed: int = 0
    window: int = 16
    output_dir: str = "out"
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    plots: bool = True


def _line_of(text, key):
    """1-based line of the first occurrence of ``"key"`` in the raw text."""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _fail(text, key, message):
    line = _line_of(text, key)
    where = f"line {line}, " if line else ""
    raise ConfigError(f"{where}field '{key}': {message}")


def _int(text, data, key, default, minimum):
    v = data.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(text, key, f"expected an integer, got {v!r}")
    if v < minimum:
        _fail(text, key, f"must be >= {minimum}, got {v}")
    return v


def _alpha(text, raw, T):
    if raw == "total":
        return np.ones(T + 1)
    if raw == "terminal":
        a = np.zeros(T + 1)
        a[T] = 1.0
        return a
    if isinstance(raw, list):
        return raw
    _fail(text, "alpha", "expected 'total', 'terminal' or a list of weights")


def parse_config(text, base_dir="."):
    """Parse and validate config text; errors name the offending line and field."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        _fail(text, "schema_version", f"expected {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    unknown = sorted(set(data) - KNOWN_KEYS)
    if unknown:
        _fail(text, unknown[0], "unknown field")

    if "model" not in data:
        raise ConfigError("field 'model': required")
    raw_model = data["model"]
    horizon = data.get("horizon")
    if horizon is not None:
        horizon = _int(text, data, "horizon", None, 0)
    try:
        if isinstance(raw_model, str) and raw_model in DEMOS:
            if horizon is not None and raw_model == "example1":
                _fail(text, "horizon", "example1 has a fixed horizon")
            model = get_demo(raw_model) if horizon is None else get_demo(raw_model, T=horizon)
        elif isinstance(raw_model, str):
            if horizon is not None:
                _fail(text, "horizon", "only valid with a built-in model")
            model = load_model(os.path.join(base_dir, raw_model))
        elif isinstance(raw_model, dict):
            if horizon is not None:
                _fail(text, "horizon", "only valid with a built-in model")
            model = model_from_dict(raw_model, where="model")
        else:
            _fail(text, "model", "expected a built-in name, a path or an object")
        if "alpha" in data:
            model = model.with_alpha(_alpha(text, data["alpha"], model.T))
    except ConfigError:
        raise
    except (PKFError, OSError, ValueError) as exc:
        _fail(text, "model", str(exc))

    filters = data.get("filters")
    if not isinstance(filters, list) or not all(isinstance(f, str) for f in filters):
        _fail(text, "filters", "expected a list of filter names")
    if not filters:
        _fail(text, "filters", "at least one filter is required")
    bad = [f for f in filters if f not in FILTERS]
    if bad:
        _fail(text, "filters", f"unknown filter {bad[0]!r}; choose from {', '.join(FILTERS)}")
    if len(set(filters)) != len(filters):
        _fail(text, "filters", "duplicate filter names")
    if "stationary" in filters:
        if not model.time_invariant:
            _fail(text, "filters", "'stationary' needs a time-invariant model")
        if spectral_radius(model.A) >= 1.0 - 1e-9:
            _fail(text, "filters", "'stationary' needs a stable A (spectral radius below one)")

    n = _int(text, data, "n_trajectories", 1024, 1)
    seed = _int(text, data, "master_seed", 0, 0)
    window = _int(text, data, "window", 16, 1)
    out = data.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        _fail(text, "output_dir", "expected a non-empty path")
    plots = data.get("plots", True)
    if not isinstance(plots, bool):
        _fail(text, "plots", "expected true or false")
    raw_opt = data.get("optimizer", {})
    if not isinstance(raw_opt, dict):
        _fail(text, "optimizer", "expected an object")
    bad = sorted(set(raw_opt) - OPTIMIZER_KEYS)
    if bad:
        _fail(text, bad[0], "unknown optimizer option")
    try:
        opt = OptimizerOptions(**raw_opt)
    except (TypeError, ValueError) as exc:
        _fail(text, "optimizer", str(exc))
    return ExperimentConfig(model=model, filters=tuple(filters), n_trajectories=n, master_seed=seed, window=window,
                            output_dir=os.path.join(base_dir, out), optimizer=opt, plots=plots)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
