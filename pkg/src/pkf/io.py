"""JSON files for models and gain schedules.

Model file::

    {"schema_version": 1, "kind": "model", "name": ..., "time_invariant": true,
     "n_x": 2, "n_y": 1, "T": 255, "A": [[...]], "C": ..., "Q": ..., "R": ...,
     "P0": [[...]], "alpha": [...]}

``A`` and ``Q`` are one matrix (time-invariant) or a list of ``T`` matrices
for steps ``1..T``; ``C`` and ``R`` are one matrix or ``T + 1`` matrices.
Matrices are nested row-major lists.

Gains file::

    {"schema_version": 1, "kind": "gains", "model_digest": "<sha256>",
     "schedules": {"<filter>": {"kind": "pkf" | "recursive", "label": ...,
                                "objective_value": ..., "Pi": [...],
                                "Phi": [...] | null, "Sigma_w": [...],
                                "Sigma_Ups": [...] | null, "Psi": [...] | null}}}

Floats are written with full round-trip precision.
"""

import json

import numpy as np

from .errors import SchemaError, StaleGains
from .filters import PKF, RECURSIVE, GainSchedule
from .kalman import kalman_gains
from .lgssm import ModelSpec

SCHEMA_VERSION = 1
MODEL_KEYS = ("A", "C", "Q", "R", "P0", "T")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _check_header(data, kind, path):
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {data.get('schema_version')!r}")
    if data.get("kind") != kind:
        raise SchemaError(f"{path}: expected kind {kind!r}, got {data.get('kind')!r}")


def model_from_dict(data, where="model"):
    missing = [k for k in MODEL_KEYS if k not in data]
    if missing:
        raise SchemaError(f"{where}: missing fields {', '.join(missing)}")
    try:
        return ModelSpec(A=np.array(data["A"], dtype=float), C=np.array(data["C"], dtype=float),
                         Q=np.array(data["Q"], dtype=float), R=np.array(data["R"], dtype=float),
                         P0=np.array(data["P0"], dtype=float), T=int(data["T"]), alpha=data.get("alpha"),
                         name=data.get("name", ""))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def model_to_dict(model):
    return {"schema_version": SCHEMA_VERSION, "kind": "model", **model.to_dict()}


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path):
    data = _read_json(path)
    _check_header(data, "model", path)
    return model_from_dict(data, where=str(path))


def _arr(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


def schedule_to_dict(schedule):
    return {
        "kind": schedule.kind,
        "label": schedule.label,
        "objective_value": float(schedule.objective_value),
        "Pi": _arr(schedule.Pi),
        "Phi": _arr(schedule.Phi),
        "Sigma_w": _arr(schedule.Sigma_w),
        "Sigma_Ups": _arr(schedule.Sigma_Ups),
        "Psi": _arr(schedule.Psi),
    }


def schedule_from_dict(data, digest, where):
    try:
        kind = data["kind"]
        if kind not in (PKF, RECURSIVE):
            raise SchemaError(f"{where}: unknown schedule kind {kind!r}")

        def get(name, required=True):
            v = data.get(name)
            if v is None:
                if required:
                    raise SchemaError(f"{where}: missing field {name}")
                return None
            arr = np.array(v, dtype=float)
            if arr.ndim != 3:
                raise SchemaError(f"{where}: field {name} must be a list of matrices")
            return arr

        recursive = kind == RECURSIVE
        return GainSchedule(kind=kind, Pi=get("Pi"), Sigma_w=get("Sigma_w"), Phi=get("Phi", recursive),
                            Sigma_Ups=get("Sigma_Ups", recursive), Psi=get("Psi", recursive),
                            label=data.get("label", ""), model_digest=digest,
                            objective_value=float(data.get("objective_value", float("nan"))))
    except SchemaError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def save_gains(schedules, model, path):
    """Write a ``{filter name: GainSchedule}`` mapping tagged with the model digest."""
    data = {"schema_version": SCHEMA_VERSION, "kind": "gains", "model_digest": model.digest(),
            "schedules": {name: schedule_to_dict(s) for name, s in schedules.items()}}
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_gains(path, model=None, kgains=None):
    """Read a gains file; with ``model`` the digest and feasibility are checked."""
    data = _read_json(path)
    _check_header(data, "gains", path)
    digest = data.get("model_digest")
    if not isinstance(digest, str):
        raise SchemaError(f"{path}: missing model_digest")
    if model is not None and digest != model.digest():
        raise StaleGains(f"{path}: gains were computed for a different model")
    raw = data.get("schedules")
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: schedules must be an object")
    out = {name: schedule_from_dict(s, digest, f"{path}:{name}") for name, s in raw.items()}
    if model is not None:
        if kgains is None:
            kgains = kalman_gains(model)
        for s in out.values():
            s.validate(model, kgains)
    return out
