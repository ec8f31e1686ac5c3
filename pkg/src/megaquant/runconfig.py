"""Run-configuration schema, validation and object builders.

Configs are JSON documents with one section per concern. Validation is
fail-fast: the JSON schema rejects unknown keys, then every section
present is materialised into its dataclass so any module precondition
violation surfaces before work starts.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, replace
from importlib import metadata
from typing import Dict, Optional, Union

import jsonschema

from .bayesopt import Categorical, ConfigSpace, Ordinal
from .errors import ConfigError
from .models import CnnConfig, YaeConfig
from .preprocess import ExportConfig
from .spectra import PpmAxis
from .synthesis import (DEFAULT_EDIT_ATTENUATION, DEFAULT_PEAK_TABLE,
                        FixedLinewidth, GridLinewidth, SynthesisConfig,
                        generate_lorentzian_basis)

_AXIS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "spectrometer_freq": {"type": "number", "exclusiveMinimum": 0},
        "center_ppm": {"type": "number"},
        "n_points": {"type": "integer", "minimum": 2},
        "bandwidth": {"type": "number", "exclusiveMinimum": 0},
    },
}

_LINEWIDTH_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False,
         "properties": {"mode": {"const": "fixed"},
                        "fwhm": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["mode", "fwhm"]},
        {"type": "object", "additionalProperties": False,
         "properties": {"mode": {"const": "grid"},
                        "low": {"type": "number", "exclusiveMinimum": 0},
                        "high": {"type": "number"},
                        "step": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["mode", "low", "high", "step"]},
    ]
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "peak_table": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "array",
                        "items": {"type": "array", "minItems": 2, "maxItems": 3},
                    },
                },
                "fwhm": {"type": "number", "exclusiveMinimum": 0},
                "edit_attenuation": {"type": "number", "minimum": 0, "maximum": 1},
                "axis": _AXIS_SCHEMA,
            },
        },
        "synthesis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 0},
                "noise_sigma_range": {"type": "array", "minItems": 2, "maxItems": 2,
                                      "items": {"type": "number", "minimum": 0}},
                "linewidth": _LINEWIDTH_SCHEMA,
                "master_seed": {"type": "integer"},
                "sobol_skip": {"type": "integer", "minimum": 0},
            },
            "required": ["n_samples"],
        },
        "export": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ppm_band": {"type": "array", "minItems": 2, "maxItems": 2,
                             "items": {"type": "number"}},
                "n_points": {"type": "integer", "minimum": 2},
                "acquisitions": {"type": "array", "items": {"enum": ["OFF", "ON", "DIFF"]}},
                "datatypes": {"type": "array",
                              "items": {"enum": ["real", "imaginary", "magnitude"]}},
                "target_norm": {"enum": ["sum", "max"]},
            },
        },
        "model": {
            "type": "object",
            "properties": {"type": {"enum": ["cnn", "yae"]}},
            "required": ["type"],
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "validation_fraction": {"type": "number", "minimum": 0,
                                        "exclusiveMaximum": 1},
            },
            "required": ["epochs"],
        },
        "selection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_evaluations": {"type": "integer", "minimum": 3},
                "init_design": {"type": "integer", "minimum": 2},
                "folds": {"type": "integer", "minimum": 2},
                "epochs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "water": {"type": "boolean"},
                "align": {"type": "boolean"},
                "experiment_label": {"type": "string"},
            },
        },
    },
}

SPACE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dimensions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"enum": ["categorical", "ordinal"]},
                    "choices": {"type": "array", "minItems": 1},
                    "values": {"type": "array", "minItems": 1},
                },
                "required": ["name", "kind"],
            },
        },
    },
    "required": ["dimensions"],
}

_CNN_KEYS = {"filters_early", "filters_late", "kernels", "down_early", "down_late",
             "conv_dropout", "dense_dropout", "dense_units", "output_activation",
             "batch_size", "n_outputs"}
_YAE_KEYS = {"encoder_depth", "decoder_depth", "quantifier_depth", "quantifier_width",
             "encoder_activation", "decoder_activation", "quantifier_activation",
             "output_activation", "encoder_dropout", "batch_size", "recon_weight",
             "quant_weight_start", "quant_weight_end", "ramp_epochs", "huber_delta",
             "n_outputs"}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def package_version() -> str:
    try:
        return metadata.version("megaquant")
    except metadata.PackageNotFoundError:
        return "unknown"


def make_stamp(cfg: dict, seed: Optional[int]) -> dict:
    return {"config_hash": config_hash(cfg), "seed": seed,
            "version": package_version()}


def validate_run_config(cfg: dict):
    """Schema plus fail-fast construction of every section present."""
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"run config invalid: {exc.message}") from exc
    if "synthesis" in cfg:
        synthesis_from_config(cfg["synthesis"])
    if "export" in cfg:
        export_from_config(cfg["export"])
    if "model" in cfg:
        model_from_config(cfg["model"], export_from_config(cfg.get("export", {})))
    if "basis" in cfg and "path" not in cfg["basis"]:
        axis_from_config(cfg["basis"].get("axis", {}))


def load_run_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    validate_run_config(cfg)
    return cfg


def axis_from_config(section: dict) -> PpmAxis:
    return PpmAxis(
        spectrometer_freq=section.get("spectrometer_freq", PpmAxis.spectrometer_freq),
        center_ppm=section.get("center_ppm", PpmAxis.center_ppm),
        n_points=section.get("n_points", 2048),
        bandwidth=section.get("bandwidth", 2000.0))


def basis_from_config(section: dict):
    """Synthetic basis from a peak table; archives load via the path key."""
    if "path" in section:
        from .archive import load_basis
        basis, _manifest = load_basis(section["path"])
        return basis
    axis = axis_from_config(section.get("axis", {}))
    table = section.get("peak_table") or DEFAULT_PEAK_TABLE
    table = {name: [tuple(p) for p in peaks] for name, peaks in table.items()}
    return generate_lorentzian_basis(
        table, section.get("fwhm", 2.0), axis,
        edit_attenuation=section.get("edit_attenuation", DEFAULT_EDIT_ATTENUATION))


def synthesis_from_config(section: dict, seed_override: Optional[int] = None) -> SynthesisConfig:
    lw = section.get("linewidth", {"mode": "fixed", "fwhm": 2.0})
    linewidth = (FixedLinewidth(lw["fwhm"]) if lw["mode"] == "fixed"
                 else GridLinewidth(lw["low"], lw["high"], lw["step"]))
    seed = seed_override if seed_override is not None else section.get("master_seed", 0)
    return SynthesisConfig(
        n_samples=section["n_samples"],
        noise_sigma_range=tuple(section.get("noise_sigma_range", (0.0, 0.03))),
        linewidth=linewidth, master_seed=seed,
        sobol_skip=section.get("sobol_skip", 0))


def export_from_config(section: dict) -> ExportConfig:
    kwargs = {}
    if "ppm_band" in section:
        kwargs["ppm_band"] = tuple(section["ppm_band"])
    if "n_points" in section:
        kwargs["n_points"] = section["n_points"]
    if "acquisitions" in section:
        kwargs["acquisitions"] = tuple(section["acquisitions"])
    if "datatypes" in section:
        kwargs["datatypes"] = tuple(section["datatypes"])
    if "target_norm" in section:
        kwargs["target_norm"] = section["target_norm"]
    return ExportConfig(**kwargs)


def model_from_config(section: dict, export: ExportConfig) -> Union[CnnConfig, YaeConfig]:
    kind = section.get("type")
    fields = {k: v for k, v in section.items() if k != "type"}
    if kind == "cnn":
        unknown = set(fields) - _CNN_KEYS
        if unknown:
            raise ConfigError(f"unknown cnn fields: {sorted(unknown)}")
        if "kernels" in fields:
            fields["kernels"] = tuple(fields["kernels"])
        return CnnConfig(export=export, **fields)
    if kind == "yae":
        unknown = set(fields) - _YAE_KEYS
        if unknown:
            raise ConfigError(f"unknown yae fields: {sorted(unknown)}")
        return YaeConfig(export=export, **fields)
    raise ConfigError(f"unknown model type {kind!r}")


def model_config_to_dict(cfg: Union[CnnConfig, YaeConfig]) -> dict:
    out = asdict(cfg)
    out["type"] = "cnn" if isinstance(cfg, CnnConfig) else "yae"
    out["export"] = {
        "ppm_band": list(cfg.export.ppm_band),
        "n_points": cfg.export.n_points,
        "acquisitions": list(cfg.export.acquisitions),
        "datatypes": list(cfg.export.datatypes),
        "target_norm": cfg.export.target_norm,
    }
    if "kernels" in out:
        out["kernels"] = list(out["kernels"])
    return out


def model_config_from_dict(d: dict) -> Union[CnnConfig, YaeConfig]:
    d = dict(d)
    export = export_from_config(d.pop("export"))
    return model_from_config(d, export)


def _hashable(value):
    return tuple(value) if isinstance(value, list) else value


def space_from_config(section: dict) -> ConfigSpace:
    jsonschema.validate(section, SPACE_SCHEMA)
    dims = []
    for entry in section["dimensions"]:
        options = entry.get("choices" if entry["kind"] == "categorical" else "values")
        if options is None:
            raise ConfigError(f"dimension {entry['name']} lists no options")
        options = tuple(_hashable(v) for v in options)
        if entry["kind"] == "categorical":
            dims.append(Categorical(entry["name"], options))
        else:
            dims.append(Ordinal(entry["name"], options))
    return ConfigSpace(dims)


def apply_space_point(template: Union[CnnConfig, YaeConfig], point: Dict,
                      export: ExportConfig) -> Union[CnnConfig, YaeConfig]:
    """Overlay a search-space point onto a template model config.

    Dimension names either address model fields directly or export
    fields with an ``export.`` prefix. A comma-joined name binds one
    choice tuple to several fields at once (coupled options).
    """
    export_updates = {}
    model_updates = {}
    flat = {}
    for name, value in point.items():
        if "," in name:
            fields = name.split(",")
            if len(fields) != len(value):
                raise ConfigError(
                    f"compound dimension {name!r} needs {len(fields)} values")
            flat.update(zip(fields, value))
        else:
            flat[name] = value
    for name, value in flat.items():
        if name.startswith("export."):
            export_updates[name.split(".", 1)[1]] = value
        else:
            model_updates[name] = value
    if export_updates:
        kwargs = {
            "ppm_band": export.ppm_band, "n_points": export.n_points,
            "acquisitions": export.acquisitions, "datatypes": export.datatypes,
            "target_norm": export.target_norm,
        }
        for key, value in export_updates.items():
            if key not in kwargs:
                raise ConfigError(f"unknown export field {key!r} in space point")
            kwargs[key] = tuple(value) if isinstance(value, (list, tuple)) else value
        export = ExportConfig(**kwargs)
    valid_keys = _CNN_KEYS if isinstance(template, CnnConfig) else _YAE_KEYS
    unknown = set(model_updates) - valid_keys
    if unknown:
        raise ConfigError(f"unknown model fields in space point: {sorted(unknown)}")
    model_updates = {k: tuple(v) if isinstance(v, list) else v
                     for k, v in model_updates.items()}
    return replace(template, export=export, **model_updates)
