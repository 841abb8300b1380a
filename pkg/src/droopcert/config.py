"""Experiment configuration files: strict parsing and model resolution.

One JSON file per experiment.  Schema (all sections optional unless a
command needs them; unknown keys are rejected):

  {"schema_version": 1,
   "case": "cases/ieee14_lossless.json",      # relative to the config file, or
                                              # "bundled:NAME" for shipped cases
   "out": "runs/demo",                        # default output dir
   "seed": 42,                                # required for randomized runs
   "powerflow": {"q_mode": "case" | "ideal" | "ideal_perturbed",
                  "perturb_magnitude": 0.3, "tol": 1e-10, "max_iter": 50},
   "models": {"default": MODEL, "overrides": {"1": MODEL, ...}},
   "contour": {"omega_min", "omega_max", "n_samples",
                "include_zero", "include_infinity"},
   "rx_ratio": 0.0,                           # optional certificate override
   "simulate": {"perturb_node", "perturb_voltage", "t_end", "dt", "record_every"},
   "alpha_sweep": {"bracket_half_width", "xtol"},
   "cross_scan": {"c_vp_min", "c_vp_max", "c_vp_steps",
                   "c_wq_min", "c_wq_max", "c_wq_steps"}}

MODEL is {"type": "generalized_droop", "c_wp", "c_wq", "c_vp", "c_vq",
"alpha", "alpha_offset"?} or {"type": "third_order_inverter", "tau_p",
"tau_q", "damping", "k_p", "delta"?, "k_q" or "alpha"} or {"type":
"third_order_machine", "tau_v", "x_transient", "tau_p", "damping", "k_p",
"delta"?}.  "alpha" may be the string "theory", resolved per node against
the operating point, shifted by "alpha_offset".
"""

import json
import os
from dataclasses import dataclass, field

from .certificate import ContourConfig, required_alpha
from .errors import ConfigError
from .grid import bundled_case_path, load_case
from .nodes import GeneralizedDroop, ThirdOrderInverter, ThirdOrderMachine

CONFIG_SCHEMA_VERSION = 1

_MODEL_FIELDS = {
    "generalized_droop": ({"c_wp", "c_wq", "c_vp", "c_vq", "alpha"}, {"alpha_offset"}),
    "third_order_inverter": ({"tau_p", "tau_q", "damping", "k_p"},
                             {"delta", "k_q", "alpha", "alpha_offset"}),
    "third_order_machine": ({"tau_v", "x_transient", "tau_p", "damping", "k_p"},
                            {"delta"}),
}


@dataclass
class PowerFlowSection:
    q_mode: str = "case"
    perturb_magnitude: float = 0.3
    tol: float = 1e-10
    max_iter: int = 50


@dataclass
class SimulateSection:
    perturb_node: int = 1
    perturb_voltage: float = -0.01
    t_end: float = 40.0
    dt: float = 1e-3
    record_every: int = 10


@dataclass
class AlphaSweepSection:
    bracket_half_width: float = 2.0
    xtol: float = 1e-6


@dataclass
class CrossScanSection:
    c_vp_min: float = -2.0
    c_vp_max: float = 2.0
    c_vp_steps: int = 41
    c_wq_min: float = -2.0
    c_wq_max: float = 2.0
    c_wq_steps: int = 41


@dataclass
class ExperimentConfig:
    path: str
    case_path: str
    out: str
    seed: object
    rx_ratio: object
    powerflow: PowerFlowSection
    contour: ContourConfig
    model_default: dict
    model_overrides: dict
    simulate: SimulateSection
    alpha_sweep: AlphaSweepSection
    cross_scan: CrossScanSection
    raw: dict = field(repr=False, default_factory=dict)


def _reject_unknown(obj, allowed, where, path):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: {where}: unknown fields {sorted(unknown)}")


def _section(raw, key, cls, path):
    data = raw.get(key, {})
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: {key} must be an object")
    fields = {f for f in cls.__dataclass_fields__}
    _reject_unknown(data, fields, key, path)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {key}: {exc}") from exc


def _validate_model_spec(spec, where, path):
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: {where}: model must be an object")
    kind = spec.get("type")
    if kind not in _MODEL_FIELDS:
        raise ConfigError(
            f"{path}: {where}: unknown model type {kind!r} "
            f"(expected one of {sorted(_MODEL_FIELDS)})")
    required, optional = _MODEL_FIELDS[kind]
    _reject_unknown(spec, required | optional | {"type"}, where, path)
    missing = required - set(spec)
    if missing:
        raise ConfigError(f"{path}: {where}: missing model fields {sorted(missing)}")
    if kind == "third_order_inverter":
        if ("k_q" in spec) == ("alpha" in spec):
            raise ConfigError(
                f"{path}: {where}: third_order_inverter needs exactly one of k_q/alpha")
    return spec


def load_config(path):
    """Parse and validate an experiment config; paths resolve against it."""
    path = str(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown(raw, {"schema_version", "case", "out", "seed", "rx_ratio",
                          "powerflow", "models", "contour", "simulate",
                          "alpha_sweep", "cross_scan"}, "config", path)
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {CONFIG_SCHEMA_VERSION}")
    if "case" not in raw or not isinstance(raw["case"], str):
        raise ConfigError(f"{path}: config needs a 'case' path")
    base = os.path.dirname(os.path.abspath(path))
    if raw["case"].startswith("bundled:"):
        case_path = bundled_case_path(raw["case"][len("bundled:"):])
    else:
        case_path = os.path.normpath(os.path.join(base, raw["case"]))

    pf = _section(raw, "powerflow", PowerFlowSection, path)
    if pf.q_mode not in ("case", "ideal", "ideal_perturbed"):
        raise ConfigError(f"{path}: powerflow.q_mode must be case/ideal/ideal_perturbed")
    seed = raw.get("seed")
    if pf.q_mode == "ideal_perturbed" and seed is None:
        raise ConfigError(f"{path}: seed is mandatory for randomized experiments")

    contour_raw = raw.get("contour", {})
    if not isinstance(contour_raw, dict):
        raise ConfigError(f"{path}: contour must be an object")
    _reject_unknown(contour_raw, {"omega_min", "omega_max", "n_samples",
                                  "include_zero", "include_infinity"}, "contour", path)
    try:
        contour = ContourConfig(**contour_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: contour: {exc}") from exc

    models_raw = raw.get("models", {})
    if not isinstance(models_raw, dict):
        raise ConfigError(f"{path}: models must be an object")
    _reject_unknown(models_raw, {"default", "overrides"}, "models", path)
    default = models_raw.get("default")
    if default is not None:
        _validate_model_spec(default, "models.default", path)
    overrides = {}
    for key, spec in models_raw.get("overrides", {}).items():
        try:
            node_id = int(key)
        except ValueError as exc:
            raise ConfigError(f"{path}: models.overrides key {key!r} is not a node id") from exc
        _validate_model_spec(spec, f"models.overrides[{key}]", path)
        overrides[node_id] = spec

    out = raw.get("out", "runs/latest")
    if not isinstance(out, str):
        raise ConfigError(f"{path}: out must be a string")
    rx_ratio = raw.get("rx_ratio")

    return ExperimentConfig(
        path=path, case_path=case_path, out=os.path.normpath(os.path.join(base, out)),
        seed=seed, rx_ratio=rx_ratio, powerflow=pf, contour=contour,
        model_default=default, model_overrides=overrides,
        simulate=_section(raw, "simulate", SimulateSection, path),
        alpha_sweep=_section(raw, "alpha_sweep", AlphaSweepSection, path),
        cross_scan=_section(raw, "cross_scan", CrossScanSection, path),
        raw=raw)


def _build_model(spec, alpha_required, node):
    """Instantiate one model spec, resolving alpha == "theory" per node."""
    kind = spec["type"]
    params = {k: v for k, v in spec.items() if k != "type"}
    offset = params.pop("alpha_offset", 0.0)
    alpha = params.pop("alpha", None)
    if alpha == "theory":
        alpha = float(alpha_required[node]) + float(offset)
    elif alpha is not None:
        alpha = float(alpha) + float(offset)
    try:
        if kind == "generalized_droop":
            return GeneralizedDroop(alpha=alpha, **params)
        if kind == "third_order_inverter":
            if alpha is not None:
                if alpha == 0:
                    raise ConfigError(
                        f"node {node + 1}: alpha resolves to 0, k_q undefined")
                params["k_q"] = 1.0 / alpha
            return ThirdOrderInverter(**params)
        return ThirdOrderMachine(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"node {node + 1}: bad model parameters: {exc}") from exc


def resolve_models(cfg, grid, op):
    """One model per node from the config's default plus per-node overrides."""
    if cfg.model_default is None and len(cfg.model_overrides) < grid.n_nodes:
        raise ConfigError(f"{cfg.path}: models.default is required unless every "
                          "node has an override")
    needs_theory = any(spec.get("alpha") == "theory"
                       for spec in [cfg.model_default, *cfg.model_overrides.values()]
                       if spec is not None)
    alpha_required = required_alpha(grid, op) if needs_theory else None
    models = []
    for n in range(grid.n_nodes):
        spec = cfg.model_overrides.get(n + 1, cfg.model_default)
        if spec is None:
            raise ConfigError(f"{cfg.path}: no model for node {n + 1}")
        models.append(_build_model(spec, alpha_required, n))
    return models


def load_case_for(cfg):
    return load_case(cfg.case_path)
