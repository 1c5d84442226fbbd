"""Run configuration: TOML parsing, scenario defaults and validation.

A configuration file has up to five sections::

    [run]            # scenario selection and numerical controls
    [model]          # physical parameters (SI units)
    [stabilization]  # penalty constants
    [geometry]       # scenario-specific geometry knobs
    [output]         # snapshot/history controls

Only ``run.scenario`` is mandatory.  Every other key has a default: the
physical parameters default to the standard water-air values, and each
scenario preset then applies its own overrides (for example the counter-
moving-plates benchmark matches the densities and viscosities and reduces
the mobility) before user-supplied values are applied on top.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .physics import ModelParams, StabParams
from . import scenarios


class ConfigError(ValueError):
    pass


_RUN_KEYS = ("scenario", "order", "h", "theta", "dt", "t_end", "max_steps",
             "steady_rtol", "max_halvings", "restore_after")
_MODEL_KEYS = ("rho1", "rho2", "eta1", "eta2", "sigma12", "eps", "mobility",
               "alpha_gn", "sigma_s1", "sigma_s2", "volume_ratio", "body_force")
_STAB_KEYS = ("beta", "gamma_skeleton", "gamma_ghost")
_GEOMETRY_KEYS = ("u_wall", "height", "length", "u_max", "expression")
_OUTPUT_KEYS = ("directory", "sample_nx", "sample_ny", "interval")

#: per-scenario defaults layered between the global defaults and the file
SCENARIO_PRESETS = {
    "slip-channel": {
        "run": {"order": 2, "h": 1.25e-6, "theta": math.pi / 8,
                "dt": None, "t_end": None},
        "model": {"rho2": 1000.0, "eta2": 1.0e-3},
        "geometry": {"u_wall": 5.0, "height": 10e-6, "length": 40e-6},
    },
    "taylor-couette": {
        "run": {"order": 3, "h": 0.625e-6, "theta": math.pi / 8,
                "dt": 0.025, "t_end": 8.0},
        "model": {"rho2": 1000.0, "eta2": 1.0e-3, "mobility": 3.0487e-11},
        "geometry": {"height": 10e-6, "length": 50e-6},
    },
    "lattice": {
        "run": {"order": 2, "h": 0.25e-6, "theta": 0.0,
                "dt": 0.5e-6, "t_end": 30e-6},
        "model": {"body_force": (1.0e9, 0.0)},
        "geometry": {},
    },
    "porous": {
        "run": {"order": 2, "h": 0.625e-6, "theta": 0.0,
                "dt": 0.05e-6, "t_end": 20e-6},
        "model": {},
        "geometry": {"u_max": 5.0},
    },
}


@dataclass
class RunConfig:
    """Fully resolved run description."""

    scenario: str
    order: int
    h: float
    theta: float
    dt: float          # None: solve directly for the steady state
    t_end: float
    max_steps: int
    steady_rtol: float
    max_halvings: int
    restore_after: int
    model: ModelParams
    stab: StabParams
    geometry: dict
    output: dict


def _check_keys(section, given, allowed):
    for key in given:
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{key}' in section [{section}]; "
                f"known keys: {', '.join(allowed)}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc

    for section in doc:
        if section not in ("run", "model", "stabilization", "geometry", "output"):
            raise ConfigError(f"unknown section [{section}]")

    run = dict(doc.get("run", {}))
    _check_keys("run", run, _RUN_KEYS)
    scenario = run.pop("scenario", None)
    if scenario is None:
        raise ConfigError("missing mandatory key 'scenario' in section [run]")
    if scenario not in SCENARIO_PRESETS:
        raise ConfigError(
            f"unknown scenario '{scenario}'; available: "
            f"{', '.join(sorted(SCENARIO_PRESETS))}")
    preset = SCENARIO_PRESETS[scenario]

    run_vals = {"max_steps": 100000, "steady_rtol": 1e-6,
                "max_halvings": 12, "restore_after": 8}
    run_vals.update(preset["run"])
    run_vals.update(run)

    model_vals = dict(preset["model"])
    user_model = dict(doc.get("model", {}))
    _check_keys("model", user_model, _MODEL_KEYS)
    if "body_force" in user_model:
        user_model["body_force"] = tuple(user_model["body_force"])
    model_vals.update(user_model)
    try:
        model = ModelParams(**model_vals)
    except ValueError as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from exc
    if not model.neutral_wetting:
        raise ConfigError(
            "sigma_s1 != sigma_s2 requests a preferential-wetting wall; "
            "solver runs support neutral wetting only (sigma_s1 == sigma_s2)")

    stab_vals = dict(doc.get("stabilization", {}))
    _check_keys("stabilization", stab_vals, _STAB_KEYS)
    try:
        stab = StabParams(**stab_vals)
    except ValueError as exc:
        raise ConfigError(f"invalid stabilization parameters: {exc}") from exc

    geometry = dict(preset["geometry"])
    user_geom = dict(doc.get("geometry", {}))
    _check_keys("geometry", user_geom, _GEOMETRY_KEYS)
    for key in user_geom:
        if key not in geometry and key != "expression":
            raise ConfigError(
                f"geometry key '{key}' does not apply to scenario '{scenario}'")
    geometry.update(user_geom)
    if "expression" in geometry and scenario != "porous":
        raise ConfigError("geometry.expression applies to the porous scenario only")

    output = {"directory": "out", "sample_nx": 200, "sample_ny": 100,
              "interval": 10}
    user_out = dict(doc.get("output", {}))
    _check_keys("output", user_out, _OUTPUT_KEYS)
    output.update(user_out)
    if output["interval"] < 1 or output["sample_nx"] < 2 or output["sample_ny"] < 2:
        raise ConfigError("output controls must be positive (sample grid >= 2)")

    for key in ("order", "max_steps", "max_halvings", "restore_after"):
        if int(run_vals[key]) < 1:
            raise ConfigError(f"run.{key} must be a positive integer")
    if run_vals["h"] <= 0.0:
        raise ConfigError("run.h must be a positive length")
    if run_vals["dt"] is not None and run_vals["dt"] <= 0.0:
        raise ConfigError("run.dt must be positive (omit it for a steady solve)")

    return RunConfig(
        scenario=scenario,
        order=int(run_vals["order"]),
        h=float(run_vals["h"]),
        theta=float(run_vals["theta"]),
        dt=None if run_vals["dt"] is None else float(run_vals["dt"]),
        t_end=None if run_vals["t_end"] is None else float(run_vals["t_end"]),
        max_steps=int(run_vals["max_steps"]),
        steady_rtol=float(run_vals["steady_rtol"]),
        max_halvings=int(run_vals["max_halvings"]),
        restore_after=int(run_vals["restore_after"]),
        model=model,
        stab=stab,
        geometry=geometry,
        output=output)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value {v!r}")


def serialize(cfg: RunConfig) -> str:
    """Canonical TOML text of a resolved configuration.

    Serializing a parsed document and parsing it again yields an identical
    configuration (the canonical form is a fixed point).
    """
    run = {"scenario": cfg.scenario, "order": cfg.order, "h": cfg.h,
           "theta": cfg.theta, "max_steps": cfg.max_steps,
           "steady_rtol": cfg.steady_rtol, "max_halvings": cfg.max_halvings,
           "restore_after": cfg.restore_after}
    if cfg.dt is not None:
        run["dt"] = cfg.dt
    if cfg.t_end is not None:
        run["t_end"] = cfg.t_end
    sections = [("run", run), ("model", asdict(cfg.model)),
                ("stabilization", asdict(cfg.stab)),
                ("geometry", cfg.geometry), ("output", cfg.output)]
    lines = []
    for name, vals in sections:
        if not vals:
            continue
        lines.append(f"[{name}]")
        for key in sorted(vals):
            lines.append(f"{key} = {_format_value(vals[key])}")
        lines.append("")
    return "\n".join(lines)


def build_scenario(cfg: RunConfig) -> "scenarios.Scenario":
    """Instantiate the scenario a configuration describes."""
    builder = scenarios.BUILDERS[cfg.scenario]
    kwargs = dict(order=cfg.order, h=cfg.h, params=cfg.model, stab=cfg.stab)
    if cfg.scenario in ("slip-channel", "taylor-couette"):
        kwargs["theta"] = cfg.theta
        kwargs["height"] = cfg.geometry["height"]
        kwargs["length"] = cfg.geometry["length"]
    if cfg.scenario == "slip-channel":
        kwargs["u_wall"] = cfg.geometry["u_wall"]
        kwargs.pop("params")  # fixed single-fluid parameter set
    else:
        kwargs["dt"] = cfg.dt
        kwargs["t_end"] = cfg.t_end
    if cfg.scenario == "porous":
        kwargs["u_max"] = cfg.geometry["u_max"]
        kwargs["expression"] = cfg.geometry.get("expression")
    sc = builder(**kwargs)
    if cfg.dt is not None:
        sc.dt = cfg.dt
        sc.t_end = cfg.t_end
    sc.steady_rtol = cfg.steady_rtol
    return sc
