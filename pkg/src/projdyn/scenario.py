"""Scenario files: declarative TOML descriptions of a simulation run.

A scenario names a built-in model, an initial state, integration
settings, an optional controller, and output paths.  Parsing is strict;
a missing or ill-typed field raises :class:`ScenarioError` naming the
offending key, which the command line maps to a configuration-error
exit code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .control import (DesiredMotion, ForceControlPolicy, ForceGains,
                      HybridPolicy, MotionGains, PassiveJointPolicy,
                      PidcPolicy)
from .errors import ProjdynError, ScenarioError
from .projection import MetricTensor
from .simulate import ConstantPolicy, SimConfig, zero_policy
from .systems import (GeneralizedState, MechanicalSystem,
                      make_particle_on_circle, make_slider_crank)

MODELS = ("slider_crank", "particle_on_circle")
CONTROL_KINDS = ("none", "constant", "pidc", "force", "hybrid")


@dataclass
class Scenario:
    """A fully validated scenario, ready to run."""

    name: str
    system: MechanicalSystem
    initial: GeneralizedState
    config: SimConfig
    control_kind: str
    make_policy: Callable[[], object]
    csv_path: Optional[str] = None
    summary_path: Optional[str] = None


def _get(table: dict, key: str, kind, section: str, required: bool = True,
         default=None):
    if key not in table:
        if required:
            raise ScenarioError(f"missing required field '{section}.{key}'",
                                field=f"{section}.{key}")
        return default
    val = table[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ScenarioError(
                f"field '{section}.{key}' must be a number, got {val!r}",
                field=f"{section}.{key}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ScenarioError(
                f"field '{section}.{key}' must be an integer, got {val!r}",
                field=f"{section}.{key}")
        return int(val)
    if kind is str:
        if not isinstance(val, str):
            raise ScenarioError(
                f"field '{section}.{key}' must be a string, got {val!r}",
                field=f"{section}.{key}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise ScenarioError(
                f"field '{section}.{key}' must be a boolean, got {val!r}",
                field=f"{section}.{key}")
        return val
    if kind is list:
        if not isinstance(val, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise ScenarioError(
                f"field '{section}.{key}' must be a list of numbers, got {val!r}",
                field=f"{section}.{key}")
        return [float(v) for v in val]
    raise TypeError(f"unsupported kind {kind}")


def _build_system(table: dict) -> MechanicalSystem:
    name = _get(table, "name", str, "model")
    if name not in MODELS:
        raise ScenarioError(
            f"unknown model '{name}'; available: {', '.join(MODELS)}",
            field="model.name")
    try:
        if name == "slider_crank":
            system = make_slider_crank(
                mass=_get(table, "mass", float, "model", required=False, default=1.0),
                length=_get(table, "length", float, "model", required=False, default=1.0),
                gravity=_get(table, "gravity", float, "model", required=False, default=9.81))
        else:
            system = make_particle_on_circle(
                mass=_get(table, "mass", float, "model", required=False, default=1.0),
                radius=_get(table, "radius", float, "model", required=False, default=1.0),
                gravity=_get(table, "gravity", float, "model", required=False, default=0.0))
    except ScenarioError:
        raise
    except ProjdynError as exc:
        raise ScenarioError(f"model parameters invalid: {exc}", field="model") from exc
    passive = _get(table, "actuation", list, "model", required=False)
    if passive is not None:
        if len(passive) != system.dof or any(v not in (0.0, 1.0) for v in passive):
            raise ScenarioError(
                f"model.actuation must be {system.dof} entries of 0 or 1",
                field="model.actuation")
        system.actuation = np.diag(np.array(passive))
    return system


def _build_desired(table: dict, dim: int, section: str) -> DesiredMotion:
    kind = _get(table, "trajectory", str, section, required=False, default="constant")
    if kind == "constant":
        target = _get(table, "target", list, section)
        if len(target) != dim:
            raise ScenarioError(f"'{section}.target' must have {dim} entries",
                                field=f"{section}.target")
        return DesiredMotion.constant(np.array(target))
    if kind == "sinusoid":
        center = _get(table, "center", list, section)
        amplitude = _get(table, "amplitude", list, section)
        omega = _get(table, "omega", float, section)
        phase = _get(table, "phase", float, section, required=False, default=0.0)
        if len(center) != dim or len(amplitude) != dim:
            raise ScenarioError(
                f"'{section}.center' and '{section}.amplitude' must have {dim} entries",
                field=f"{section}.center")
        return DesiredMotion.sinusoid(np.array(center), np.array(amplitude),
                                      omega, phase)
    raise ScenarioError(
        f"unknown trajectory kind '{kind}' (constant or sinusoid)",
        field=f"{section}.trajectory")


def _vector(table: dict, key: str, n: int, section: str, required=True,
            default=None):
    vals = _get(table, key, list, section, required=required)
    if vals is None:
        return default
    if len(vals) != n:
        raise ScenarioError(f"'{section}.{key}' must have {n} entries",
                            field=f"{section}.{key}")
    return np.array(vals)


def _build_policy_factory(table: Optional[dict], system: MechanicalSystem,
                          config: SimConfig):
    """Returns (control_kind, factory); the factory builds a fresh policy per run."""
    n = system.dof
    if table is None:
        return "none", lambda: zero_policy
    kind = _get(table, "kind", str, "control")
    if kind not in CONTROL_KINDS:
        raise ScenarioError(
            f"unknown control kind '{kind}'; available: {', '.join(CONTROL_KINDS)}",
            field="control.kind")
    if kind == "none":
        return kind, lambda: zero_policy
    if kind == "constant":
        f = _vector(table, "force", n, "control")
        return kind, lambda: ConstantPolicy(f)

    rank_tol = config.rank_tol
    if kind in ("pidc", "hybrid"):
        if system.task_map is None:
            raise ScenarioError("model has no task map; motion control unavailable",
                                field="control.kind")
        k = system.task_map.dim
        gp = _get(table, "gp", float, "control")
        gd = _get(table, "gd", float, "control")
        desired = _build_desired(table, k, "control")
        weight = _vector(table, "weight", n, "control", required=False)
        passive_wrap = _get(table, "passive_wrap", bool, "control",
                            required=False, default=False)

    if kind == "pidc":
        def make_pidc():
            gains = MotionGains.from_scalars(gp, gd, k)
            metric = MetricTensor.diagonal(weight) if weight is not None else None
            policy = PidcPolicy(system, desired, gains, metric=metric,
                                rank_tol=rank_tol)
            if passive_wrap:
                policy = PassiveJointPolicy(system, policy, rank_tol=rank_tol)
            return policy
        return kind, make_pidc

    gf = _get(table, "gf", float, "control")
    gi = _get(table, "gi", float, "control")
    desired_force = _vector(table, "desired_force", n, "control")
    curvature_form = _get(table, "curvature_form", str, "control",
                          required=False, default="plant")
    if curvature_form not in ("printed", "plant"):
        raise ScenarioError("control.curvature_form must be 'printed' or 'plant'",
                            field="control.curvature_form")
    disturbance = _vector(table, "disturbance", n, "control", required=False)
    windup = _get(table, "windup_limit", float, "control", required=False)

    if kind == "force":
        def make_force():
            gains = ForceGains.from_scalars(gf, gi, n, windup_limit=windup)
            return ForceControlPolicy(system, desired_force, gains,
                                      disturbance=disturbance,
                                      curvature_form=curvature_form,
                                      rank_tol=rank_tol)
        return kind, make_force

    def make_hybrid():
        mgains = MotionGains.from_scalars(gp, gd, k)
        fgains = ForceGains.from_scalars(gf, gi, n, windup_limit=windup)
        return HybridPolicy(system, desired, mgains, desired_force, fgains,
                            curvature_form=curvature_form,
                            extra_force=disturbance, rank_tol=rank_tol)
    return kind, make_hybrid


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}", field="") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid TOML: {exc}",
                            field="") from exc

    for section in ("model", "initial", "sim"):
        if section not in doc or not isinstance(doc[section], dict):
            raise ScenarioError(f"missing required section [{section}]",
                                field=section)

    system = _build_system(doc["model"])
    n = system.dof

    q = _vector(doc["initial"], "q", n, "initial")
    qdot = _vector(doc["initial"], "qdot", n, "initial")
    try:
        initial = GeneralizedState(q, qdot)
    except ProjdynError as exc:
        raise ScenarioError(f"initial state invalid: {exc}", field="initial") from exc

    sim = doc["sim"]
    try:
        config = SimConfig(
            dt=_get(sim, "dt", float, "sim"),
            t_end=_get(sim, "t_end", float, "sim"),
            integrator=_get(sim, "integrator", str, "sim", required=False,
                            default="rk4"),
            nr_tol=_get(sim, "nr_tol", float, "sim", required=False, default=1e-10),
            nr_max_iter=_get(sim, "nr_max_iter", int, "sim", required=False,
                             default=10),
            correction_every=_get(sim, "correction_every", int, "sim",
                                  required=False, default=1),
            dynamics_variant=_get(sim, "dynamics_variant", str, "sim",
                                  required=False, default="skew"),
            gamma=_get(sim, "gamma", float, "sim", required=False),
            rank_tol=_get(sim, "rank_tol", float, "sim", required=False))
    except ScenarioError:
        raise
    except ProjdynError as exc:
        raise ScenarioError(f"simulation settings invalid: {exc}",
                            field="sim") from exc

    control = doc.get("control")
    if control is not None and not isinstance(control, dict):
        raise ScenarioError("[control] must be a table", field="control")
    kind, factory = _build_policy_factory(control, system, config)

    output = doc.get("output", {})
    csv_path = _get(output, "csv", str, "output", required=False)
    summary_path = _get(output, "summary", str, "output", required=False)

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ScenarioError("name must be a string", field="name")

    return Scenario(name=name or str(path), system=system, initial=initial,
                    config=config, control_kind=kind, make_policy=factory,
                    csv_path=csv_path, summary_path=summary_path)
