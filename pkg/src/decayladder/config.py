"""JSON configuration loading for the command-line tools.

Documents mirror the library types: a top-level object with "cloud",
"physics" (optional), "grid", "n_realizations", and "master_seed".  All
quantities are SI (radius in metres, rates in rad/s, times in seconds); the
shape factor xi is dimensionless.  A cloud may give "od" instead of
"radius", in which case the radius is derived from the optical depth.
Unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import copy
import json
from typing import List, Optional, Tuple

from .ensemble import EnsembleConfig
from .ladder import Integrator, SimGrid
from .physics import (CloudConfig, ConfigError, PhysicalParams, UMode,
                      radius_for_od)

_CLOUD_KEYS = {"n_total", "f_exc", "radius", "od", "xi", "u_mode", "clamp_negative"}
_PHYSICS_KEYS = {"gamma_a", "lambda_a"}
_GRID_KEYS = {"output_times", "t_max", "n_out", "integrator", "dt_internal",
              "error_tol", "active_window_eps"}
_TOP_KEYS = {"cloud", "physics", "grid", "n_realizations", "master_seed"}
_SWEEP_POINT_KEYS = _CLOUD_KEYS | {"master_seed", "n_realizations"}


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {where}.{key}")
    return section[key]


def _build_physics(doc: dict) -> PhysicalParams:
    section = doc.get("physics", {})
    if not isinstance(section, dict):
        raise ConfigError("physics must be an object")
    _reject_unknown(section, _PHYSICS_KEYS, "physics")
    kwargs = {k: float(section[k]) for k in _PHYSICS_KEYS if k in section}
    return PhysicalParams(**kwargs)


def _build_cloud(doc: dict, phys: PhysicalParams) -> CloudConfig:
    section = doc.get("cloud")
    if not isinstance(section, dict):
        raise ConfigError("missing required section: cloud")
    _reject_unknown(section, _CLOUD_KEYS, "cloud")
    n_total = _require(section, "n_total", "cloud")
    if not isinstance(n_total, int) or isinstance(n_total, bool):
        raise ConfigError(f"cloud.n_total must be an integer, got {n_total!r}")
    f_exc = float(_require(section, "f_exc", "cloud"))

    has_radius = "radius" in section
    has_od = "od" in section
    if has_radius == has_od:
        raise ConfigError("cloud needs exactly one of 'radius' or 'od'")
    if has_radius:
        radius = float(section["radius"])
    else:
        radius = radius_for_od(float(section["od"]), n_total, phys.kappa_a)

    kwargs = {}
    if "xi" in section:
        kwargs["xi"] = float(section["xi"])
    if "u_mode" in section:
        try:
            kwargs["u_mode"] = UMode(section["u_mode"])
        except ValueError:
            raise ConfigError(
                f"cloud.u_mode must be one of {[m.value for m in UMode]}, "
                f"got {section['u_mode']!r}") from None
    if "clamp_negative" in section:
        if not isinstance(section["clamp_negative"], bool):
            raise ConfigError("cloud.clamp_negative must be a boolean")
        kwargs["clamp_negative"] = section["clamp_negative"]
    return CloudConfig(n_total=n_total, f_exc=f_exc, radius=radius, **kwargs)


def _build_grid(doc: dict) -> SimGrid:
    section = doc.get("grid")
    if not isinstance(section, dict):
        raise ConfigError("missing required section: grid")
    _reject_unknown(section, _GRID_KEYS, "grid")

    kwargs = {}
    if "integrator" in section:
        try:
            kwargs["integrator"] = Integrator(section["integrator"])
        except ValueError:
            raise ConfigError(
                f"grid.integrator must be one of {[i.value for i in Integrator]}, "
                f"got {section['integrator']!r}") from None
    for key in ("dt_internal", "error_tol", "active_window_eps"):
        if key in section:
            kwargs[key] = float(section[key])

    has_times = "output_times" in section
    has_tmax = "t_max" in section
    if has_times == has_tmax:
        raise ConfigError("grid needs exactly one of 'output_times' or 't_max'")
    if has_times:
        if "n_out" in section:
            raise ConfigError("grid.n_out only applies together with t_max")
        return SimGrid(output_times=section["output_times"], **kwargs)
    n_out = section.get("n_out", 1024)
    if not isinstance(n_out, int) or isinstance(n_out, bool):
        raise ConfigError(f"grid.n_out must be an integer, got {n_out!r}")
    return SimGrid.uniform(float(section["t_max"]), n_out, **kwargs)


def build_ensemble_config(doc: dict) -> EnsembleConfig:
    """Validate a parsed config document and construct the ensemble config."""
    _reject_unknown(doc, _TOP_KEYS, "config")
    phys = _build_physics(doc)
    cloud = _build_cloud(doc, phys)
    grid = _build_grid(doc)
    kwargs = {}
    if "n_realizations" in doc:
        n = doc["n_realizations"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise ConfigError(f"n_realizations must be an integer, got {n!r}")
        kwargs["n_realizations"] = n
    if "master_seed" in doc:
        s = doc["master_seed"]
        if not isinstance(s, int) or isinstance(s, bool):
            raise ConfigError(f"master_seed must be an integer, got {s!r}")
        kwargs["master_seed"] = s
    return EnsembleConfig(cloud=cloud, grid=grid, phys=phys, **kwargs)


def build_sweep_configs(doc: dict) -> Tuple[List[EnsembleConfig], str]:
    """Expand a sweep document into per-point configs plus the trace selector.

    A sweep document holds a "base" config, a nonempty "points" list of
    overrides (cloud-level knobs such as od, f_exc, xi, plus optional
    per-point master_seed or n_realizations), and an optional "selector"
    choosing the trace the decay time is measured on.
    """
    _reject_unknown(doc, {"base", "points", "selector"}, "sweep config")
    base = doc.get("base")
    if not isinstance(base, dict):
        raise ConfigError("sweep config needs a 'base' section")
    points = doc.get("points")
    if not isinstance(points, list) or not points:
        raise ConfigError("sweep config needs a nonempty 'points' list")
    selector = doc.get("selector", "energy")
    if selector not in ("energy", "power"):
        raise ConfigError(f"sweep selector must be 'energy' or 'power', got {selector!r}")

    build_ensemble_config(copy.deepcopy(base))  # validate the base on its own
    configs = []
    for i, point in enumerate(points):
        if not isinstance(point, dict):
            raise ConfigError(f"sweep point {i} must be an object")
        _reject_unknown(point, _SWEEP_POINT_KEYS, f"sweep point {i}")
        merged = copy.deepcopy(base)
        cloud = merged.setdefault("cloud", {})
        for key, value in point.items():
            if key in ("master_seed", "n_realizations"):
                merged[key] = value
            else:
                cloud[key] = value
        # A point that re-specifies the cloud size drops the other one so the
        # exactly-one-of rule keeps holding.
        if "od" in point:
            cloud.pop("radius", None)
        if "radius" in point:
            cloud.pop("od", None)
        configs.append(build_ensemble_config(merged))
    return configs, selector


def apply_seed_override(config: EnsembleConfig, seed: Optional[int]) -> EnsembleConfig:
    """Replace the master seed when a --seed flag was given."""
    if seed is None:
        return config
    from dataclasses import replace
    return replace(config, master_seed=seed)
