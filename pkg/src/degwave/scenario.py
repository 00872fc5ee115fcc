"""Scenario files: flat ``[section]`` / ``key = value`` text parsed with configparser.

A config path may also name a shipped preset (``benchmark-1d``,
``benchmark-2d``, ``classical``, ``steer-1d``), optionally written ``preset:NAME``.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .carleman import CarlemanParams, check_params, default_beta
from .geometry import (ControlRegion, Domain, Grid, build_control_region, default_delta,
                       default_epsilon, minimal_control_time, minimal_time, time_constraints_hold)
from .wavesolver import StatePair, cfl_timestep

PRESETS = ("benchmark-1d", "benchmark-2d", "classical", "steer-1d")


class ConfigError(ValueError):
    """Invalid scenario; ``key`` is the ``section.key`` at fault."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass
class Scenario:
    domain: Domain
    grid: Grid
    omega: ControlRegion
    T: float
    dt: float
    safety: float
    stride: int
    time_auto: bool
    s_list: list
    gamma_list: list
    carleman: CarlemanParams
    carleman_runs: int
    tol: float
    max_iter: int
    initial: StatePair
    target: StatePair
    samples: int
    threshold: float
    seed: int
    output_dir: str
    enforce_cfl: bool = True
    raw: dict = field(default_factory=dict, repr=False)


def preset_text(name: str) -> str:
    return resources.files("degwave.presets").joinpath(f"{name}.ini").read_text()


def read_config(path_or_preset: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    name = path_or_preset[len("preset:"):] if path_or_preset.startswith("preset:") else path_or_preset
    if os.path.exists(path_or_preset):
        with open(path_or_preset) as fh:
            text = fh.read()
    elif name in PRESETS:
        text = preset_text(name)
    else:
        raise ConfigError("config", f"no such file or preset: {path_or_preset}")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from exc
    return cp


def _get(cp, section, key, default=None):
    if cp.has_option(section, key):
        return cp.get(section, key).strip()
    if default is None:
        raise ConfigError(f"{section}.{key}", "missing required key")
    return default


def _float(cp, section, key, default=None) -> float:
    raw = _get(cp, section, key, default)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number, got {raw!r}") from None


def _int(cp, section, key, default=None) -> int:
    raw = _get(cp, section, key, default)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None


def _floats(cp, section, key, default=None) -> list:
    raw = _get(cp, section, key, default)
    try:
        return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected numbers, got {raw!r}") from None


def _bool(cp, section, key, default=None) -> bool:
    raw = _get(cp, section, key, default).lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{section}.{key}", f"expected a boolean, got {raw!r}")


def field_from_spec(grid: Grid, spec: str, key: str = "field") -> np.ndarray:
    """Node field from a preset string.

    ``zero``; ``gaussian [width]`` (``exp(-width |x|^2)`` times a boundary
    factor); ``sine k [amp]`` (``amp prod sin(k pi x_i)``, must vanish on the
    boundary); ``bump r [c0 c1]``; ``modes c1 c2 ...`` (coefficients on the
    lowest Dirichlet sine modes).
    """
    from .control import dirichlet_modes
    from .spaces import bump

    parts = spec.split()
    if not parts:
        raise ConfigError(key, "empty field spec")
    kind, args = parts[0].lower(), parts[1:]
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise ConfigError(key, f"bad numbers in {spec!r}") from None
    pts = grid.points
    if kind == "zero":
        f = grid.zeros()
    elif kind == "gaussian":
        width = nums[0] if nums else 20.0
        f = np.exp(-width * np.sum(pts * pts, axis=-1))
        for ax, (a, b) in enumerate(grid.domain.bounds):
            x = pts[..., ax]
            f = f * (x - a) * (b - x) / (-a * b)
    elif kind == "sine":
        if not nums:
            raise ConfigError(key, "sine needs a wavenumber")
        k = nums[0]
        amp = nums[1] if len(nums) > 1 else 1.0
        f = amp * np.prod(np.sin(k * np.pi * pts), axis=-1)
    elif kind == "bump":
        if not nums:
            raise ConfigError(key, "bump needs a radius")
        center = nums[1:] if len(nums) > 1 else [0.0] * grid.dim
        if len(center) != grid.dim:
            raise ConfigError(key, "bump centre has wrong dimension")
        f = bump(grid, center, nums[0])
    elif kind == "modes":
        modes = dirichlet_modes(grid, max(1, len(nums)))
        f = sum(c * m for c, m in zip(nums, modes)) + grid.zeros()
    else:
        raise ConfigError(key, f"unknown field preset {kind!r}")
    edge = np.abs(f[~grid.interior])
    if edge.size and edge.max() > 1e-10 * max(1.0, float(np.abs(f).max())):
        raise ConfigError(key, f"field {spec!r} does not vanish on the boundary")
    f = np.array(f, dtype=float)
    f[~grid.interior] = 0.0
    return f


def load_scenario(path_or_preset: str, output_dir: str | None = None) -> Scenario:
    """Parse and validate the geometry; time and parameter checks live in :func:`validate`."""
    cp = read_config(path_or_preset)
    dim = _int(cp, "domain", "dim")
    flat = _floats(cp, "domain", "bounds")
    if len(flat) != 2 * dim:
        raise ConfigError("domain.bounds", f"expected {2 * dim} numbers, got {len(flat)}")
    alpha = _float(cp, "domain", "alpha")
    if not (alpha == 0.0 or 0.0 < alpha < 2.0):
        raise ConfigError("domain.alpha", f"alpha = {alpha:g} violates alpha in (0,2) (0 allowed as reference)")
    bounds = tuple((flat[2 * i], flat[2 * i + 1]) for i in range(dim))
    try:
        domain = Domain(dim, bounds, alpha)
    except ValueError as exc:
        raise ConfigError("domain.bounds" if "bounds" in str(exc) else "domain.dim", str(exc)) from None
    try:
        grid = Grid(domain, _int(cp, "grid", "cells_per_axis"))
    except ValueError as exc:
        raise ConfigError("grid.cells_per_axis", str(exc)) from None

    d_raw = _get(cp, "region", "delta", "auto")
    e_raw = _get(cp, "region", "epsilon", "auto")
    delta = default_delta(grid) if d_raw == "auto" else _float(cp, "region", "delta")
    epsilon = default_epsilon(grid) if e_raw == "auto" else _float(cp, "region", "epsilon")
    include_origin = _bool(cp, "region", "include_origin", "true")
    try:
        omega = build_control_region(grid, delta, epsilon, include_origin)
    except ValueError as exc:
        key = "region.epsilon" if "epsilon" in str(exc) else "region.delta"
        raise ConfigError(key, str(exc)) from None

    safety = _float(cp, "time", "safety", "0.9")
    if not 0.0 < safety <= 1.0:
        raise ConfigError("time.safety", f"safety must lie in (0, 1], got {safety:g}")
    t_raw = _get(cp, "time", "T", "auto")
    time_auto = t_raw == "auto"
    if time_auto:
        try:
            T = minimal_time(domain, epsilon, delta)
        except ValueError as exc:
            raise ConfigError("region.epsilon", str(exc)) from None
    else:
        T = _float(cp, "time", "T")
        if T <= 0.0:
            raise ConfigError("time.T", "T must be positive")
    dt_raw = _get(cp, "time", "dt", "auto")
    dt = cfl_timestep(grid, safety) if dt_raw == "auto" else _float(cp, "time", "dt")
    stride = _int(cp, "time", "stride", "1")
    enforce_cfl = _bool(cp, "time", "enforce_cfl", "true")
    if stride < 1:
        raise ConfigError("time.stride", "stride must be >= 1")

    s_list = _floats(cp, "carleman", "s", "10 20 40")
    gamma_list = _floats(cp, "carleman", "gamma", "2")
    b_raw = _get(cp, "carleman", "beta", "auto")
    if b_raw == "auto":
        try:
            beta = default_beta(domain, epsilon, delta, T)
        except ValueError:
            beta = math.nan
    else:
        beta = _float(cp, "carleman", "beta")
    t0_raw = _get(cp, "carleman", "t0", "auto")
    t0 = 0.5 * T if t0_raw == "auto" else _float(cp, "carleman", "t0")
    carleman = CarlemanParams(s=s_list[0] if s_list else 10.0, gamma=gamma_list[0] if gamma_list else 2.0,
                              beta=beta, t0=t0, beta0=_float(cp, "carleman", "beta0", "0"),
                              epsilon=epsilon, delta=delta)

    def state(prefix):
        u = field_from_spec(grid, _get(cp, "hum", f"{prefix}_u", "zero"), f"hum.{prefix}_u")
        v = field_from_spec(grid, _get(cp, "hum", f"{prefix}_v", "zero"), f"hum.{prefix}_v")
        return StatePair(u, v)

    return Scenario(
        domain=domain, grid=grid, omega=omega, T=T, dt=dt, safety=safety, stride=stride,
        enforce_cfl=enforce_cfl,
        time_auto=time_auto, s_list=s_list, gamma_list=gamma_list, carleman=carleman,
        carleman_runs=_int(cp, "carleman", "runs", "5"),
        tol=_float(cp, "hum", "tol", "1e-8"), max_iter=_int(cp, "hum", "max_iter", "500"),
        initial=state("initial"), target=state("target"),
        samples=_int(cp, "observability", "samples", "100"),
        threshold=_float(cp, "observability", "threshold", "1"),
        seed=_int(cp, "run", "seed", "0"),
        output_dir=output_dir or _get(cp, "run", "output_dir", "degwave-out"),
        raw={s: dict(cp.items(s)) for s in cp.sections()},
    )


def validate(sc: Scenario, control_checks: bool = True) -> list[tuple[str, str]]:
    """Per-key problems; empty when every invariant holds.

    ``control_checks`` adds the time-horizon and Carleman-parameter windows,
    which only matter for the control-related subcommands.
    """
    problems = []
    if sc.omega.covers_domain:
        problems.append(("region.delta", "control region covers the whole domain"))
    dt_max = cfl_timestep(sc.grid, 1.0)
    if sc.enforce_cfl and sc.dt > dt_max * (1 + 1e-12):
        problems.append(("time.dt", f"dt = {sc.dt:g} exceeds the CFL bound {dt_max:g}"))
    if sc.tol <= 0.0:
        problems.append(("hum.tol", "tol must be positive"))
    if sc.max_iter < 1:
        problems.append(("hum.max_iter", "max_iter must be >= 1"))
    if sc.samples < 1:
        problems.append(("observability.samples", "samples must be >= 1"))
    if sc.threshold <= 0.0:
        problems.append(("observability.threshold", "threshold must be positive"))
    if not control_checks:
        return problems
    eps, delta = sc.carleman.epsilon, sc.carleman.delta
    if not sc.omega.contains_origin:
        problems.append(("region.include_origin", "control results assume 0 in omega"))
    if not 0.0 < eps < sc.domain.dist_origin_to_boundary:
        problems.append(("region.epsilon", "epsilon must lie in (0, dist(0, boundary))"))
        return problems
    for name, ok in time_constraints_hold(sc.domain, eps, delta, sc.T).items():
        if not ok:
            t0 = minimal_control_time(sc.domain, eps)
            problems.append(("time.T", f"T = {sc.T:g} violates {name} (T0 = {t0:g}, "
                                       f"minimal admissible T = {minimal_time(sc.domain, eps, delta):g})"))
    if math.isnan(sc.carleman.beta):
        problems.append(("carleman.beta", "no admissible beta for this T (empty beta window)"))
    else:
        params = [sc.carleman.replace(s=s, gamma=g) for s in sc.s_list for g in sc.gamma_list]
        seen = set()
        for p in params or [sc.carleman]:
            for name in check_params(p, sc.domain, sc.T):
                if name not in seen:
                    seen.add(name)
                    key = {"s >= 1": "carleman.s", "gamma >= 1": "carleman.gamma",
                           "beta0 >= 0": "carleman.beta0", "t0 in (0, T)": "carleman.t0"}.get(name, "carleman.beta")
                    problems.append((key, f"violates {name}"))
    if not sc.s_list:
        problems.append(("carleman.s", "empty list"))
    if not sc.gamma_list:
        problems.append(("carleman.gamma", "empty list"))
    return problems
