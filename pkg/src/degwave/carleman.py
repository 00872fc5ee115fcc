"""Carleman weights and numerical evaluation of both sides of the Carleman inequality.

With ``psi = |x|^2 - beta (t - t0)^2 + beta0`` and ``phi = exp(gamma psi)`` the
weighted density is

    e^{2 s phi} s gamma phi (|x|^alpha |grad z|^2 + z_t^2 + s^2 gamma^2 phi^2 z^2).

``e^{2 s phi}`` overflows doubles long before the interesting range of ``s``,
so every integral is accumulated in log space.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import ControlRegion, Domain
from .wavesolver import SpaceTimeField

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CarlemanParams:
    s: float
    gamma: float
    beta: float
    t0: float
    beta0: float = 0.0
    epsilon: float = 0.1
    delta: float = 0.1

    def replace(self, **kw) -> CarlemanParams:
        data = dict(self.__dict__)
        data.update(kw)
        return CarlemanParams(**data)


def beta_window(domain: Domain, epsilon: float, delta: float, T: float | None = None) -> dict:
    """All constraints on ``beta``: name -> (kind, bound).

    Upper bounds come from the weight construction and from the time-horizon
    choice; the lower bound ``beta T^2 > 4 max|x|^2 + 4 delta`` only applies
    when ``T`` is known.
    """
    a = domain.alpha
    out = {
        "beta < (2-alpha)/5 eps^alpha": ("upper", (2.0 - a) / 5.0 * epsilon**a),
        "beta < eps^alpha/5": ("upper", epsilon**a / 5.0),
        "beta < eps^(alpha+1)": ("upper", epsilon ** (a + 1.0)),
    }
    if T is not None:
        out["beta T^2 > 4 max|x|^2 + 4 delta"] = ("lower", (4.0 * domain.radius**2 + 4.0 * delta) / T**2)
    return out


def binding_constraint(domain: Domain, epsilon: float, delta: float) -> str:
    uppers = {k: v for k, (kind, v) in beta_window(domain, epsilon, delta).items() if kind == "upper"}
    return min(uppers, key=uppers.get)


def default_beta(domain: Domain, epsilon: float, delta: float, T: float) -> float:
    """Midpoint of the admissible beta interval (requires a non-empty window)."""
    win = beta_window(domain, epsilon, delta, T)
    upper = min(v for kind, v in win.values() if kind == "upper")
    lower = max([v for kind, v in win.values() if kind == "lower"] + [0.0])
    if lower >= upper:
        raise ValueError(f"empty beta window ({lower:g}, {upper:g}); increase T")
    return 0.5 * (lower + upper)


def check_params(params: CarlemanParams, domain: Domain, T: float | None = None) -> list[str]:
    """Names of violated constraints (empty list when the parameters are admissible)."""
    bad = []
    if params.s < 1.0:
        bad.append("s >= 1")
    if params.gamma < 1.0:
        bad.append("gamma >= 1")
    if params.beta0 < 0.0:
        bad.append("beta0 >= 0")
    if params.beta <= 0.0:
        bad.append("beta > 0")
    for name, (kind, bound) in beta_window(domain, params.epsilon, params.delta, T).items():
        if kind == "upper" and not params.beta < bound:
            bad.append(name)
        if kind == "lower" and not params.beta > bound:
            bad.append(name)
    if T is not None and not 0.0 < params.t0 < T:
        bad.append("t0 in (0, T)")
    return bad


def psi(p, t, params: CarlemanParams):
    """``|x|^2 - beta (t - t0)^2 + beta0``; points stacked on the last axis."""
    p = np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1) - params.beta * (np.asarray(t) - params.t0) ** 2 + params.beta0


def phi(p, t, params: CarlemanParams):
    return np.exp(params.gamma * psi(p, t, params))


def grad_phi(p, t, params: CarlemanParams):
    """``2 gamma phi x``."""
    p = np.asarray(p, dtype=float)
    return 2.0 * params.gamma * phi(p, t, params)[..., None] * p


def phi_t(p, t, params: CarlemanParams):
    """``-2 gamma beta (t - t0) phi``."""
    return -2.0 * params.gamma * params.beta * (np.asarray(t) - params.t0) * phi(p, t, params)


@dataclass(frozen=True)
class CarlemanSides:
    """Log-space integrals; ``-inf`` encodes an exact zero."""

    log_lhs: float
    log_rhs_control: float
    log_rhs_source: float

    @property
    def degenerate(self) -> bool:
        return self.log_rhs_control == -math.inf and self.log_rhs_source == -math.inf

    @property
    def log_rhs(self) -> float:
        return float(np.logaddexp(self.log_rhs_control, self.log_rhs_source))

    @property
    def ratio(self) -> float:
        if self.degenerate:
            return math.nan
        return math.exp(self.log_lhs - self.log_rhs)

    @property
    def lhs(self) -> float:
        return math.exp(self.log_lhs) if self.log_lhs < 700 else math.inf

    @property
    def rhs_control(self) -> float:
        return math.exp(self.log_rhs_control) if self.log_rhs_control < 700 else math.inf

    @property
    def rhs_source(self) -> float:
        return math.exp(self.log_rhs_source) if self.log_rhs_source < 700 else math.inf


def _nodal_gradient_energy(traj: SpaceTimeField) -> np.ndarray:
    """``|x|^alpha |grad z|^2`` at nodes: mean of the adjacent face values."""
    grid = traj.grid
    z = traj.snapshots
    out = np.zeros_like(z)
    for ax in range(grid.dim):
        g = grid.face_coefficients[ax] * (np.diff(z, axis=ax + 1) / grid.h[ax]) ** 2
        pad = [(0, 0)] * g.ndim
        pad[ax + 1] = (1, 0)
        left = np.pad(g, pad, mode="edge")
        pad[ax + 1] = (0, 1)
        right = np.pad(g, pad, mode="edge")
        out += 0.5 * (left + right)
    return out


def _log_integral(log_density: np.ndarray, weights: np.ndarray) -> float:
    keep = np.isfinite(log_density) & (weights > 0)
    if not np.any(keep):
        return -math.inf
    return float(logsumexp(log_density[keep], b=weights[keep]))


def _weighted_parts(traj: SpaceTimeField, params: CarlemanParams):
    grid = traj.grid
    t = traj.times
    pts = grid.points
    ph = np.exp(params.gamma * (np.sum(pts * pts, axis=-1)[None]
                                - params.beta * (t[(slice(None),) + (None,) * grid.dim] - params.t0) ** 2
                                + params.beta0))
    weights = traj.time_weights()[(slice(None),) + (None,) * grid.dim] * grid.node_weights[None]
    return ph, weights


def carleman_sides(traj: SpaceTimeField, omega: ControlRegion, params: CarlemanParams,
                   source=None) -> CarlemanSides:
    """Both sides of the Carleman inequality for an adjoint trajectory.

    ``traj`` must solve the adjoint equation with ``source`` (``None`` for a
    free evolution); ``source`` is a per-stored-time node array.
    """
    z = traj.snapshots
    if len(traj.times) < 3:
        raise ValueError("need at least three stored time levels")
    zt = np.gradient(z, traj.times, axis=0, edge_order=2)
    ph, weights = _weighted_parts(traj, params)
    s, g = params.s, params.gamma
    dens = _nodal_gradient_energy(traj) + zt * zt + (s * g * ph) ** 2 * z * z
    with np.errstate(divide="ignore"):
        logd = 2.0 * s * ph + np.log(s * g * ph) + np.log(dens)
        lhs = _log_integral(logd, weights)
        rhs_c = _log_integral(logd, weights * omega.mask[None])
        if source is None:
            rhs_s = -math.inf
        else:
            f = np.asarray(source, dtype=float)
            rhs_s = _log_integral(2.0 * s * ph + np.log(f * f), weights)
    return CarlemanSides(lhs, rhs_c, rhs_s)


@dataclass(frozen=True)
class ScanRow:
    s: float
    gamma: float
    sides: CarlemanSides

    @property
    def ratio(self) -> float:
        return self.sides.ratio


def carleman_scan(traj: SpaceTimeField, omega: ControlRegion, base: CarlemanParams,
                  s_list, gamma_list, source=None, T: float | None = None) -> list[ScanRow]:
    """Rows ordered by ``s`` then ``gamma`` as given; invalid pairs are skipped."""
    if not len(s_list) or not len(gamma_list):
        raise ValueError("s_list and gamma_list must be non-empty")
    rows = []
    for s in s_list:
        for g in gamma_list:
            params = base.replace(s=float(s), gamma=float(g))
            bad = check_params(params, traj.grid.domain, T)
            if bad:
                log.warning("skipping (s=%g, gamma=%g): violates %s", s, g, ", ".join(bad))
                continue
            rows.append(ScanRow(float(s), float(g), carleman_sides(traj, omega, params, source)))
    return rows


def trend_nonincreasing(rows: list[ScanRow]) -> bool:
    """Mean ratio over the last third of ``s`` values <= mean over the first third."""
    rows = sorted(rows, key=lambda r: r.s)
    ratios = np.array([r.ratio for r in rows])
    k = max(1, len(ratios) // 3)
    return bool(ratios[-k:].mean() <= ratios[:k].mean())


def calibrate(traj: SpaceTimeField, omega: ControlRegion, base: CarlemanParams,
              s_start: float = 10.0, gamma: float = 2.0, rtol: float = 0.05,
              max_doublings: int = 8) -> tuple[float, float]:
    """Double ``s`` until the ratio changes by less than ``rtol``; returns ``(s*, gamma*)``."""
    s = s_start
    prev = carleman_sides(traj, omega, base.replace(s=s, gamma=gamma)).ratio
    for _ in range(max_doublings):
        cur = carleman_sides(traj, omega, base.replace(s=2 * s, gamma=gamma)).ratio
        if abs(cur - prev) <= rtol * abs(prev):
            return s, gamma
        s, prev = 2 * s, cur
    return s, gamma


def write_scan_csv(rows: list[ScanRow], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "gamma", "log_lhs", "log_rhs_control", "log_rhs_source", "ratio"])
        for r in rows:
            writer.writerow([repr(r.s), repr(r.gamma), repr(r.sides.log_lhs),
                             repr(r.sides.log_rhs_control), repr(r.sides.log_rhs_source),
                             repr(r.ratio)])
