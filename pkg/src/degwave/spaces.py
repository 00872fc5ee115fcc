"""Weighted norms, the Hardy and L^q embedding ratios, and the energy functional.

Fields are plain node arrays of shape ``grid.shape``. Cell integrals use the
midpoint rule (cell value = mean of its corners); gradient terms use
face-centred differences with the coefficient sampled at the faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Grid


@dataclass(frozen=True)
class EnergySnapshot:
    """Squared energy ``kinetic + potential`` at time ``time``."""

    kinetic: float
    potential: float
    time: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.potential

    @property
    def norm(self) -> float:
        return math.sqrt(max(self.total, 0.0))


def grid_inner(grid: Grid, u, w) -> float:
    """Lumped nodal inner product ``sum_nodes h^d u w`` used by the solver and HUM."""
    return float(grid.cell_volume * np.sum(u * w))


def cell_values(grid: Grid, u) -> np.ndarray:
    """Midpoint values on cells: mean over the ``2**dim`` corners."""
    u = np.asarray(u, dtype=float)
    for ax in range(grid.dim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        u = 0.5 * (u[tuple(lo)] + u[tuple(hi)])
    return u


def _gradient_sq(grid: Grid, u, coeffs) -> float:
    total = 0.0
    for ax in range(grid.dim):
        du = np.diff(u, axis=ax) / grid.h[ax]
        total += float(np.sum(grid.face_weights(ax) * coeffs[ax] * du * du))
    return total


def _l2_sq(grid: Grid, u) -> float:
    uc = cell_values(grid, u)
    return grid.cell_volume * float(np.sum(uc * uc))


def gradient_energy(grid: Grid, u) -> float:
    """Squared weighted seminorm ``|| |x|^(alpha/2) grad u ||^2``."""
    return _gradient_sq(grid, u, grid.face_coefficients)


def l2_norm(grid: Grid, u) -> float:
    return math.sqrt(_l2_sq(grid, u))


def weighted_h1_norm(grid: Grid, u) -> float:
    """``|| |x|^(alpha/2) grad u ||_L2 + ||u||_L2``."""
    return math.sqrt(gradient_energy(grid, u)) + l2_norm(grid, u)


def h1_norm(grid: Grid, u) -> float:
    """Unweighted ``||grad u|| + ||u||`` with the same quadrature."""
    ones = tuple(np.ones_like(c) for c in grid.face_coefficients)
    return math.sqrt(_gradient_sq(grid, u, ones)) + l2_norm(grid, u)


def energy(grid: Grid, u, u_t, t: float = 0.0) -> EnergySnapshot:
    return EnergySnapshot(kinetic=_l2_sq(grid, u_t), potential=gradient_energy(grid, u), time=float(t))


def _check_nonzero_dirichlet(grid: Grid, u):
    if grid.dim < 2:
        raise ValueError("Hardy-type ratios need dim >= 2")
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValueError("field is identically zero")
    if np.any(u[~grid.interior]):
        raise ValueError("field must vanish on the boundary")
    return u


def _origin_cells(grid: Grid) -> np.ndarray:
    """Cells whose closure contains the origin."""
    tol = 1e-12 * float(grid.h.max())
    masks = [(x[:-1] <= tol) & (x[1:] >= -tol) for x in grid.axes]
    out = masks[0]
    for m in masks[1:]:
        out = np.multiply.outer(out, m)
    return out


@dataclass(frozen=True)
class HardyTerms:
    prefactor: float
    weighted_l2: float
    h1_norm: float
    excluded_cells: int
    excluded_mass_bound: float

    @property
    def ratio(self) -> float:
        return self.prefactor * self.weighted_l2 / self.h1_norm


def hardy_terms(grid: Grid, u) -> HardyTerms:
    """Both sides of the Hardy inequality with the origin cells cut out.

    ``excluded_mass_bound`` bounds the dropped part of ``int |x|^(alpha-2) u^2``
    by ``max u^2`` on those cells times the weight's integral over a ball
    covering them.
    """
    u = _check_nonzero_dirichlet(grid, u)
    n, alpha = grid.dim, grid.alpha
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"Hardy ratio needs alpha in (0, 2), got {alpha}")
    prefactor = n - 2.0 + alpha
    uc = cell_values(grid, u)
    excluded = _origin_cells(grid)
    r = np.sqrt(np.sum(grid.cell_centers**2, axis=-1))
    keep = ~excluded
    weighted = grid.cell_volume * float(np.sum(r[keep] ** (alpha - 2.0) * uc[keep] ** 2))

    near = grid.radius <= math.sqrt(n) * float(grid.h.max()) * (1 + 1e-12)
    rad = math.sqrt(n) * float(grid.h.max())
    sphere = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
    bound = float(np.max(u[near] ** 2)) * sphere * rad**prefactor / prefactor
    return HardyTerms(prefactor=prefactor, weighted_l2=math.sqrt(weighted),
                      h1_norm=weighted_h1_norm(grid, u),
                      excluded_cells=int(excluded.sum()), excluded_mass_bound=bound)


def hardy_ratio(grid: Grid, u) -> float:
    """``(N-2+alpha) || |x|^(alpha/2-1) u || / ||u||_H``."""
    return hardy_terms(grid, u).ratio


def critical_exponent(dim: int, alpha: float) -> float:
    """Largest admissible q for the embedding, ``2N / (N - 2 + alpha)``."""
    return 2.0 * dim / (dim - 2.0 + alpha)


def lq_norm(grid: Grid, u, q: float) -> float:
    uc = np.abs(cell_values(grid, u))
    return float((grid.cell_volume * np.sum(uc**q)) ** (1.0 / q))


def lq_embedding_ratio(grid: Grid, u, q: float) -> float:
    u = _check_nonzero_dirichlet(grid, u)
    qmax = critical_exponent(grid.dim, grid.alpha)
    if not 1.0 <= q <= qmax * (1 + 1e-12):
        raise ValueError(f"q = {q} outside [1, {qmax:g}]")
    return lq_norm(grid, u, q) / weighted_h1_norm(grid, u)


def bump(grid: Grid, center, radius: float, power: int = 2) -> np.ndarray:
    """``(1 - |x - c|^2 / r^2)_+ ** power`` sampled on the nodes."""
    d2 = np.sum((grid.points - np.asarray(center, dtype=float)) ** 2, axis=-1)
    return np.clip(1.0 - d2 / radius**2, 0.0, None) ** power


def hardy_suite(grid: Grid) -> list[np.ndarray]:
    """Twenty compactly supported test fields spread over the box."""
    lo = np.array([a for a, _ in grid.domain.bounds])
    hi = np.array([b for _, b in grid.domain.bounds])
    span = hi - lo
    smallest = float(span.min())
    fields = []
    # centred on the degenerate point, shrinking supports and varying smoothness
    for frac, power in ((0.45, 2), (0.3, 2), (0.2, 2), (0.45, 3), (0.3, 3), (0.25, 4)):
        fields.append(bump(grid, np.zeros(grid.dim), frac * smallest, power))
    # off-centre bumps, some covering the origin and some not
    rng = np.random.default_rng(2024)
    while len(fields) < 20:
        r = rng.uniform(0.1, 0.3) * smallest
        c = rng.uniform(lo + r, hi - r)
        fields.append(bump(grid, c, r, int(rng.integers(2, 4))))
    for f in fields:
        f[~grid.interior] = 0.0
    return fields
