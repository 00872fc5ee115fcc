"""Box domains, tensor grids, the boundary portion Gamma_+ and control regions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# relative slack used when comparing node distances against collar/ball radii
_DIST_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod_i (a_i, b_i)`` containing the origin.

    ``alpha`` is the exponent of the degenerate coefficient ``|x|**alpha``;
    ``alpha == 0`` is accepted as the non-degenerate reference case.
    """

    dim: int
    bounds: tuple[tuple[float, float], ...]
    alpha: float

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(bounds) != self.dim:
            raise ValueError(f"expected {self.dim} bound pairs, got {len(bounds)}")
        for a, b in bounds:
            if not a < 0.0 < b:
                raise ValueError(f"bounds ({a}, {b}) must satisfy a < 0 < b")
        if not 0.0 <= self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2) (or equal 0), got {self.alpha}")

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.bounds])

    @property
    def radius(self) -> float:
        """max |x| over the closed box (distance to the farthest corner)."""
        return math.sqrt(sum(max(a * a, b * b) for a, b in self.bounds))

    @property
    def dist_origin_to_boundary(self) -> float:
        return min(min(-a, b) for a, b in self.bounds)


def coefficient(x, alpha: float):
    """Degenerate coefficient ``|x|**alpha`` for points stacked on the last axis.

    For ``alpha == 0`` this returns exact ones, so weighted quantities reduce
    bitwise to their unweighted counterparts.
    """
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if alpha == 0.0:
        return np.ones_like(r)
    return r**alpha


def coefficient_at(p, alpha: float) -> float:
    """a(p) = |p|**alpha at a single point (scalar for 1D)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return float(coefficient(p, alpha))


def coefficient_holder_constant(domain: Domain) -> tuple[float, float]:
    """Return ``(L, e)`` with ``|a(p) - a(q)| <= L |p - q|**e`` on the closed box."""
    alpha = domain.alpha
    if alpha == 0.0:
        return 0.0, 1.0
    if alpha <= 1.0:
        # | |p|^a - |q|^a | <= | |p| - |q| |^a for 0 < a <= 1
        return 1.0, alpha
    return alpha * domain.radius ** (alpha - 1.0), 1.0


class Grid:
    """Uniform tensor-product node grid on a :class:`Domain`.

    ``cells`` is the number of cells per axis (an int or one int per axis).
    Fields live on the full node array of shape ``self.shape``; boundary
    nodes are included.
    """

    def __init__(self, domain: Domain, cells):
        if np.isscalar(cells):
            cells = (int(cells),) * domain.dim
        cells = tuple(int(c) for c in cells)
        if len(cells) != domain.dim:
            raise ValueError("one cell count per axis required")
        if min(cells) < 8:
            raise ValueError(f"cells_per_axis must be >= 8, got {cells}")
        self.domain = domain
        self.cells = cells
        self.axes = [np.linspace(a, b, n + 1) for (a, b), n in zip(domain.bounds, cells)]
        self.h = np.array([(b - a) / n for (a, b), n in zip(domain.bounds, cells)])
        self.faces = [0.5 * (x[1:] + x[:-1]) for x in self.axes]

    def __repr__(self):
        return f"Grid(bounds={self.domain.bounds}, cells={self.cells}, alpha={self.domain.alpha})"

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def alpha(self) -> float:
        return self.domain.alpha

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``self.shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.points**2, axis=-1))

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.faces, indexing="ij"), axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Trapezoidal nodal weights (halved on each boundary hyperplane)."""
        w = np.full(self.shape, self.cell_volume)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            for end in (0, -1):
                idx[ax] = end
                w[tuple(idx)] *= 0.5
        return w

    def face_points(self, axis: int) -> np.ndarray:
        """Centres of the faces crossed by ``diff`` along ``axis``."""
        coords = [self.faces[ax] if ax == axis else self.axes[ax] for ax in range(self.dim)]
        return np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)

    @cached_property
    def face_coefficients(self) -> tuple[np.ndarray, ...]:
        """|x|**alpha sampled at face centres, one array per axis."""
        return tuple(coefficient(self.face_points(ax), self.alpha) for ax in range(self.dim))

    def face_weights(self, axis: int) -> np.ndarray:
        return self._face_weights[axis]

    @cached_property
    def _face_weights(self) -> tuple[np.ndarray, ...]:
        return tuple(self._make_face_weights(ax) for ax in range(self.dim))

    def _make_face_weights(self, axis: int) -> np.ndarray:
        """Quadrature weights for face-centred quantities along ``axis``.

        Each face carries one cell volume, halved on boundary rows of the
        transverse axes.
        """
        shape = list(self.shape)
        shape[axis] -= 1
        w = np.full(shape, self.cell_volume)
        for ax in range(self.dim):
            if ax == axis:
                continue
            idx = [slice(None)] * self.dim
            for end in (0, -1):
                idx[ax] = end
                w[tuple(idx)] *= 0.5
        return w

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x0, x1, ...)`` on the nodes."""
        return np.asarray(func(*np.meshgrid(*self.axes, indexing="ij")), dtype=float) * np.ones(self.shape)

    def refined(self, factor: int = 2) -> Grid:
        return Grid(self.domain, tuple(c * factor for c in self.cells))


@dataclass(frozen=True)
class BoundaryFace:
    """One side of the box: ``x[axis] == offset * sign``, outward normal ``sign * e_axis``."""

    axis: int
    sign: int
    position: float

    @property
    def x_dot_nu(self) -> float:
        # constant over the whole side for an axis-aligned box
        return self.position * self.sign


def gamma_plus(domain: Domain) -> list[BoundaryFace]:
    """Sides of the box on which ``x . nu >= 0`` (evaluated at the side centre)."""
    faces = []
    for ax, (a, b) in enumerate(domain.bounds):
        for sign, pos in ((-1, a), (1, b)):
            face = BoundaryFace(ax, sign, pos)
            if face.x_dot_nu >= 0.0:
                faces.append(face)
    return faces


@dataclass(frozen=True)
class ControlRegion:
    """Node mask of the control set omega."""

    mask: np.ndarray = field(repr=False)
    delta: float
    epsilon: float
    contains_origin: bool
    covers_domain: bool = False

    @property
    def collar_width(self) -> float:
        return 3.0 * self.delta

    @property
    def origin_radius(self) -> float:
        return 3.0 * self.epsilon if self.contains_origin else 0.0

    @property
    def indicator(self) -> np.ndarray:
        return self.mask.astype(float)


def distance_to_gamma_plus(grid: Grid) -> np.ndarray:
    """Euclidean distance of every node to the union of the Gamma_+ sides."""
    pts = grid.points
    dist = np.full(grid.shape, np.inf)
    for face in gamma_plus(grid.domain):
        # nodes lie inside the box, so the foot of the perpendicular is on the side
        d = np.abs(pts[..., face.axis] - face.position)
        dist = np.minimum(dist, d)
    return dist


def default_delta(grid: Grid) -> float:
    return 3.0 * float(grid.h.max())


def default_epsilon(grid: Grid) -> float:
    return 5.0 * float(grid.h.max())


def build_control_region(grid: Grid, delta: float | None = None, epsilon: float | None = None,
                         include_origin: bool = True) -> ControlRegion:
    """Mask of nodes within ``3*delta`` of Gamma_+, plus ``B(0, 3*epsilon)`` if requested.

    A region covering every node is flagged with a warning rather than rejected.
    """
    domain = grid.domain
    delta = default_delta(grid) if delta is None else float(delta)
    epsilon = default_epsilon(grid) if epsilon is None else float(epsilon)
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if 3.0 * delta >= 0.5 * domain.lengths.min():
        raise ValueError(f"collar 3*delta = {3 * delta:g} must be below half the shortest side")
    if include_origin:
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if 3.0 * epsilon >= domain.dist_origin_to_boundary:
            raise ValueError(f"ball B(0, 3*epsilon) with epsilon = {epsilon:g} leaves the domain")

    scale = float(domain.lengths.max())
    mask = distance_to_gamma_plus(grid) <= 3.0 * delta + _DIST_TOL * scale
    if include_origin:
        mask |= grid.radius <= 3.0 * epsilon + _DIST_TOL * scale
    covers = bool(mask.all())
    if covers:
        warnings.warn("control region covers the whole domain; delta/epsilon too large", stacklevel=2)
    return ControlRegion(mask=mask, delta=delta, epsilon=epsilon,
                         contains_origin=bool(include_origin), covers_domain=covers)


def minimal_control_time(domain: Domain, epsilon: float) -> float:
    """T_0 = 2 max|x| / sqrt(epsilon**(alpha+1))."""
    return 2.0 * domain.radius / math.sqrt(epsilon ** (domain.alpha + 1.0))


def minimal_time(domain: Domain, epsilon: float, delta: float, margin: float = 1.01) -> float:
    """Smallest admissible horizon, inflated by ``margin``.

    Requires ``T >= T_0`` and ``epsilon**(alpha+1) T**2 > 4 max|x|**2 + 4 delta``.
    """
    if not 0.0 < epsilon < domain.dist_origin_to_boundary:
        raise ValueError(f"epsilon must lie in (0, dist(0, boundary)), got {epsilon}")
    if delta < 0.0:
        raise ValueError("delta must be non-negative")
    k = epsilon ** (domain.alpha + 1.0)
    t_sep = math.sqrt((4.0 * domain.radius**2 + 4.0 * delta) / k)
    return max(minimal_control_time(domain, epsilon), t_sep) * margin


def time_constraints_hold(domain: Domain, epsilon: float, delta: float, T: float) -> dict[str, bool]:
    k = epsilon ** (domain.alpha + 1.0)
    return {
        "T >= T0": T >= minimal_control_time(domain, epsilon),
        "eps^(alpha+1) T^2 > 4 max|x|^2 + 4 delta": k * T * T > 4.0 * domain.radius**2 + 4.0 * delta,
    }
