"""HUM control synthesis and observability diagnostics.

Discrete conventions (frozen; they make the duality identity hold to round-off):

* the adjoint ``z`` is the leapfrog solution from ``q = (z0, z1)`` with no source;
* the control is ``f = chi_omega z`` at every time level;
* ``u`` solves the controlled equation backward from ``(0, 0)`` at ``t = T``;
* ``J q = (u_t(0), -u(0))`` and
  ``pairing(p, q) = -(<p_0, q_0> + <p_1, q_1>)``, i.e. ``int z_t(0) u(0) - z(0) u_t(0)``
  written in terms of ``p = J q``. Then ``pairing(J q, q) = iint_omega z^2``
  with nodal quadrature in space and the trapezoid rule in time.

The Gramian ``G q = -J q = (-u_t(0), u(0))`` is symmetric positive
semidefinite for the lumped inner product, and a control that drives
``(u0, u1)`` to rest is ``chi_omega z`` with ``G q = (-u1, u0)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ControlRegion, Grid
from .spaces import energy
from .wavesolver import SpaceTimeField, StatePair, solve_backward, solve_forward, state_inner

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """The iteration hit ``max_iter`` with the residual above tolerance."""

    def __init__(self, message, history, solution=None):
        super().__init__(message)
        self.history = history
        self.solution = solution


@dataclass
class HUMProblem:
    grid: Grid
    initial: StatePair
    target: StatePair
    omega: ControlRegion
    T: float
    dt: float
    tol: float = 1e-8
    max_iter: int = 500


@dataclass
class HUMSolution:
    adjoint_datum: StatePair
    control: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    residual_history: np.ndarray
    final_state_error: float
    iterations: int
    final_state: StatePair = field(repr=False)
    converged: bool = True


def adjoint_solve(grid: Grid, q: StatePair, T: float, dt: float) -> SpaceTimeField:
    return solve_forward(grid, q, T, dt, stride=1)


def observed_energy(traj: SpaceTimeField, omega: ControlRegion) -> float:
    """``iint_{omega x (0,T)} z^2``."""
    z = traj.snapshots
    return traj.space_time_integral(z * z, mask=omega.mask)


def apply_J(grid: Grid, q: StatePair, omega: ControlRegion, T: float, dt: float) -> StatePair:
    """Map adjoint data to ``(u_t(0), -u(0))`` of the backward controlled solve."""
    z = adjoint_solve(grid, q, T, dt)
    f = z.snapshots * omega.mask
    u = solve_backward(grid, StatePair.zeros(grid), T, dt, source=f)
    return StatePair(u.v_initial, -u.snapshots[0])


def pairing(grid: Grid, p: StatePair, q: StatePair) -> float:
    return -state_inner(grid, p, q)


def gramian(grid: Grid, q: StatePair, omega: ControlRegion, T: float, dt: float) -> StatePair:
    return -apply_J(grid, q, omega, T, dt)


def energy_norm(grid: Grid, state: StatePair) -> float:
    return energy(grid, state.u, state.v).norm


def state_error(grid: Grid, reached: StatePair, target: StatePair, initial: StatePair) -> float:
    """Energy-norm miss relative to the size of the data."""
    scale = energy_norm(grid, initial) + energy_norm(grid, target)
    miss = energy_norm(grid, reached - target)
    return miss / scale if scale > 0.0 else miss


def _conjugate_residual(apply, b: StatePair, inner, tol: float, max_iter: int):
    """Conjugate residual iteration for a symmetric positive (semi)definite map.

    Minimises the residual norm over the Krylov space, so the residual history
    is monotone. One application of ``apply`` per iteration.
    """
    bnorm = math.sqrt(inner(b, b))
    x = b * 0.0
    r = b.copy()
    p = r.copy()
    ar = apply(r)
    ap = ar.copy()
    rar = inner(r, ar)
    history = [1.0]
    for _ in range(max_iter):
        apap = inner(ap, ap)
        if apap <= 0.0 or rar <= 0.0:
            break
        step = rar / apap
        x = x + step * p
        r = r - step * ap
        history.append(math.sqrt(max(inner(r, r), 0.0)) / bnorm)
        if history[-1] <= tol:
            break
        ar = apply(r)
        rar_new = inner(r, ar)
        beta = rar_new / rar
        rar = rar_new
        p = r + beta * p
        ap = ar + beta * ap
    return x, np.array(history)


def _null_control(grid: Grid, data: StatePair, omega: ControlRegion, T: float, dt: float,
                  tol: float, max_iter: int, scale: float):
    """Adjoint datum ``q`` whose control steers ``data`` to rest, with its history."""
    b = StatePair(-np.asarray(data.v, dtype=float), np.asarray(data.u, dtype=float))
    inner = lambda p, q: state_inner(grid, p, q)  # noqa: E731
    bnorm = math.sqrt(inner(b, b))
    if bnorm <= 1e-12 * scale:
        return StatePair.zeros(grid), np.array([0.0]), True
    q, history = _conjugate_residual(lambda q: gramian(grid, q, omega, T, dt), b, inner, tol, max_iter)
    return q, history, bool(history[-1] <= tol)


def _finish(problem: HUMProblem, q: StatePair, history, converged: bool) -> HUMSolution:
    grid = problem.grid
    z = adjoint_solve(grid, q, problem.T, problem.dt)
    control = z.snapshots * problem.omega.mask
    sol = resimulate(problem, control)
    return HUMSolution(adjoint_datum=q, control=control, times=z.times,
                       residual_history=np.asarray(history), final_state_error=sol[1],
                       iterations=len(history) - 1, final_state=sol[0], converged=converged)


def resimulate(problem: HUMProblem, control: np.ndarray) -> tuple[StatePair, float]:
    """Run the controlled forward problem and measure the terminal miss."""
    traj = solve_forward(problem.grid, problem.initial, problem.T, problem.dt, source=control)
    reached = traj.final
    return reached, state_error(problem.grid, reached, problem.target, problem.initial)


def _data_scale(grid: Grid, *states: StatePair) -> float:
    return sum(math.sqrt(state_inner(grid, s, s)) for s in states)


def _check(problem: HUMProblem):
    if problem.tol <= 0.0:
        raise ValueError("tol must be positive")
    if problem.max_iter < 1:
        raise ValueError("max_iter must be >= 1")


def hum_solve(problem: HUMProblem) -> HUMSolution:
    """Control ``f = chi_omega z`` steering ``initial`` to ``target`` at time ``T``.

    Nonzero targets go through :func:`steer_general`. Raises
    :class:`NonConvergenceError` when ``max_iter`` is exhausted.
    """
    _check(problem)
    if np.any(problem.target.u) or np.any(problem.target.v):
        return steer_general(problem)
    grid = problem.grid
    q, history, ok = _null_control(grid, problem.initial, problem.omega, problem.T, problem.dt,
                                   problem.tol, problem.max_iter, _data_scale(grid, problem.initial))
    sol = _finish(problem, q, history, ok)
    if not ok:
        raise NonConvergenceError(f"residual {history[-1]:.3e} above tol {problem.tol:g} after "
                                  f"{problem.max_iter} iterations", history, sol)
    log.info("HUM converged in %d iterations, final state error %.3e", sol.iterations,
             sol.final_state_error)
    return sol


def pull_back(grid: Grid, target: StatePair, T: float, dt: float) -> StatePair:
    """State at ``t = 0`` whose free evolution reaches ``target`` at ``t = T``."""
    traj = solve_backward(grid, target, T, dt)
    return traj.initial


def steer_general(problem: HUMProblem) -> HUMSolution:
    """Reduce exact steering to null control by linearity.

    The free trajectory through the target is pulled back to ``t = 0``; the
    difference from the initial state is driven to rest and the same control,
    applied to the original data, lands on the target.
    """
    _check(problem)
    grid = problem.grid
    free0 = pull_back(grid, problem.target, problem.T, problem.dt)
    diff = problem.initial - free0
    scale = _data_scale(grid, problem.initial, problem.target)
    q, history, ok = _null_control(grid, diff, problem.omega, problem.T, problem.dt,
                                   problem.tol, problem.max_iter, scale)
    sol = _finish(problem, q, history, ok)
    if not ok:
        raise NonConvergenceError(f"residual {history[-1]:.3e} above tol {problem.tol:g} after "
                                  f"{problem.max_iter} iterations", history, sol)
    return sol


# -- observability diagnostics -------------------------------------------------

def dirichlet_modes(grid: Grid, count: int = 10) -> list[np.ndarray]:
    """Lowest ``count`` Dirichlet eigenfunctions of the constant-coefficient operator.

    Products of ``sin(k pi (x - a) / L)``; these are exact eigenvectors of the
    discrete Laplacian too.
    """
    lengths = grid.domain.lengths
    kmax = count + 1
    ks = np.array(np.meshgrid(*[np.arange(1, kmax + 1)] * grid.dim, indexing="ij")).reshape(grid.dim, -1).T
    lam = np.sum((ks / lengths) ** 2, axis=1)
    order = np.lexsort((*ks.T[::-1], lam))
    modes = []
    for idx in order[:count]:
        m = np.ones(grid.shape)
        for ax, k in enumerate(ks[idx]):
            a = grid.domain.bounds[ax][0]
            s = np.sin(k * np.pi * (grid.axes[ax] - a) / lengths[ax])
            m = m * s.reshape([-1 if j == ax else 1 for j in range(grid.dim)])
        m[~grid.interior] = 0.0
        modes.append(m)
    return modes


def band_limited_data(grid: Grid, rng: np.random.Generator, count: int = 10) -> StatePair:
    modes = dirichlet_modes(grid, count)
    cu = rng.standard_normal(count)
    cv = rng.standard_normal(count)
    u = sum(c * m for c, m in zip(cu, modes))
    v = sum(c * m for c, m in zip(cv, modes))
    return StatePair(u, v)


@dataclass
class ObservabilityReport:
    samples: int
    ratios: np.ndarray
    initial_energy: np.ndarray
    observed: np.ndarray
    T_used: float

    @property
    def min_ratio(self) -> float:
        return float(self.ratios.min())

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())


def observability_ratio(grid: Grid, data: StatePair, omega: ControlRegion, T: float, dt: float):
    """``(E(0), iint_omega z^2, E(0) / iint_omega z^2)`` for one adjoint run."""
    e0 = energy(grid, data.u, data.v).total
    obs = observed_energy(adjoint_solve(grid, data, T, dt), omega)
    return e0, obs, (e0 / obs if obs > 0.0 else math.inf)


def observability_sample(grid: Grid, omega: ControlRegion, T: float, dt: float,
                         n_samples: int = 100, rng_seed: int = 0) -> ObservabilityReport:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    e0s, obs, ratios = [], [], []
    for _ in range(n_samples):
        e0, o, r = observability_ratio(grid, band_limited_data(grid, rng), omega, T, dt)
        e0s.append(e0)
        obs.append(o)
        ratios.append(r)
    return ObservabilityReport(samples=n_samples, ratios=np.array(ratios), initial_energy=np.array(e0s),
                               observed=np.array(obs), T_used=float(T))


@dataclass
class ContinuationReport:
    samples: int
    flags: int
    flagged: list
    min_observed_fraction: float
    threshold: float


def unique_continuation_probe(grid: Grid, omega: ControlRegion, T: float, dt: float,
                              threshold: float = 1.0, n_samples: int = 100,
                              rng_seed: int = 42, tiny: float = 1e-10) -> ContinuationReport:
    """Flag samples with ``iint_omega z^2 <= threshold * tiny * E(0)``.

    Any flag would mean an adjoint solution nearly invisible from omega.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    rep = observability_sample(grid, omega, T, dt, n_samples, rng_seed)
    frac = rep.observed / rep.initial_energy
    flagged = [int(i) for i in np.nonzero(rep.observed <= threshold * tiny * rep.initial_energy)[0]]
    return ContinuationReport(samples=n_samples, flags=len(flagged), flagged=flagged,
                              min_observed_fraction=float(frac.min()), threshold=threshold)
