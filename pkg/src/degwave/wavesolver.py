"""Leapfrog solver for u_tt - div(|x|^alpha grad u) = source with Dirichlet data.

The spatial operator is applied matrix-free in flux form,

    (A u)_i = sum_axes [a_{i+1/2} (u_{i+1} - u_i) - a_{i-1/2} (u_i - u_{i-1})] / h^2,

with the coefficient sampled at face centres, so the node at the origin never
sees ``a(0) = 0``. Backward (terminal value) solves are forward solves in
reversed time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import Grid
from .spaces import EnergySnapshot, grid_inner


class InstabilityError(RuntimeError):
    """Raised when the discrete energy blows up (CFL violated or bad data)."""


@dataclass
class StatePair:
    """Displacement/velocity pair on the nodes of a grid."""

    u: np.ndarray
    v: np.ndarray

    def __add__(self, other):
        return StatePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return StatePair(self.u - other.u, self.v - other.v)

    def __mul__(self, c):
        return StatePair(c * self.u, c * self.v)

    __rmul__ = __mul__

    def __neg__(self):
        return StatePair(-self.u, -self.v)

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid.zeros(), grid.zeros())

    def copy(self):
        return StatePair(self.u.copy(), self.v.copy())


class DegenerateOperator:
    """Flux-form discretisation of ``div(|x|^alpha grad .)`` with Dirichlet rows."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.coeffs = grid.face_coefficients
        self._interior = [
            tuple(slice(None) if o == ax else slice(1, -1) for o in range(grid.dim))
            for ax in range(grid.dim)
        ]
        self._inner = (slice(1, -1),) * grid.dim
        self._plan = []
        for ax in range(grid.dim):
            lo = tuple(slice(None, -1) if o == ax else slice(None) for o in range(grid.dim))
            hi = tuple(slice(1, None) if o == ax else slice(None) for o in range(grid.dim))
            self._plan.append((lo, hi, self._interior[ax], grid.h[ax] ** 2))

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        acc = None
        for ax in range(self.grid.dim):
            lo, hi, sel, h2 = self._plan[ax]
            flux = self.coeffs[ax] * (u[hi] - u[lo])
            term = ((flux[hi] - flux[lo]) / h2)[sel]
            acc = term if acc is None else acc + term
        out[self._inner] = acc
        return out

    __call__ = apply

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix acting on interior unknowns in C order."""
        grid = self.grid
        ishape = tuple(n - 2 for n in grid.shape)
        size = int(np.prod(ishape))
        index = np.arange(size).reshape(ishape)
        rows, cols, vals = [], [], []
        diag = np.zeros(ishape)
        for ax in range(grid.dim):
            c = self.coeffs[ax][self._interior[ax]] / grid.h[ax] ** 2
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            left, right = c[tuple(lo)], c[tuple(hi)]
            diag -= left + right
            # couplings between interior neighbours along ax
            a = [slice(None)] * grid.dim
            b = [slice(None)] * grid.dim
            a[ax] = slice(None, -1)
            b[ax] = slice(1, None)
            w = right[tuple(a)]
            rows += [index[tuple(a)].ravel(), index[tuple(b)].ravel()]
            cols += [index[tuple(b)].ravel(), index[tuple(a)].ravel()]
            vals += [w.ravel(), w.ravel()]
        rows.append(index.ravel())
        cols.append(index.ravel())
        vals.append(diag.ravel())
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size, size))

    def spectral_bound(self) -> float:
        """Gershgorin bound on the spectral radius of ``-A``."""
        amax = max(float(c.max()) for c in self.coeffs)
        return 4.0 * amax * float(np.sum(1.0 / self.grid.h**2))


def assemble_operator(grid: Grid) -> DegenerateOperator:
    return DegenerateOperator(grid)


def cfl_timestep(grid: Grid, safety: float = 0.9) -> float:
    """``safety * h / sqrt(dim * max a)`` (for equal spacings).

    With ``safety <= 1`` this keeps ``dt**2 * rho(-A) <= 4``, the leapfrog
    stability limit.
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    amax = max(float(c.max()) for c in grid.face_coefficients)
    return safety / math.sqrt(amax * float(np.sum(1.0 / grid.h**2)))


def time_steps(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the effective (never larger) step reaching ``T`` exactly."""
    if T <= 0.0 or dt <= 0.0:
        raise ValueError("T and dt must be positive")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


@dataclass
class EnergyTrace:
    """Staggered leapfrog energy at half steps ``t_{n+1/2}``.

    ``kinetic = |v|^2 - dt^2/4 B(v, v)`` and ``potential = B(s, s) / 4`` with
    ``v = (u^{n+1} - u^n)/dt``, ``s = u^{n+1} + u^n`` and ``B(u, w) = -<Au, w>``.
    The sum is exactly conserved by the source-free scheme and both parts are
    non-negative under the CFL bound.
    """

    times: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.kinetic + self.potential

    def relative_drift(self) -> float:
        tot = self.total
        if tot[0] == 0.0:
            return float(np.max(np.abs(tot)))
        return float(np.max(np.abs(tot - tot[0])) / tot[0])

    def snapshots(self) -> list[EnergySnapshot]:
        return [EnergySnapshot(float(k), float(p), float(t))
                for t, k, p in zip(self.times, self.kinetic, self.potential)]

    def reversed(self, T: float) -> EnergyTrace:
        return EnergyTrace(T - self.times[::-1], self.kinetic[::-1].copy(), self.potential[::-1].copy())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "kinetic", "potential", "total"])
            for t, k, p in zip(self.times, self.kinetic, self.potential):
                writer.writerow([repr(float(t)), repr(float(k)), repr(float(p)), repr(float(k + p))])


@dataclass
class SpaceTimeField:
    """Stored leapfrog trajectory.

    ``snapshots[k]`` is the state at ``times[k]``; every ``stride``-th step is
    kept together with the final one. ``v_initial``/``v_final`` are the
    second-order velocities at ``t = 0`` and ``t = T``.
    """

    grid: Grid
    snapshots: np.ndarray
    times: np.ndarray
    dt: float
    steps: int
    stride: int
    v_initial: np.ndarray
    v_final: np.ndarray
    energy: EnergyTrace = field(repr=False)

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def initial(self) -> StatePair:
        return StatePair(self.snapshots[0], self.v_initial)

    @property
    def final(self) -> StatePair:
        return StatePair(self.snapshots[-1], self.v_final)

    def time_weights(self) -> np.ndarray:
        """Trapezoidal weights on the stored times."""
        t = self.times
        w = np.zeros(len(t))
        dtk = np.diff(t)
        w[:-1] += 0.5 * dtk
        w[1:] += 0.5 * dtk
        return w

    def space_time_integral(self, density: np.ndarray, mask=None) -> float:
        """Integral of a per-snapshot nodal density over Q (or omega x (0,T))."""
        weights = self.grid.node_weights if mask is None else self.grid.node_weights * mask
        per_time = np.tensordot(density, weights, axes=self.grid.dim)
        return float(np.dot(self.time_weights(), per_time))


def _source_at(source, n: int, t: float, grid: Grid):
    if source is None:
        return None
    if callable(source):
        f = np.asarray(source(t), dtype=float)
    else:
        f = source[n]
    return f


def _prepare_source(source, grid: Grid, steps: int, dt: float):
    if source is None or callable(source):
        return source
    if isinstance(source, SpaceTimeField):
        source = source.snapshots
    source = np.asarray(source, dtype=float)
    if source.shape != (steps + 1,) + grid.shape:
        raise ValueError(f"source array shape {source.shape} does not match "
                         f"{(steps + 1,) + grid.shape}")
    return source


def _boundary_clean(grid: Grid, f):
    if f is None:
        return None
    f = np.array(f, dtype=float)
    f[~grid.interior] = 0.0
    return f


def solve_forward(grid: Grid, init: StatePair, T: float, dt: float, source=None,
                  stride: int = 1, window: int = 100, growth: float = 10.0) -> SpaceTimeField:
    """Leapfrog trajectory from ``(u0, v0)`` at ``t = 0`` to ``t = T``.

    ``source`` is ``None``, a callable ``f(t) -> node array`` or an array with
    one node field per time level. The first step uses the Taylor correction
    ``u1 = u0 + dt v0 + dt^2/2 (A u0 + f0)``. The run aborts with
    :class:`InstabilityError` when the energy grows by more than ``growth``
    over ``window`` steps beyond what the source can inject.
    """
    steps, dt = time_steps(T, dt)
    source = _prepare_source(source, grid, steps, dt)
    A = DegenerateOperator(grid)
    h_vol = grid.cell_volume
    dt2 = dt * dt
    sp_axes = tuple(range(1, grid.dim + 1))
    bw = [grid.face_weights(ax) * A.coeffs[ax] / grid.h[ax] ** 2 for ax in range(grid.dim)]

    def bform(batch):
        # B(w, w) for a stack of fields
        return sum(np.sum(c * np.square(np.diff(batch, axis=ax + 1)), axis=sp_axes)
                   for ax, c in enumerate(bw))

    u0 = np.array(init.u, dtype=float)
    v0 = np.array(init.v, dtype=float)
    for arr in (u0, v0):
        edge = np.abs(arr[~grid.interior])
        if edge.size and edge.max() > 1e-12 * max(1.0, float(np.abs(arr).max())):
            raise ValueError("initial data must vanish on the boundary")
        arr[~grid.interior] = 0.0

    kept = list(range(0, steps + 1, stride))
    if kept[-1] != steps:
        kept.append(steps)
    store = np.empty((len(kept),) + grid.shape)
    slot = {n: k for k, n in enumerate(kept)}
    store[0] = u0

    kinetic = np.empty(steps)
    potential = np.empty(steps)
    monitor = np.empty(steps)
    forcing = np.zeros(steps + 1)
    amp_growth = math.sqrt(growth)

    def check_block(levels, first):
        """Energies of the intervals between consecutive ``levels``; first index ``first``."""
        vel = np.diff(levels, axis=0) / dt
        s = levels[1:] + levels[:-1]
        vv = h_vol * np.sum(vel * vel, axis=sp_axes)
        last = first + len(vel)
        kinetic[first:last] = vv - 0.25 * dt2 * bform(vel)
        potential[first:last] = 0.25 * bform(s)
        monitor[first:last] = vv + potential[first:last]
        if not np.all(np.isfinite(monitor[first:last])):
            raise InstabilityError(f"non-finite energy before step {last}")
        cum = np.concatenate(([0.0], np.cumsum(forcing)))
        for m in range(max(first, window), last):
            m0 = m - window
            injected = dt * (cum[m + 1] - cum[m0])
            if math.sqrt(monitor[m]) > amp_growth * (math.sqrt(monitor[m0]) + injected):
                raise InstabilityError(f"energy grew more than {growth:g}x over {window} steps "
                                       f"(step {m + 1}, t = {(m + 1) * dt:.4g}); check the CFL bound")

    f0 = _boundary_clean(grid, _source_at(source, 0, 0.0, grid))
    acc = A(u0) if f0 is None else A(u0) + f0
    if f0 is not None:
        forcing[0] = math.sqrt(h_vol * float(np.sum(f0 * f0)))
    u_prev = u0
    u_cur = u0 + dt * v0 + 0.5 * dt2 * acc
    if 1 in slot:
        store[slot[1]] = u_cur

    block = 50
    buf = np.empty((block + 1,) + grid.shape)
    buf[0], buf[1] = u_prev, u_cur
    j, first = 1, 0
    for n in range(1, steps):
        if j == block:
            check_block(buf, first)
            buf[0] = buf[block]
            j, first = 0, first + block
        fn = _boundary_clean(grid, _source_at(source, n, n * dt, grid))
        lap = A(u_cur)
        if fn is not None:
            lap += fn
            forcing[n] = math.sqrt(h_vol * float(np.sum(fn * fn)))
        u_next = 2.0 * u_cur - u_prev + dt2 * lap
        u_prev, u_cur = u_cur, u_next
        j += 1
        buf[j] = u_cur
        if n + 1 in slot:
            store[slot[n + 1]] = u_cur
    check_block(buf[: j + 1], first)

    fN = _boundary_clean(grid, _source_at(source, steps, steps * dt, grid))
    accN = A(u_cur) if fN is None else A(u_cur) + fN
    v_final = (u_cur - u_prev) / dt + 0.5 * dt * accN

    half_times = (np.arange(steps) + 0.5) * dt
    return SpaceTimeField(grid=grid, snapshots=store, times=np.array(kept, dtype=float) * dt,
                          dt=dt, steps=steps, stride=stride, v_initial=v0, v_final=v_final,
                          energy=EnergyTrace(half_times, kinetic, potential))


def solve_backward(grid: Grid, terminal: StatePair, T: float, dt: float, source=None,
                   stride: int = 1) -> SpaceTimeField:
    """Solve from terminal data ``(u(T), u_t(T))`` down to ``t = 0``.

    ``source`` is indexed in forward time. The result is returned in forward
    time order: ``snapshots[0]`` is ``u(0)`` and ``v_initial`` is ``u_t(0)``.
    """
    steps, dt_eff = time_steps(T, dt)
    if source is None:
        rev = None
    elif callable(source):
        def rev(tau, _f=source):
            return _f(T - tau)
    else:
        rev = _prepare_source(source, grid, steps, dt_eff)[::-1]
    back = solve_forward(grid, StatePair(terminal.u, -np.asarray(terminal.v, dtype=float)),
                         T, dt, source=rev, stride=stride)
    return SpaceTimeField(grid=grid, snapshots=back.snapshots[::-1].copy(),
                          times=T - back.times[::-1], dt=back.dt, steps=back.steps, stride=stride,
                          v_initial=-back.v_final, v_final=-back.v_initial,
                          energy=back.energy.reversed(T))


def energy_trace(traj: SpaceTimeField) -> EnergyTrace:
    return traj.energy


@dataclass
class BoundaryTrace:
    """Outward normal derivative on every box side, per stored time."""

    sides: list
    times: np.ndarray
    values: list
    l2_norm: float


def boundary_trace(traj: SpaceTimeField) -> BoundaryTrace:
    """One-sided second-order ``d u / d nu`` on each side and its L2(Sigma) norm."""
    grid = traj.grid
    u = traj.snapshots
    wt = traj.time_weights()
    sides, values = [], []
    total = 0.0
    for ax in range(grid.dim):
        h = grid.h[ax]
        for sign in (-1, 1):
            idx = (lambda k, _ax=ax: (slice(None),) + tuple(k if o == _ax else slice(None)
                                                            for o in range(grid.dim)))
            if sign > 0:
                d = (3 * u[idx(-1)] - 4 * u[idx(-2)] + u[idx(-3)]) / (2 * h)
            else:
                d = (3 * u[idx(0)] - 4 * u[idx(1)] + u[idx(2)]) / (2 * h)
            # trapezoid along the side (a single point in 1D)
            ws = np.ones(d.shape[1:])
            for k, oax in enumerate(o for o in range(grid.dim) if o != ax):
                w1 = np.full(grid.shape[oax], grid.h[oax])
                w1[[0, -1]] *= 0.5
                ws = ws * w1.reshape([-1 if j == k else 1 for j in range(ws.ndim)])
            total += float(np.dot(wt, np.tensordot(d * d, ws, axes=ws.ndim)))
            sides.append((ax, sign))
            values.append(d)
    return BoundaryTrace(sides=sides, times=traj.times.copy(), values=values, l2_norm=math.sqrt(total))


def write_trajectory(traj: SpaceTimeField, path):
    """CSV dump: ``#`` header lines with grid spec, then ``t, u(node_0), ...`` rows."""
    grid = traj.grid
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={grid.dim}\n")
        fh.write("# bounds=" + ";".join(f"{a!r},{b!r}" for a, b in grid.domain.bounds) + "\n")
        fh.write(f"# alpha={grid.alpha!r}\n")
        fh.write("# cells=" + ",".join(str(c) for c in grid.cells) + "\n")
        fh.write(f"# dt={traj.dt!r}\n# stride={traj.stride}\n# steps={traj.steps}\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"u{k}" for k in range(int(np.prod(grid.shape)))])
        for t, snap in zip(traj.times, traj.snapshots):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in snap.ravel()])


def read_trajectory(path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_trajectory`: ``(header, times, snapshots)``."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                header[key] = val
            else:
                rows.append(line)
    data = list(csv.reader(rows))[1:]
    cells = tuple(int(c) for c in header["cells"].split(","))
    shape = tuple(c + 1 for c in cells)
    times = np.array([float(r[0]) for r in data])
    snaps = np.array([[float(x) for x in r[1:]] for r in data]).reshape((len(data),) + shape)
    return header, times, snaps


def state_inner(grid: Grid, p: StatePair, q: StatePair) -> float:
    return grid_inner(grid, p.u, q.u) + grid_inner(grid, p.v, q.v)
