import math

import numpy as np
import pytest

from conftest import interval, rel
from degwave import carleman, control, spaces
from degwave.carleman import CarlemanParams
from degwave.geometry import Domain, build_control_region
from degwave.wavesolver import StatePair, cfl_timestep, solve_forward


@pytest.fixture(scope="module")
def setup(bench):
    beta = carleman.default_beta(bench.grid.domain, 0.1, 0.1, bench.T)
    base = CarlemanParams(s=10, gamma=2, beta=beta, t0=bench.T / 2, epsilon=0.1, delta=0.1)
    data = control.band_limited_data(bench.grid, np.random.default_rng(42))
    traj = control.adjoint_solve(bench.grid, data, bench.T, bench.dt)
    return bench, base, traj


# -- weight functions ------------------------------------------------------------

def test_psi_examples():
    p = CarlemanParams(s=1, gamma=1, beta=0.1, t0=2.0, beta0=0.7)
    assert carleman.psi(np.zeros(2), 2.0, p) == pytest.approx(0.7)
    q = p.replace(beta0=0.0)
    assert carleman.psi(np.array([0.6, 0.8]), 3.0, q) == pytest.approx(0.9)


def test_phi_examples():
    p = CarlemanParams(s=1, gamma=3, beta=0.1, t0=1.0)
    assert carleman.phi(np.zeros(1), 1.0, p) == 1.0
    # psi = 0 on the curve |x|^2 = beta (t - t0)^2
    x = math.sqrt(0.1) * 2.0
    assert carleman.phi(np.array([x]), 3.0, p) == pytest.approx(1.0)


def test_derivative_identities_by_finite_differences():
    rng = np.random.default_rng(0)
    p = CarlemanParams(s=1, gamma=1.7, beta=0.05, t0=1.2, beta0=0.3)
    e = 1e-6
    for _ in range(20):
        x = rng.uniform(-1, 1, 2)
        t = rng.uniform(0, 2.4)
        fd = np.array([(carleman.phi(x + e * d, t, p) - carleman.phi(x - e * d, t, p)) / (2 * e)
                       for d in np.eye(2)])
        g = carleman.grad_phi(x, t, p)
        assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g) + 1e-12
        ft = (carleman.phi(x, t + e, p) - carleman.phi(x, t - e, p)) / (2 * e)
        pt = carleman.phi_t(x, t, p)
        assert abs(ft - pt) <= 1e-6 * abs(pt) + 1e-10


def test_pointwise_bounds_on_grid(setup):
    bench, base, _ = setup
    pts = bench.grid.points
    for t in np.linspace(0, bench.T, 7):
        ph = carleman.phi(pts, t, base)
        assert np.all(ph > 0)
        assert np.all(carleman.psi(pts, t, base) <= bench.grid.domain.radius**2 + base.beta0)


def test_psi_negative_at_initial_time(setup):
    bench, base, _ = setup
    assert base.beta * bench.T**2 > 4 * bench.grid.domain.radius**2 + 4 * base.delta
    # with t0 = T/2 the condition above gives psi(x, 0) < -delta on every node
    assert np.all(carleman.psi(bench.grid.points, 0.0, base) < -base.delta)


# -- parameter window ------------------------------------------------------------

def test_beta_window_and_binding():
    dom = Domain(1, ((-1, 1),), 0.5)
    win = carleman.beta_window(dom, 0.1, 0.1)
    ups = {k: v for k, (kind, v) in win.items()}
    assert ups["beta < (2-alpha)/5 eps^alpha"] == pytest.approx(1.5 / 5 * 0.1**0.5)
    assert ups["beta < eps^alpha/5"] == pytest.approx(0.1**0.5 / 5)
    assert ups["beta < eps^(alpha+1)"] == pytest.approx(0.1**1.5)
    assert carleman.binding_constraint(dom, 0.1, 0.1) == "beta < eps^(alpha+1)"
    # for larger alpha the (2-alpha)/5 bound binds first
    assert carleman.binding_constraint(Domain(1, ((-1, 1),), 1.5), 0.9, 0.1) == "beta < (2-alpha)/5 eps^alpha"


def test_default_beta_is_admissible(setup):
    bench, base, _ = setup
    assert carleman.check_params(base, bench.grid.domain, bench.T) == []


def test_default_beta_requires_long_horizon():
    dom = Domain(1, ((-1, 1),), 0.5)
    with pytest.raises(ValueError):
        carleman.default_beta(dom, 0.1, 0.1, T=2.0)


def test_check_params_names_violations(setup):
    bench, base, _ = setup
    bad = carleman.check_params(base.replace(beta=0.1**0.5, s=0.5, t0=-1.0), bench.grid.domain, bench.T)
    assert "beta < (2-alpha)/5 eps^alpha" in bad and "beta < eps^alpha/5" in bad
    assert "s >= 1" in bad and "t0 in (0, T)" in bad


# -- integrals -------------------------------------------------------------------

def test_zero_solution_is_degenerate(setup):
    bench, base, _ = setup
    traj = solve_forward(bench.grid, StatePair.zeros(bench.grid), 1.0, bench.dt)
    sides = carleman.carleman_sides(traj, bench.omega, base)
    assert sides.degenerate and math.isnan(sides.ratio)
    assert sides.lhs == 0.0 and sides.rhs_control == 0.0 and sides.rhs_source == 0.0


def test_support_inside_omega_gives_ratio_one():
    g = interval(0.5, 200)
    om = build_control_region(g, 0.1, 0.1, include_origin=True)
    u0 = spaces.bump(g, (0.0,), 0.05)
    dt = cfl_timestep(g)
    T = 0.2
    traj = solve_forward(g, StatePair(u0, g.zeros()), T, dt)
    # the explicit stencil moves support by one node per step
    assert not np.any(traj.snapshots[:, ~om.mask])
    params = CarlemanParams(s=10, gamma=2, beta=0.01, t0=T / 2)
    sides = carleman.carleman_sides(traj, om, params)
    assert sides.log_lhs <= sides.log_rhs_control + 1e-12
    assert sides.ratio <= 1 + 1e-12


def test_degree_two_homogeneity(setup):
    bench, base, traj = setup
    a = carleman.carleman_sides(traj, bench.omega, base)
    scaled = solve_forward(bench.grid, traj.initial * 3.0, bench.T, bench.dt)
    b = carleman.carleman_sides(scaled, bench.omega, base)
    assert b.log_lhs - a.log_lhs == pytest.approx(2 * math.log(3.0), abs=1e-10)
    assert b.log_rhs_control - a.log_rhs_control == pytest.approx(2 * math.log(3.0), abs=1e-10)
    assert rel(b.ratio, a.ratio) < 1e-10


def test_source_term_enters_rhs(setup):
    bench, base, traj = setup
    f = np.ones_like(traj.snapshots)
    f[:, ~bench.grid.interior] = 0.0
    sides = carleman.carleman_sides(traj, bench.omega, base, source=f)
    assert np.isfinite(sides.log_rhs_source)
    plain = carleman.carleman_sides(traj, bench.omega, base)
    assert sides.log_rhs > plain.log_rhs and sides.ratio < plain.ratio


def test_log_space_survives_large_s(setup):
    bench, base, traj = setup
    sides = carleman.carleman_sides(traj, bench.omega, base.replace(s=400.0, gamma=3.0))
    # e^(2 s phi) is far beyond double range here; only the log values are finite
    assert sides.log_lhs > 710 and sides.lhs == math.inf
    assert np.isfinite(sides.ratio) and sides.ratio >= 1.0


def test_carleman_sides_needs_three_levels():
    g = interval(0.5, 50)
    traj = solve_forward(g, StatePair.zeros(g), 0.01, 0.01)
    with pytest.raises(ValueError):
        carleman.carleman_sides(traj, build_control_region(g, 0.1, 0.1), CarlemanParams(1, 1, 0.01, 0.005))


# -- scans -----------------------------------------------------------------------

def test_scan_single_pair_matches_sides(setup):
    bench, base, traj = setup
    rows = carleman.carleman_scan(traj, bench.omega, base, [20], [2], T=bench.T)
    direct = carleman.carleman_sides(traj, bench.omega, base.replace(s=20.0, gamma=2.0))
    assert len(rows) == 1 and rows[0].sides == direct


def test_scan_three_by_three(setup):
    bench, base, traj = setup
    rows = carleman.carleman_scan(traj, bench.omega, base, [10, 20, 40], [1, 2, 3], T=bench.T)
    assert len(rows) == 9
    assert [(r.s, r.gamma) for r in rows] == [(s, g) for s in (10.0, 20.0, 40.0) for g in (1.0, 2.0, 3.0)]


def test_scan_skips_invalid_pairs(setup, caplog):
    bench, base, traj = setup
    with caplog.at_level("WARNING"):
        rows = carleman.carleman_scan(traj, bench.omega, base, [0.5, 10], [2], T=bench.T)
    assert [r.s for r in rows] == [10.0]
    assert "s >= 1" in caplog.text


def test_scan_rejects_empty_lists(setup):
    bench, base, traj = setup
    with pytest.raises(ValueError):
        carleman.carleman_scan(traj, bench.omega, base, [], [2])


def test_trend_decreases_from_small_s(setup):
    bench, base, traj = setup
    rows = carleman.carleman_scan(traj, bench.omega, base, [1, 1.5, 2, 3, 4, 6], [1], T=bench.T)
    ratios = [r.ratio for r in rows]
    assert ratios[0] > 1.1 and all(a >= b for a, b in zip(ratios, ratios[1:]))
    assert carleman.trend_nonincreasing(rows)


def test_calibrate_returns_stable_pair(setup):
    bench, base, traj = setup
    s, g = carleman.calibrate(traj, bench.omega, base, s_start=1.0, gamma=1.0, rtol=1e-3)
    r1 = carleman.carleman_sides(traj, bench.omega, base.replace(s=s, gamma=g)).ratio
    r2 = carleman.carleman_sides(traj, bench.omega, base.replace(s=2 * s, gamma=g)).ratio
    assert s > 1.0 and abs(r2 - r1) <= 1e-3 * r1


def test_scan_csv_header(setup, tmp_path):
    bench, base, traj = setup
    rows = carleman.carleman_scan(traj, bench.omega, base, [10, 20], [2], T=bench.T)
    path = tmp_path / "scan.csv"
    carleman.write_scan_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,gamma,log_lhs,log_rhs_control,log_rhs_source,ratio"
    assert len(lines) == 3 and float(lines[1].split(",")[0]) == 10.0
