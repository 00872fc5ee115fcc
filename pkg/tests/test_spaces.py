import math

import numpy as np
import pytest
from scipy import integrate

from conftest import interval, rel, square
from degwave import spaces


def test_h1_norm_zero():
    g = interval(0.5, 50)
    assert spaces.weighted_h1_norm(g, g.zeros()) == 0.0


def test_h1_norm_sine_converges():
    errs = []
    for n in (100, 200, 400):
        g = interval(0.0, n)
        u = np.sin(np.pi * g.axes[0])
        errs.append(abs(spaces.weighted_h1_norm(g, u) - (math.pi + 1)))
    assert errs[-1] < 1e-4
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_h1_norm_tent_alpha_one():
    # oracle: adaptive quadrature of the exact integrals
    grad = integrate.quad(lambda x: abs(x), -1, 1, points=[0])[0]
    l2 = integrate.quad(lambda x: (1 - abs(x)) ** 2, -1, 1, points=[0])[0]
    exact = math.sqrt(grad) + math.sqrt(l2)
    assert exact == pytest.approx(1 + math.sqrt(2 / 3), rel=1e-12)
    prev = None
    for n in (100, 200, 400):
        g = interval(1.0, n)
        err = abs(spaces.weighted_h1_norm(g, 1 - np.abs(g.axes[0])) - exact)
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 1e-5


def test_h1_norm_triangle_and_homogeneity(rng):
    g = square(0.7, 20)
    for _ in range(10):
        u, w = rng.standard_normal((2,) + g.shape)
        c = rng.uniform(-5, 5)
        nu, nw = spaces.weighted_h1_norm(g, u), spaces.weighted_h1_norm(g, w)
        assert spaces.weighted_h1_norm(g, u + w) <= (nu + nw) * (1 + 1e-12)
        assert rel(spaces.weighted_h1_norm(g, c * u), abs(c) * nu) < 1e-12


def test_alpha_zero_norm_is_bitwise_unweighted(rng):
    for g in (interval(0.0, 64), square(0.0, 24)):
        u = rng.standard_normal(g.shape)
        assert spaces.weighted_h1_norm(g, u) == spaces.h1_norm(g, u)


def test_energy_examples():
    g = interval(0.5, 100)
    e = spaces.energy(g, g.zeros(), g.zeros())
    assert (e.kinetic, e.potential, e.total) == (0.0, 0.0, 0.0)

    errs = []
    for n in (100, 200, 400):
        g = interval(0.5, n)
        ut = np.ones(g.shape)
        ut[~g.interior] = 0.0
        errs.append(abs(spaces.energy(g, g.zeros(), ut).kinetic - 2.0))
    assert errs[2] < errs[1] < errs[0] and errs[2] <= 2 * (2 / 400) + 1e-12

    g = interval(0.0, 400)
    e = spaces.energy(g, np.sin(np.pi * g.axes[0]), g.zeros(), t=1.5)
    assert e.potential == pytest.approx(math.pi**2, rel=1e-4)
    assert e.total == e.kinetic + e.potential and e.time == 1.5


def test_energy_nonnegative(rng):
    g = square(1.3, 16)
    for _ in range(10):
        u, v = rng.standard_normal((2,) + g.shape)
        e = spaces.energy(g, u, v)
        assert e.kinetic >= 0 and e.potential >= 0 and e.total > 0


# -- Hardy -----------------------------------------------------------------------

def test_hardy_prefactor_exact():
    g = square(1.0, 32)
    terms = spaces.hardy_terms(g, spaces.bump(g, (0, 0), 0.9))
    assert terms.prefactor == 1.0
    assert terms.excluded_cells == 4
    assert terms.excluded_mass_bound > 0


def test_hardy_radial_bump_finite():
    vals = []
    for n in (64, 128, 256):
        g = square(1.0, n)
        vals.append(spaces.hardy_ratio(g, spaces.bump(g, (0, 0), 1.0)))
    assert all(np.isfinite(vals)) and all(0 < v < 2 for v in vals)
    # truncation error shrinks with h
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_hardy_homogeneous(rng):
    g = square(1.0, 32)
    u = spaces.bump(g, (0.1, -0.2), 0.5)
    r = spaces.hardy_ratio(g, u)
    for c in (-3.0, 1e-4, 250.0):
        assert rel(spaces.hardy_ratio(g, c * u), r) < 1e-12


def test_hardy_ratio_below_two_for_suite():
    # |x|^(alpha/2) grad u . x/|x| integrated by parts against u|x|^(alpha-2) x
    # gives (N-2+alpha) ||w u||^2 <= 2 ||w u|| ||grad||, so the ratio is <= 2
    g = square(1.0, 64)
    assert all(spaces.hardy_ratio(g, u) <= 2.0 for u in spaces.hardy_suite(g))


def test_hardy_suite_bound_stable_under_refinement():
    coarse = max(spaces.hardy_ratio(square(1.0, 128), u) for u in spaces.hardy_suite(square(1.0, 128)))
    fine = max(spaces.hardy_ratio(square(1.0, 256), u) for u in spaces.hardy_suite(square(1.0, 256)))
    assert rel(coarse, fine) <= 0.05


def test_hardy_suite_has_twenty_dirichlet_fields():
    g = square(1.0, 32)
    suite = spaces.hardy_suite(g)
    assert len(suite) == 20
    assert all(np.any(u) and not np.any(u[~g.interior]) for u in suite)


def test_hardy_errors():
    with pytest.raises(ValueError):
        spaces.hardy_ratio(interval(1.0, 64), np.ones(65))
    g = square(1.0, 16)
    with pytest.raises(ValueError):
        spaces.hardy_ratio(g, g.zeros())
    with pytest.raises(ValueError):
        spaces.hardy_ratio(g, np.ones(g.shape))


# -- L^q embedding ---------------------------------------------------------------

def test_critical_exponent():
    assert spaces.critical_exponent(2, 1.0) == 4.0


def test_lq_scale_invariant():
    g = square(1.0, 32)
    u = spaces.bump(g, (0.2, 0.1), 0.5)
    r = spaces.lq_embedding_ratio(g, u, 3.0)
    assert rel(spaces.lq_embedding_ratio(g, -7.5 * u, 3.0), r) < 1e-12


def test_lq_rejects_supercritical():
    g = square(1.0, 32)
    with pytest.raises(ValueError):
        spaces.lq_embedding_ratio(g, spaces.bump(g, (0, 0), 0.5), 4.5)


def test_lq_bounded_on_shrinking_bumps():
    g = square(1.0, 128)
    radii = (0.8, 0.4, 0.2, 0.1, 0.05)
    fields = [spaces.bump(g, (0, 0), r) for r in radii]
    ratios = [spaces.lq_embedding_ratio(g, u, 4.0) for u in fields]
    l4 = [spaces.lq_norm(g, u, 4.0) for u in fields]
    # oracle for the largest bump: polar-coordinate quadrature of the L^4 norm
    exact = (2 * math.pi * integrate.quad(lambda r: (1 - r * r / 0.64) ** 8 * r, 0, 0.8)[0]) ** 0.25
    assert rel(l4[0], exact) < 1e-3
    h1 = [spaces.weighted_h1_norm(g, u) for u in fields]
    # at the critical exponent both norms scale like r^(1/2): a factor 4 over the family
    assert max(l4) / min(l4) > 4 and max(h1) / min(h1) > 4
    assert max(ratios) < 0.5 and min(ratios) > 0.25
