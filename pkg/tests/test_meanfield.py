import math

import numpy as np
import pytest
from scipy import optimize

from curvdisk import oracle
from curvdisk.meanfield import (MT_SHARP_CONSTANT, DegenerateMass, Linearization, ProblemData,
                                apply_T, c_of, center_of_mass, com_riesz, dc_of, gauss_bonnet_residual,
                                h1_inner, J_grad, J_value, kazdan_warner_residuals, mass_bounds_check,
                                moser_trudinger_gap, reduced_T, residual_report)

Kq = lambda x1, x2, r, t: 1 - 0.2 * r**2  # noqa: E731


def smooth_field(grid, rng, scale=1.0, degree=4):
    u = np.zeros(grid.shape)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            u += scale * rng.standard_normal() / (1 + i + j) * grid.X1**i * grid.X2**j
    return grid.zero_mean(u)


@pytest.mark.parametrize("K, h, expected", [
    (1.0, 0.0, math.log(2)),
    (0.0, 1.0, 0.0),
    (1.0, 1.0, 2 * math.log(math.sqrt(3) - 1)),
])
def test_c_of_constants(grid, K, h, expected):
    d = ProblemData.from_functions(grid, K, h)
    assert c_of(np.zeros(grid.shape), d) == pytest.approx(expected, abs=1e-13)


def test_c_of_against_bisection(grid, rng):
    d = ProblemData.from_functions(grid, Kq, lambda t: 0.5 + 0.2 * np.sin(t))
    u = smooth_field(grid, rng)
    A = grid.integrate(d.K * np.exp(u))
    B = grid.integrate_boundary(d.h * np.exp(u[-1] / 2))
    ref = optimize.brentq(lambda c: math.exp(c) * A + math.exp(c / 2) * B - 2 * math.pi, -30, 30,
                          xtol=1e-15)
    assert c_of(u, d) == pytest.approx(ref, abs=1e-12)


def test_c_of_gauge(grid, rng):
    d = ProblemData.from_functions(grid, Kq, lambda t: 1 + 0.1 * np.cos(t))
    u = smooth_field(grid, rng)
    assert c_of(u + 0.7, d) == pytest.approx(c_of(u, d) - 0.7, abs=1e-13)
    assert np.abs(apply_T(u + 0.7, d) - apply_T(u, d)).max() < 1e-12


def test_c_of_degenerate(grid):
    d = ProblemData.from_functions(grid, 0.0, 0.0)
    with pytest.raises(DegenerateMass):
        c_of(np.zeros(grid.shape), d)


def test_T_fixed_point_and_constant_solution(grid):
    d = ProblemData.from_functions(grid, 1.0, 0.0)
    p0 = oracle.phi_a((0, 0), grid)
    assert np.abs(apply_T(p0, d) - p0).max() <= 1e-7
    assert np.abs(reduced_T(p0, d) - p0).max() <= 1e-7
    d2 = ProblemData.from_functions(grid, 0.0, 1.0)
    assert np.abs(apply_T(np.zeros(grid.shape), d2)).max() <= 1e-9


def test_T_is_zero_mean(grid, rng):
    d = ProblemData.from_functions(grid, 1.0, 0.0)
    assert abs(grid.mean(apply_T(smooth_field(grid, rng), d))) < 1e-12


def test_J_at_zero(grid):
    d = ProblemData.from_functions(grid, 1.0, 0.0)
    assert J_value(np.zeros(grid.shape), d).J == pytest.approx(-4 * math.pi * math.log(math.pi),
                                                               abs=1e-12)


def test_J_invariant_under_constants(grid, rng):
    d = ProblemData.from_functions(grid, Kq, 0.0)
    u = smooth_field(grid, rng)
    # the boundary term 2 int u shifts by 4 pi delta, the log term by -4 pi delta
    assert J_value(u + 1.3, d, False).J == pytest.approx(J_value(u, d, False).J, abs=1e-10)


def test_J_gradient_finite_differences(grid, rng):
    d = ProblemData.from_functions(grid, Kq, 0.0)
    eps = 1e-4
    for _ in range(10):
        u, v = smooth_field(grid, rng, 0.8), smooth_field(grid, rng, 0.5)
        fd = (J_value(u + eps * v, d, False).J - J_value(u - eps * v, d, False).J) / (2 * eps)
        an = h1_inner(grid, J_grad(u, d), v)
        assert abs(fd - an) <= 1e-5 * abs(an)


def test_T_linearization_finite_differences(grid, rng):
    d = ProblemData.from_functions(grid, Kq, lambda t: 1 + 0.1 * np.cos(t))
    u, v = smooth_field(grid, rng, 0.5), smooth_field(grid, rng, 0.5)
    lin = Linearization(u, d)
    e = 1e-6
    fd = (apply_T(u + e * v, d) - apply_T(u - e * v, d)) / (2 * e)
    assert np.abs(fd - lin.apply(v)).max() < 1e-8
    assert lin.dc(v) == pytest.approx(dc_of(u, d, v), abs=1e-14)
    fc = (c_of(u + e * v, d) - c_of(u - e * v, d)) / (2 * e)
    assert fc == pytest.approx(lin.dc(v), abs=1e-9)


def test_center_of_mass(grid, rng):
    assert np.abs(center_of_mass(np.zeros(grid.shape), grid)).max() < 1e-15
    u = smooth_field(grid, rng)
    # the quotient cancels the constant up to the rounding of u + const
    assert np.abs(center_of_mass(u + 2.0, grid) - center_of_mass(u, grid)).max() < 1e-15
    assert np.hypot(*center_of_mass(5 * grid.X1, grid)) < 1


def test_com_riesz_represents_derivative(grid, rng):
    u, v = smooth_field(grid, rng), smooth_field(grid, rng)
    R = com_riesz(u, grid)
    e = 1e-6
    fd = (center_of_mass(u + e * v, grid) - center_of_mass(u - e * v, grid)) / (2 * e)
    an = np.array([h1_inner(grid, R[0], v), h1_inner(grid, R[1], v)])
    assert np.abs(fd - an).max() < 1e-8


def test_kazdan_warner_on_bubble(grid):
    w = oracle.psi_field((0.3, 0.4), grid)
    kt, kf, gb = kazdan_warner_residuals(w, np.ones(grid.shape), grid)
    assert max(kt, kf, gb) <= 1e-7


def test_kazdan_warner_has_power(grid):
    kt, kf, gb = kazdan_warner_residuals(grid.X1, 1 + grid.X1, grid)
    assert kf >= 1e-2 and gb >= 1e-2


def test_kazdan_warner_boundary_term(grid):
    # a solved problem with nonconstant h: the identities only close with the
    # boundary flux term 2 int e^(w/2) h'(theta) (V . tangent)
    from curvdisk.solver import _continue, newton_polish
    d0 = ProblemData.from_functions(grid, lambda x1, x2, r, t: 2 - r**2, 0.3)
    u0 = newton_polish(np.zeros(grid.shape), d0).u
    d = ProblemData.from_functions(grid, lambda x1, x2, r, t: 2 - r**2 + 0.1 * x1 - 0.1 * x1 * x2,
                                   lambda t: 0.3 + 0.05 * np.sin(t) + 0.02 * np.cos(2 * t))
    rec = _continue(lambda s: ProblemData(grid, (1 - s) * d0.K + s * d.K, (1 - s) * d0.h + s * d.h, s),
                    u0, 0.0, 1.0, 5, [], 1e-8)
    assert rec.converged
    kt, kf, gb = kazdan_warner_residuals(rec.w, d.K, grid, d.h)
    assert max(kt, kf) <= 1e-9 and gb <= 1e-12
    kt0, kf0, _ = kazdan_warner_residuals(rec.w, d.K, grid)
    assert kf0 > 1e-2
    assert gauss_bonnet_residual(rec.w, d) <= 1e-12


def test_mass_bounds(grid):
    one = np.ones(grid.shape)
    assert mass_bounds_check(oracle.psi_field((0, 0), grid), one, grid)
    assert not mass_bounds_check(one, one, grid)


def test_residual_report_keys(grid):
    d = ProblemData.from_functions(grid, 1.0, 0.0)
    rep = residual_report(oracle.psi_field((0.2, 0), grid), d)
    assert set(rep) == {"kw_tau", "kw_F", "gauss_bonnet", "mass", "mass_bounds_ok"}
    assert rep["mass_bounds_ok"] is True


def test_moser_trudinger_sharp_form(grid, rng):
    # bubbles are extremal: equality with constant 1 + log(pi/2)
    for a in [(0, 0), (0.3, 0), (0.2, -0.5)]:
        gap = moser_trudinger_gap(oracle.phi_a(a, grid), grid, MT_SHARP_CONSTANT)
        assert abs(gap) < 1e-8
    for _ in range(100):
        u = smooth_field(grid, rng, rng.uniform(0.1, 3.0))
        assert moser_trudinger_gap(u, grid, MT_SHARP_CONSTANT) >= -1e-9


def test_moser_trudinger_without_constant_fails_at_zero(grid):
    # log pi > 0 = right-hand side at u = 0
    assert moser_trudinger_gap(np.zeros(grid.shape), grid) == pytest.approx(-math.log(math.pi),
                                                                           abs=1e-13)
