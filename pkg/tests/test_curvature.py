import json
import warnings

import numpy as np
import pytest

from curvdisk.curvature import (HypothesisViolation, NegativeDiscriminant, RefinementExhausted,
                                VanishingOnBoundary, brouwer_degree, build_phi, degree_sweep,
                                harmonic_extend, phi_from_curvatures, winding_number)


@pytest.mark.parametrize("h, H", [
    (lambda t: 1 + 0 * t, lambda x1, x2: 1 + 0 * x1),
    (np.cos, lambda x1, x2: x1),
    (lambda t: np.cos(2 * t), lambda x1, x2: x1**2 - x2**2),
    (lambda t: np.sin(3 * t), lambda x1, x2: 3 * x1**2 * x2 - x2**3),
])
def test_harmonic_extension_exact(grid, h, H):
    out = harmonic_extend(grid.sample_boundary(h), grid)
    assert np.abs(out - H(grid.X1, grid.X2)).max() < 1e-12
    assert np.array_equal(out[-1], grid.sample_boundary(h))


def test_harmonic_extension_is_harmonic(grid, rng):
    h = rng.standard_normal(grid.n_theta)
    h = np.fft.irfft(np.fft.rfft(h) * (np.arange(grid.n_theta // 2 + 1) < 12), grid.n_theta)
    H = harmonic_extend(h, grid)
    assert np.abs(grid.laplacian(H)).max() < 1e-9 * np.abs(h).max()


def test_maximum_principle(grid, rng):
    t = grid.theta
    for _ in range(100):
        deg = rng.integers(1, 20)
        a = rng.standard_normal(deg + 1) / (1 + np.arange(deg + 1))
        b = rng.standard_normal(deg + 1) / (1 + np.arange(deg + 1))
        h = sum(a[m] * np.cos(m * t) + b[m] * np.sin(m * t) for m in range(deg + 1))
        H = harmonic_extend(h, grid)
        assert H.min() >= h.min() - 1e-12 and H.max() <= h.max() + 1e-12


@pytest.mark.parametrize("K, h, phi", [(1.0, 0.0, 1.0), (0.0, 1.0, 2.0), (3.0, 1.0, 3.0)])
def test_phi_constants(grid, K, h, phi):
    pf = phi_from_curvatures(np.full(grid.shape, K), np.full(grid.n_theta, h), grid)
    assert np.abs(pf.phi - phi).max() < 1e-14
    assert np.abs(pf.grad_phi[0]).max() < 1e-12


def test_negative_discriminant(grid):
    with pytest.raises(NegativeDiscriminant):
        phi_from_curvatures(-np.ones(grid.shape), np.zeros(grid.n_theta), grid)


def test_hypothesis_warning(grid):
    with pytest.warns(HypothesisViolation):
        build_phi(np.zeros(grid.shape), np.zeros(grid.shape), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_phi(np.ones(grid.shape), np.zeros(grid.shape), grid)


@pytest.mark.parametrize("V, degree", [
    (lambda x1, x2: (x1, x2), 1),
    (lambda x1, x2: (x1**2 - x2**2, 2 * x1 * x2), 2),
    (lambda x1, x2: (x1, -x2), -1),
    (lambda x1, x2: (-x1, -x2), 1),
    (lambda x1, x2: (1 + 0 * x1, 0.5 + 0 * x2), 0),
])
def test_degree_unit_fields(V, degree):
    assert brouwer_degree(V).degree == degree


def test_high_degree_needs_enough_samples():
    def z7(x1, x2):
        z = (x1 + 1j * x2) ** 7
        return z.real, z.imag
    assert brouwer_degree(z7, n0=32).degree == 7
    # with 8 samples each increment is 7 pi / 4, which wraps to -pi / 4 and
    # aliases undetectably; the default n0 = 64 is safe up to degree 16
    assert brouwer_degree(z7, n0=8).degree == -1


def test_refinement_tracks_fast_rotation():
    # z^2 sampled at 4 points turns by exactly pi per step, forcing bisection
    rep = brouwer_degree(lambda a, b: (a * a - b * b, 2 * a * b), n0=4)
    assert rep.degree == 2 and rep.refinement_depth > 0 and rep.n_samples_final > 4


def test_refinement_exhausted():
    def V(x1, x2):
        t = np.arctan2(x2, x1)
        # the field flips direction across t = 0.5: a jump of exactly pi
        sgn = np.where(t > 0.5, -1.0, 1.0)
        return sgn * np.cos(t), sgn * np.sin(t)
    with pytest.raises(RefinementExhausted):
        winding_number(lambda ts: V(np.cos(ts), np.sin(ts)), n0=16, max_depth=5)


def test_positive_scalar_invariance(rng):
    V = lambda x1, x2: (x1**2 - x2**2 + 0.3, 2 * x1 * x2)  # noqa: E731
    ts = 2 * np.pi * np.arange(64) / 64
    v1, v2 = V(np.cos(ts), np.sin(ts))
    c = np.exp(rng.standard_normal(64))
    assert np.abs(np.arctan2(c * v2, c * v1) - np.arctan2(v2, v1)).max() < 1e-15
    assert brouwer_degree(lambda a, b: tuple(np.exp(np.sin(5 * a)) * v for v in V(a, b))).degree == \
        brouwer_degree(V).degree


def test_radius_invariance(grid):
    K = 1 - 0.2 * grid.R**2 + 0.05 * grid.X1 * grid.X2
    pf = phi_from_curvatures(K, np.zeros(grid.n_theta), grid)
    sweep = degree_sweep(pf.grad_phi, grid, radii=(1.0, 0.995, 0.99, 0.95))
    assert {s["degree"] for s in sweep} == {1}


def test_degree_of_sampled_gradients(grid):
    zero = np.zeros(grid.n_theta)
    pf = phi_from_curvatures(1 - 0.2 * grid.R**2, zero, grid)
    # grad Phi = -0.2 x / sqrt(K) is a negative multiple of x
    assert brouwer_degree(pf.grad_phi, grid).degree == 1
    pf = phi_from_curvatures(1 + 0.2 * grid.X1, zero, grid)
    assert brouwer_degree(pf.grad_phi, grid).degree == 0
    pf = phi_from_curvatures(np.ones(grid.shape), zero, grid)
    with pytest.raises(VanishingOnBoundary):
        brouwer_degree(pf.grad_phi, grid)


def test_tilted_boundary_curvature_has_degree_zero(grid):
    # K = 1 - 0.2 r^2, h = 1 + 0.1 cos(theta): H = 1 + 0.1 x1. The x1-derivative
    # of Phi = H + sqrt(H^2 + K) is positive at both (1, 0) and (-1, 0), so the
    # gradient cannot wind around the origin.
    def d1phi(x1):
        H, K = 1 + 0.1 * x1, 1 - 0.2 * x1**2
        return 0.1 + (2 * H * 0.1 - 0.4 * x1) / (2 * np.sqrt(H * H + K))
    assert d1phi(1.0) > 0 and d1phi(-1.0) > 0
    pf = phi_from_curvatures(1 - 0.2 * grid.R**2, 1 + 0.1 * np.cos(grid.theta), grid)
    rep = brouwer_degree(pf.grad_phi, grid)
    assert rep.degree == 0
    assert rep.min_boundary_grad_norm == pytest.approx(d1phi(1.0), rel=1e-10)


def test_report_json_keys():
    rep = brouwer_degree(lambda a, b: (a, b))
    assert set(json.loads(rep.to_json())) == {"degree", "min_boundary_grad_norm",
                                              "n_samples_final", "refinement_depth"}
