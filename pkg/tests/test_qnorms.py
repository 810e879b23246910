import itertools
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from qnslab.geometry import BallFamily, Cube, CubeFamily, ball_coverage
from qnslab.params import FracParams
from qnslab.qnorms import (
    ACCURATE,
    PLAIN,
    PairRule,
    bmo_beta_norm,
    canonical_window,
    carleson_q_inverse_norm,
    check_window,
    cube_energy,
    lattice_zeta,
    monotone_in_alpha,
    q_norm,
)
from qnslab.spectral import SpectralField, TorusGrid, to_physical, to_spectral

P = FracParams(0.3, 0.7)


def _random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return to_spectral(rng.standard_normal(grid.shape), grid)


def test_cube_energy_matches_pair_loop_in_two_dimensions():
    grid = TorusGrid(2, 16, 1.0)
    f = _random_field(grid, 5)
    v = to_physical(f)
    cube = Cube((4, 6), 4)
    h = grid.spacing
    e = 2 + 2 * P.gap
    pts = list(itertools.product(range(4), range(4)))
    total = 0.0
    for a, b in itertools.product(pts, pts):
        if a == b:
            continue
        fa = v[4 + a[0], 6 + a[1]]
        fb = v[4 + b[0], 6 + b[1]]
        total += (fa - fb) ** 2 / (math.dist(a, b) * h) ** e
    total *= h**4
    assert cube_energy(f, P, cube, PLAIN) == pytest.approx(total, rel=1e-12)


def test_constant_field_has_zero_q_norm():
    grid = TorusGrid(2, 16)
    f = to_spectral(np.full(grid.shape, 3.0), grid)
    assert q_norm(f, P, CubeFamily.dyadic(grid)).value < 1e-12
    assert bmo_beta_norm(f, 0.7, CubeFamily.dyadic(grid)).value < 1e-12


def test_q_norm_is_absolutely_homogeneous():
    grid = TorusGrid(2, 32)
    f = _random_field(grid, 6)
    cubes = CubeFamily.dyadic(grid)
    a = q_norm(f, P, cubes, ACCURATE).value
    assert q_norm(f * -2.5, P, cubes, ACCURATE).value == pytest.approx(2.5 * a, rel=1e-12)


def test_monotone_in_alpha_on_random_field():
    grid = TorusGrid(2, 32)
    f = _random_field(grid, 7)
    rows = monotone_in_alpha(f, 0.75, 0.2, 0.5, CubeFamily.dyadic(grid))
    assert all(r["holds"] for r in rows)
    with pytest.raises(ValueError):
        monotone_in_alpha(f, 0.75, 0.5, 0.2, CubeFamily.dyadic(grid))


@pytest.mark.parametrize("sigma", [0.5, 1.4, 2.6, -0.5])
def test_lattice_zeta_one_dimension_is_riemann_zeta(sigma):
    assert lattice_zeta(1, sigma) == pytest.approx(float(2 * mpmath.zeta(sigma)), rel=1e-10)


@pytest.mark.parametrize("sigma", [0.6, 1.3, 3.0, 4.5])
def test_lattice_zeta_plane_is_zeta_times_dirichlet_beta(sigma):
    s = sigma / 2
    beta = 4 ** (-s) * (mpmath.zeta(s, 0.25) - mpmath.zeta(s, 0.75))
    expected = float(4 * mpmath.zeta(s) * beta)
    assert lattice_zeta(2, sigma) == pytest.approx(expected, rel=1e-10)


def test_lattice_zeta_pole_rejected():
    with pytest.raises(ValueError):
        lattice_zeta(2, 2.0)


def test_pair_rule_validation():
    with pytest.raises(ValueError):
        PairRule("simpson")
    with pytest.raises(ValueError):
        PairRule(oversample=3)


def test_carleson_norm_of_single_complex_mode_matches_quad():
    # |heat extension|^2 of exp(i k x) is spatially constant, so the ball sum
    # reduces to the discrete ball volume times a one-dimensional time integral.
    grid = TorusGrid(1, 64, 2 * math.pi)
    k = 2
    coeffs = np.zeros((1, 64), complex)
    coeffs[0, k] = 1.0
    f = SpectralField(grid, coeffs, is_real=False)
    p = FracParams(0.3, 0.7)
    balls = BallFamily.dyadic(grid)
    got = carleson_q_inverse_norm(f, p, balls=balls).value ** 2
    e = 2 * p.alpha - 1 + 2 * p.beta - 2
    best = 0.0
    for r in balls.radii:
        vol = ball_coverage(grid, r).sum() * grid.cell_volume
        integral, _ = integrate.quad(lambda t: math.exp(-2 * t * k ** (2 * p.beta)) * t ** (-p.alpha / p.beta), 0, r ** (2 * p.beta), epsabs=0, epsrel=1e-13, limit=200)
        best = max(best, r**e * vol * integral)
    assert got == pytest.approx(best, rel=1e-9)


def test_ball_coverage_sums_to_ball_volume():
    grid = TorusGrid(2, 128, 2 * math.pi)
    r = 1.0
    vol = ball_coverage(grid, r).sum() * grid.cell_volume
    assert vol == pytest.approx(math.pi * r * r, rel=2e-3)


def test_canonical_window_is_admissible():
    rep = check_window(canonical_window(0.75))
    assert rep["admissible"]


def test_bmo_rejects_beta_out_of_range():
    grid = TorusGrid(2, 16)
    with pytest.raises(ValueError):
        bmo_beta_norm(_random_field(grid), 0.4, CubeFamily.dyadic(grid))
