import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnslab.spectral import (
    SpectralField,
    TorusGrid,
    divergence,
    frac_laplacian,
    gradient,
    heat_semigroup,
    leray_project,
    lp_bank,
    partial_derivative,
    read_qnsf,
    scaling_transform,
    to_physical,
    to_spectral,
    write_qnsf,
)


def _plane_wave(grid, k, phase=0.3):
    x = grid.mesh()
    arg = sum(2 * math.pi / grid.period * kk * xx for kk, xx in zip(k, x))
    return np.sin(arg + phase)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_round_trip_is_exact(dim):
    grid = TorusGrid(dim, 16)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(grid.shape)
    assert np.max(np.abs(to_physical(to_spectral(v, grid)) - v)) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.51, 1.0), st.integers(1, 7))
def test_heat_semigroup_on_plane_wave(t, beta, k):
    grid = TorusGrid(1, 32, 2 * math.pi)
    f = to_spectral(_plane_wave(grid, (k,)), grid)
    got = to_physical(heat_semigroup(f, t, beta))
    expected = math.exp(-t * k ** (2 * beta)) * _plane_wave(grid, (k,))
    assert np.max(np.abs(got - expected)) < 1e-12


def test_semigroup_law_holds_for_random_field():
    grid = TorusGrid(2, 32)
    f = to_spectral(np.random.default_rng(2).standard_normal(grid.shape), grid)
    a = heat_semigroup(heat_semigroup(f, 0.2, 0.7), 0.5, 0.7)
    b = heat_semigroup(f, 0.7, 0.7)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-15


def test_fractional_laplacian_scales_plane_wave():
    grid = TorusGrid(2, 16, 4.0)
    k = (2, 3)
    f = to_spectral(_plane_wave(grid, k), grid)
    norm = 2 * math.pi / 4.0 * math.hypot(*k)
    got = to_physical(frac_laplacian(f, 0.35))
    assert np.allclose(got, norm**0.7 * _plane_wave(grid, k), atol=1e-12)


def test_partial_derivative_matches_calculus():
    grid = TorusGrid(2, 16)
    x, y = grid.mesh()
    f = to_spectral(np.sin(2 * x) * np.cos(3 * y), grid)
    assert np.allclose(to_physical(partial_derivative(f, 0)), 2 * np.cos(2 * x) * np.cos(3 * y), atol=1e-12)
    assert np.allclose(to_physical(partial_derivative(f, 1, 2)), -9 * np.sin(2 * x) * np.cos(3 * y), atol=1e-11)
    with pytest.raises(ValueError):
        partial_derivative(f, 2)


def test_leray_projection_identities():
    grid = TorusGrid(2, 32)
    rng = np.random.default_rng(3)
    u = to_spectral(rng.standard_normal((2,) + grid.shape), grid)
    pu = leray_project(u)
    assert np.max(np.abs(to_physical(divergence(pu)))) < 1e-12
    assert np.max(np.abs(leray_project(pu).coeffs - pu.coeffs)) < 1e-15
    phi = to_spectral(rng.standard_normal(grid.shape), grid)
    assert np.max(np.abs(leray_project(gradient(phi)).coeffs)) < 1e-15


def test_leray_rejects_scalar_field():
    grid = TorusGrid(2, 8)
    with pytest.raises(ValueError):
        leray_project(to_spectral(np.zeros(grid.shape), grid))


def test_littlewood_paley_windows_partition_nonzero_modes():
    grid = TorusGrid(2, 64)
    bank = lp_bank(grid)
    total = sum(bank.window(j) for j in bank.levels)
    nz = grid.xi_norm_sq > 0
    assert np.allclose(total[nz], 1.0, atol=1e-14)


def test_scaling_transform_matches_direct_evaluation():
    grid = TorusGrid(2, 32, 2 * math.pi)
    c = grid.center
    fn = lambda x, y: np.cos(x + 0.4) * np.sin(2 * y + 0.1)  # noqa: E731
    x, y = grid.mesh()
    f = to_spectral(fn(x, y), grid)
    got = to_physical(scaling_transform(f, 2, 0.5))
    expected = 2**0.5 * fn(c[0] + 2 * (x - c[0]), c[1] + 2 * (y - c[1]))
    assert np.max(np.abs(got - expected)) < 1e-12


def test_qnsf_round_trip(tmp_path):
    grid = TorusGrid(2, 16, 3.0)
    u = to_spectral(np.random.default_rng(4).standard_normal((2,) + grid.shape), grid)
    path = tmp_path / "u.qnsf"
    write_qnsf(path, u)
    back = read_qnsf(path)
    assert back.grid == grid and back.components == 2
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-15


def test_qnsf_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.qnsf"
    path.write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(ValueError):
        read_qnsf(path)


@pytest.mark.parametrize("points", [6, 12, 4])
def test_grid_rejects_non_power_of_two(points):
    with pytest.raises(ValueError):
        TorusGrid(2, points)


def test_coefficient_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        SpectralField(TorusGrid(2, 8), np.zeros((1, 8, 16)))
