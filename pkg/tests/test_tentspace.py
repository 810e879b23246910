import itertools
import math

import numpy as np
import pytest

from qnslab.halfspace import HalfSpaceSample
from qnslab.params import FracParams
from qnslab.spectral import TorusGrid
from qnslab.tentspace import (
    atomic_decompose,
    capacity_dimension,
    capacity_value,
    choquet_integral,
    hausdorff_capacity,
    indicator_atom,
    nontangential_max,
    t1_norm_bracket,
    tent_mask,
    validate_atom,
)

P = FracParams(0.4, 0.8)


def _all_dyadic_cubes(grid):
    """Every dyadic subinterval of a one-dimensional torus as (sample mask, side)."""
    N, L = grid.points, grid.period
    out = []
    size = N
    while size >= 1:
        for start in range(0, N, size):
            m = np.zeros(N, bool)
            m[start : start + size] = True
            out.append((m, L * size / N))
        size //= 2
    return out


def _brute_capacity(E, grid, d):
    cubes = _all_dyadic_cubes(grid)
    best = math.inf
    for k in range(1, len(cubes) + 1):
        for combo in itertools.combinations(range(len(cubes)), k):
            cover = np.zeros_like(E)
            for i in combo:
                cover |= cubes[i][0]
            if np.all(cover[E]):
                best = min(best, sum(cubes[i][1] ** d for i in combo))
    return best


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("d", [0.3, 0.7, 1.0])
def test_capacity_matches_cover_enumeration(seed, d):
    grid = TorusGrid(1, 8, 1.0)
    rng = np.random.default_rng(seed)
    E = rng.random(8) < 0.4
    E[rng.integers(8)] = True
    assert capacity_value(E, grid, d) == pytest.approx(_brute_capacity(E, grid, d), rel=1e-13)


def test_capacity_cover_covers_and_bounds():
    grid = TorusGrid(2, 16, 1.0)
    E = np.zeros(grid.shape, bool)
    E[2:6, 3:5] = True
    E[12, 12] = True
    cover, lower = hausdorff_capacity(E, grid, 1.2)
    assert cover.covers(E)
    assert lower <= cover.value
    assert cover.value == pytest.approx(capacity_value(E, grid, 1.2), rel=1e-13)


def test_capacity_of_full_torus_is_root_cube():
    grid = TorusGrid(2, 8, 2.0)
    assert capacity_value(np.ones(grid.shape, bool), grid, 1.5) == pytest.approx(2.0**1.5)


def test_capacity_rejects_empty_set_and_bad_dimension():
    grid = TorusGrid(1, 8)
    with pytest.raises(ValueError):
        hausdorff_capacity(np.zeros(8, bool), grid, 0.5)
    with pytest.raises(ValueError):
        capacity_value(np.ones(8, bool), grid, 1.5)


def test_choquet_integral_of_two_level_function():
    grid = TorusGrid(1, 16, 1.0)
    d = 0.6
    small = np.zeros(16, bool)
    small[3] = True
    big = np.zeros(16, bool)
    big[2:7] = True
    f = np.where(small, 5.0, np.where(big, 2.0, 0.0))
    expected = 2.0 * capacity_value(big, grid, d) + 3.0 * capacity_value(small, grid, d)
    assert choquet_integral(f, grid, d) == pytest.approx(expected, rel=1e-13)
    assert choquet_integral(np.zeros(16), grid, d) == 0.0
    with pytest.raises(ValueError):
        choquet_integral(-f, grid, d)


def test_capacity_dimension_requires_tent_range():
    assert capacity_dimension(P, 2) == pytest.approx(2 - 2 * 0.2)
    with pytest.raises(ValueError):
        capacity_dimension(FracParams(0.1, 0.6), 2)


def test_tent_mask_shrinks_with_time():
    grid = TorusGrid(2, 32, 1.0)
    times = np.array([0.01, 0.05, 0.1, 0.2])
    m = tent_mask(grid, times, grid.center, 0.15)
    counts = m.reshape(4, -1).sum(axis=1)
    assert np.all(np.diff(counts) <= 0)
    assert counts[-1] == 0


def test_indicator_atom_is_exactly_normalized():
    grid = TorusGrid(2, 32, 1.0)
    times = np.geomspace(0.005, 0.2, 10)
    atom = indicator_atom(grid, times, P, grid.center, 0.2)
    cert = validate_atom(atom, P)
    assert cert["passed"] and cert["margin"] == pytest.approx(1.0, rel=1e-12)


def _sample(grid, seed):
    times = np.geomspace(grid.spacing / 2, grid.period / 4, 10)
    rng = np.random.default_rng(seed)
    mask = tent_mask(grid, times, grid.center, grid.period / 4)
    return HalfSpaceSample(grid, times, rng.standard_normal((times.size,) + grid.shape) * mask)


def test_atomic_decomposition_reconstructs_and_certifies():
    grid = TorusGrid(2, 32, 1.0)
    F = _sample(grid, 3)
    nt = nontangential_max(F)
    omega = F.with_values(np.broadcast_to(nt, F.values.shape).copy())
    dec = atomic_decompose(F, omega, P)
    assert np.max(np.abs(dec.reconstruct(F) - F.values)) < 1e-12
    assert all(validate_atom(a, P)["passed"] for a in dec.atoms)


def test_t1_bracket_is_ordered_and_homogeneous():
    grid = TorusGrid(2, 16, 1.0)
    F = _sample(grid, 4)
    b = t1_norm_bracket(F, P)
    assert 0 < b["lower"] <= b["upper"] * (1 + 1e-12)
    b3 = t1_norm_bracket(F.with_values(3 * F.values), P)
    assert b3["upper"] == pytest.approx(3 * b["upper"], rel=1e-10)
    zero = t1_norm_bracket(F.with_values(np.zeros_like(F.values)), P)
    assert zero["upper"] == zero["lower"] == 0.0
