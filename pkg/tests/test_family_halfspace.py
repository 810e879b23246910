import numpy as np
import pytest
from scipy import integrate

from qnslab.family import TestFamily
from qnslab.halfspace import GaussCells, LogCells, power_integral
from qnslab.spectral import TorusGrid, divergence, to_physical


def test_family_is_reproducible_and_refinable():
    grid = TorusGrid(2, 16)
    fam = TestFamily(grid, 3, seed=5, bandwidth=4)
    again = TestFamily(grid, 3, seed=5, bandwidth=4)
    assert np.array_equal(fam.field(2).coeffs, again.field(2).coeffs)
    fine = fam.refined(2)
    coarse = to_physical(fam.field(1))
    assert np.allclose(to_physical(fine.field(1))[::2, ::2], coarse, atol=1e-13)


def test_divergence_free_family():
    grid = TorusGrid(2, 32)
    fam = TestFamily(grid, 2, seed=1, components=2, divergence_free=True)
    for f in fam.fields():
        assert np.max(np.abs(to_physical(divergence(f)))) < 1e-12
        assert f.hermitian_defect() < 1e-15


def test_family_rejects_bandwidth_at_nyquist():
    with pytest.raises(ValueError):
        TestFamily(TorusGrid(1, 16), bandwidth=8)


def test_log_cells_integrate_constants_exactly():
    rule = LogCells(np.geomspace(1e-3, 1.0, 12))
    w = rule.weights(0.5, 0.4)
    assert w.sum() == pytest.approx(float(power_integral(0.0, 0.5, -0.4)), rel=1e-13)


@pytest.mark.parametrize("vanishing", [0.0, 1.0])
def test_gauss_cells_match_quad_for_smooth_density(vanishing):
    rule = GaussCells.geometric(1.0, 20, 2.0, 8)
    power = 0.6
    dens = lambda t: np.exp(-3 * t) * t**vanishing  # noqa: E731
    got = float(np.dot(rule.weights(0.5, power, vanishing), dens(rule.nodes)))
    want, _ = integrate.quad(lambda t: dens(t) * t ** (-power), 0, 0.5, epsabs=0, epsrel=1e-13, limit=200)
    assert got == pytest.approx(want, rel=1e-10)


def test_gauss_cells_require_an_edge_as_upper_limit():
    rule = GaussCells.geometric(1.0, 10)
    with pytest.raises(ValueError):
        rule.weights(0.3, 0.5)
