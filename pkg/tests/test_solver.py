import math

import numpy as np
import pytest
from scipy import integrate

from qnslab.family import TestFamily
from qnslab.halfspace import FieldHistory
from qnslab.params import FracParams
from qnslab.solver import (
    TimeGrid,
    bilinear_B,
    exp_convolve,
    fitted_weights,
    linear_part_regularity,
    maximal_regularity_check,
    nonlinear_flux,
    picard_solve,
    time_power_operator_check,
    residual,
)
from qnslab.spectral import TorusGrid, divergence, to_physical, to_spectral

P = FracParams(0.3, 0.75)
GRID = TorusGrid(2, 32)


def _data(amplitude=1.0, seed=7, bandwidth=4):
    fam = TestFamily(GRID, 1, seed=seed, bandwidth=bandwidth, components=2, divergence_free=True)
    return fam.field(0) * amplitude


def _taylor_green(grid, k=1):
    x, y = grid.mesh()
    return to_spectral(np.stack([np.sin(k * x) * np.cos(k * y), -np.cos(k * x) * np.sin(k * y)]), grid)


def test_linear_evolution_matches_closed_form():
    tg = TimeGrid.spanning(1.0, 12, 1e-3)
    u0 = _taylor_green(GRID, 2)
    state = picard_solve(u0, tg, P, J_max=0)
    x, y = GRID.mesh()
    for m, t in enumerate(tg.nodes):
        decay = math.exp(-t * 8**P.beta)
        want = decay * np.stack([np.sin(2 * x) * np.cos(2 * y), -np.cos(2 * x) * np.sin(2 * y)])
        assert np.max(np.abs(to_physical(state.at(m)) - want)) < 1e-12


def test_exp_convolve_is_exact_for_linear_forcing():
    steps = np.concatenate([[0.0], np.geomspace(1e-3, 2.0, 15)])
    rates = np.array([0.0, 0.5, 3.0, 40.0])
    f = (1.5 - 0.7 * steps)[:, None] * np.ones_like(rates)
    got = exp_convolve(f, steps, rates).real
    for j, a in enumerate(rates):
        for m, t in enumerate(steps):
            want, _ = integrate.quad(lambda s: math.exp(-a * (t - s)) * (1.5 - 0.7 * s), 0, t, epsabs=1e-15, epsrel=1e-13)
            assert got[m, j] == pytest.approx(want, rel=1e-11, abs=1e-14)


def test_exp_convolve_converges_at_second_order():
    a, T = np.array([2.0]), 1.0

    def err(M):
        steps = np.linspace(0.0, T, M + 1)
        y = exp_convolve(np.cos(3 * steps)[:, None], steps, a).real[-1, 0]
        want, _ = integrate.quad(lambda s: math.exp(-2.0 * (T - s)) * math.cos(3 * s), 0, T, epsabs=1e-15)
        return abs(y - want)

    errors = [err(M) for M in (16, 32, 64)]
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(orders) > 1.9


def test_fitted_weights_are_exact_for_their_basis():
    h1, h2, a = 0.03, 0.05, np.array([0.0, 1.0, 25.0])
    cm, c0, cp = fitted_weights(h1, h2, a)
    assert np.allclose(cm + c0 + cp, 0.0, atol=1e-10)
    assert np.allclose(-h1 * cm + h2 * cp, 1.0, rtol=1e-12)
    e = lambda t: np.exp(-a * t)  # noqa: E731
    assert np.allclose(cm * e(-h1) + c0 + cp * e(h2), -a, rtol=1e-9, atol=1e-9)


def test_nonlinear_term_is_energy_neutral():
    u = _data(1.0, bandwidth=8)
    flux = nonlinear_flux(u)
    pairing = float(np.sum(to_physical(flux) * to_physical(u)) * GRID.cell_volume)
    scale = flux.l2_norm() * u.l2_norm()
    assert abs(pairing) < 1e-10 * scale


@pytest.mark.parametrize("k", [1, 2, 3])
def test_taylor_green_mode_is_a_steady_euler_flow(k):
    flux = nonlinear_flux(_taylor_green(GRID, k))
    assert np.max(np.abs(flux.coeffs)) < 1e-14


def test_nonlinear_term_is_quadratic_and_bilinear():
    u, v = _data(1.0, seed=1), _data(1.0, seed=2)
    c = -1.7
    assert np.allclose(nonlinear_flux(u * c).coeffs, c**2 * nonlinear_flux(u).coeffs, atol=1e-14)
    polar = nonlinear_flux(u + v).coeffs - nonlinear_flux(u).coeffs - nonlinear_flux(v).coeffs
    mixed = nonlinear_flux(u, v).coeffs + nonlinear_flux(v, u).coeffs
    assert np.allclose(polar, mixed, atol=1e-13)


def test_nonlinear_term_output_is_divergence_free():
    out = nonlinear_flux(_data(1.0, bandwidth=8))
    assert np.max(np.abs(to_physical(divergence(out)))) < 1e-12


def test_bilinear_form_is_symmetric_for_symmetric_flux():
    tg = TimeGrid.spanning(0.5, 10, 1e-3)
    a, b = _data(1.0, seed=3), _data(1.0, seed=4)
    u = picard_solve(a, tg, P, J_max=0).history
    v = picard_solve(b, tg, P, J_max=0).history
    uv = bilinear_B(u, v, tg, P, a, b).coeffs + bilinear_B(v, u, tg, P, b, a).coeffs
    both = bilinear_B(FieldHistory(GRID, tg.nodes, u.coeffs + v.coeffs, True, tg.rule), FieldHistory(GRID, tg.nodes, u.coeffs + v.coeffs, True, tg.rule), tg, P, a + b, a + b).coeffs
    uu = bilinear_B(u, u, tg, P, a, a).coeffs
    vv = bilinear_B(v, v, tg, P, b, b).coeffs
    assert np.allclose(both - uu - vv, uv, atol=1e-13)


def test_energy_does_not_increase_along_solution():
    tg = TimeGrid.spanning(1.0, 32, 1e-3)
    state = picard_solve(_data(0.3), tg, P, J_max=30, tol=1e-13)
    assert state.converged
    energy = [state.at(m).l2_norm() for m in range(tg.size)]
    assert all(e2 <= e1 * (1 + 1e-9) for e1, e2 in zip(energy, energy[1:]))
    assert energy[0] <= _data(0.3).l2_norm() * (1 + 1e-9)


def test_tiny_data_stays_close_to_linear_evolution():
    tg = TimeGrid.spanning(1.0, 16, 1e-3)
    devs = []
    for amp in (1e-3, 1e-4):
        full = picard_solve(_data(amp), tg, P, J_max=10, tol=1e-14)
        lin = picard_solve(_data(amp), tg, P, J_max=0)
        devs.append(max((full.at(m) - lin.at(m)).l2_norm() / lin.at(m).l2_norm() for m in range(tg.size)))
    # the deviation is quadratic in the data, so relative to the data it is linear in amplitude
    assert devs[0] < 1e-2
    assert devs[0] / devs[1] == pytest.approx(10.0, rel=0.05)


def test_zero_data_gives_zero_solution_and_zero_residual():
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    zero = to_spectral(np.zeros((2,) + GRID.shape), GRID)
    state = picard_solve(zero, tg, P)
    assert state.converged and np.all(state.steps == 0)
    assert residual(state, P)["max"] == 0.0


def test_mild_solution_residual_is_small():
    tg = TimeGrid.spanning(1.0, 64, 1e-3)
    state = picard_solve(_data(0.3), tg, P, J_max=30, tol=1e-13)
    assert residual(state, P)["max"] < 5e-3


def test_contraction_ratios_below_one_for_small_data():
    tg = TimeGrid.spanning(1.0, 16, 1e-3)
    state = picard_solve(_data(0.05), tg, P, J_max=8, tol=0.0)
    assert state.regime == "contracting"
    assert max(state.ratios) < 0.1


def test_non_solenoidal_data_is_projected_with_warning():
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    x, _ = GRID.mesh()
    grad = to_spectral(np.stack([np.cos(x), np.zeros_like(x)]), GRID)
    with pytest.warns(UserWarning):
        state = picard_solve(grad, tg, P, J_max=2)
    assert np.max(np.abs(state.steps)) < 1e-14


def test_scalar_data_rejected():
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    with pytest.raises(ValueError):
        picard_solve(to_spectral(np.zeros(GRID.shape), GRID), tg, P)


def test_quadrature_checks_skip_zero_forcing():
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    zero = FieldHistory(GRID, tg.nodes, np.zeros((tg.size, 1) + GRID.shape, complex), True, tg.rule)
    assert maximal_regularity_check(zero, tg, P)["skipped"]
    assert time_power_operator_check(zero, tg, P, 1)["skipped"]


@pytest.mark.parametrize("r", [-1, 4])
def test_pr_operator_rejects_bad_order(r):
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    zero = FieldHistory(GRID, tg.nodes, np.zeros((tg.size, 1) + GRID.shape, complex), True, tg.rule)
    with pytest.raises(ValueError):
        time_power_operator_check(zero, tg, P, r)


def test_regularity_rejects_high_order():
    tg = TimeGrid.spanning(1.0, 10, 1e-3)
    with pytest.raises(ValueError):
        linear_part_regularity(_data(), tg, P, k_max=5)


def test_time_grid_refinement_keeps_endpoints():
    tg = TimeGrid.spanning(2.0, 9, 1e-2)
    fine = tg.refined()
    assert fine.size == 17
    assert fine.nodes[0] == pytest.approx(tg.nodes[0]) and fine.nodes[-1] == 2.0
    assert np.allclose(fine.nodes[::2], tg.nodes, rtol=1e-12)
    with pytest.raises(ValueError):
        TimeGrid.geometric(1.0, 4, 2.0)
