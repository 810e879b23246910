import math

import numpy as np
import pytest

from qnslab.kernels import (
    RadialProfile,
    decay_envelope_check,
    gaussian_kernel,
    heat_kernel_profile,
    kernel_mass,
    oseen_kernel_profile,
    tail_series,
)

RADII = np.linspace(0.0, 6.0, 25)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_order_one_is_gaussian(dim):
    prof = heat_kernel_profile(dim, 1.0, 2.0, RADII)
    ref = gaussian_kernel(dim, 2.0, RADII)
    assert np.max(np.abs(prof.values - ref)) / ref.max() < 1e-12


def _poisson(dim, t, r):
    c = math.gamma((dim + 1) / 2) / math.pi ** ((dim + 1) / 2)
    return c * t / (t**2 + r**2) ** ((dim + 1) / 2)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_half_order_is_poisson_kernel(dim):
    # exp(-t|xi|) has the closed-form Poisson kernel
    prof = heat_kernel_profile(dim, 0.5, 1.0, RADII)
    ref = _poisson(dim, 1.0, RADII)
    assert np.max(np.abs(prof.values - ref) / ref) < 1e-9


def test_self_similarity_in_time():
    beta, t = 0.75, 3.0
    r = np.linspace(0.0, 4.0, 9)
    small = heat_kernel_profile(2, beta, 1.0, r)
    big = heat_kernel_profile(2, beta, t, r * t ** (1 / (2 * beta)))
    assert np.allclose(big.values * t ** (2 / (2 * beta)), small.values, rtol=1e-10, atol=1e-14)


def test_mass_is_one():
    out = kernel_mass(2, 0.75, 1.0)
    assert abs(out["mass"] - 1.0) < 1e-6


def test_far_field_matches_tail_series():
    r = np.array([30.0, 40.0, 60.0])
    prof = heat_kernel_profile(2, 0.75, 1.0, r)
    assert np.allclose(prof.values, tail_series(2, 0.75, 1.0, r, terms=4), rtol=1e-3)


def test_radial_derivative_matches_finite_difference():
    r = np.array([0.9, 1.0, 1.1])
    h = 1e-4
    d = heat_kernel_profile(2, 0.8, 1.0, r, deriv_order=1).values
    hi = heat_kernel_profile(2, 0.8, 1.0, r + h).values
    lo = heat_kernel_profile(2, 0.8, 1.0, r - h).values
    assert np.allclose(d, (hi - lo) / (2 * h), rtol=1e-6)


def test_oseen_trace_is_heat_kernel():
    r = np.linspace(0.2, 5.0, 10)
    os_ = oseen_kernel_profile(2, 0.7, 1.0, r)
    heat = heat_kernel_profile(2, 0.7, 1.0, r)
    assert np.allclose(os_.trace(), heat.values, rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("bad", [dict(n=4, beta=0.7, t=1.0), dict(n=2, beta=1.2, t=1.0), dict(n=2, beta=0.7, t=0.0)])
def test_bad_parameters_rejected(bad):
    with pytest.raises(ValueError):
        heat_kernel_profile(bad["n"], bad["beta"], bad["t"], RADII)


def test_profile_csv_round_trip(tmp_path):
    prof = heat_kernel_profile(2, 0.75, 1.0, RADII)
    path = tmp_path / "k.csv"
    prof.to_csv(path)
    back = RadialProfile.from_csv(path)
    assert np.array_equal(back.radii, prof.radii)
    assert np.allclose(back.values, prof.values, rtol=1e-15, atol=0)


def test_profile_rejects_unsorted_radii():
    with pytest.raises(ValueError):
        RadialProfile(np.array([1.0, 0.5]), np.zeros(2), np.zeros(2))


def test_decay_envelope_rejects_large_order():
    with pytest.raises(ValueError):
        decay_envelope_check(7, 0.75)
