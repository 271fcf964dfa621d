import math

import numpy as np
import pytest

from nccscatter.lib.errors import DomainError
from nccscatter.lib.units import UNITS, MassSystem, build_mass_system, jacobi_to_scaled, scaled_to_jacobi


def test_lifh_mass_constants():
    ms = build_mass_system(7.0, 19.0, 1.0)
    assert ms.mu == pytest.approx(2.21945, rel=1e-5)
    assert ms.lam == pytest.approx(1.52848, rel=1e-5)
    assert ms.b == pytest.approx(0.116813, rel=1e-5)
    assert 1.0 / math.tan(ms.theta_skew) == pytest.approx(ms.b, rel=1e-12)
    assert math.degrees(ms.theta_skew) == pytest.approx(83.337, abs=1e-3)


def test_equal_masses_give_sixty_degrees():
    ms = build_mass_system(1.0, 1.0, 1.0)
    assert math.degrees(ms.theta_skew) == pytest.approx(60.0, abs=1e-12)


def test_from_amu_scales_mu_only():
    ms = MassSystem.from_amu(7.0, 19.0, 1.0)
    ref = build_mass_system(7.0, 19.0, 1.0)
    assert ms.mu / UNITS.mass == pytest.approx(ref.mu, rel=1e-12)
    assert ms.lam == pytest.approx(ref.lam, rel=1e-12)
    assert ms.b == pytest.approx(ref.b, rel=1e-12)


@pytest.mark.parametrize("masses", [(0.0, 1.0, 1.0), (1.0, -2.0, 1.0), (1.0, 1.0, math.inf), (math.nan, 1.0, 1.0)])
def test_invalid_masses_rejected(masses):
    with pytest.raises(DomainError):
        build_mass_system(*masses)


def test_jacobi_round_trip():
    ms = build_mass_system(7.0, 19.0, 1.0)
    R = np.array([3.0, 4.5, 10.0])
    r = np.array([1.7, 2.0, 1.1])
    q0, q1 = jacobi_to_scaled(ms, R, r)
    np.testing.assert_allclose(q0, ms.lam * R)
    R2, r2 = scaled_to_jacobi(ms, q0, q1)
    np.testing.assert_allclose(R2, R, rtol=1e-14)
    np.testing.assert_allclose(r2, r, rtol=1e-14)


def test_jacobi_round_trip_random_points():
    ms = build_mass_system(7.0, 19.0, 1.0)
    rng = np.random.default_rng(5)
    R = rng.uniform(0.5, 40.0, 1000)
    r = rng.uniform(0.5, 12.0, 1000)
    q0, q1 = jacobi_to_scaled(ms, R, r)
    R2, r2 = scaled_to_jacobi(ms, q0, q1)
    np.testing.assert_allclose(R2, R, rtol=1e-12)
    np.testing.assert_allclose(r2, r, rtol=1e-12)
    # mass scaling preserves the kinetic metric: lambda^2 R^2 + (r / lambda)^2
    np.testing.assert_allclose(q0 * q0 + q1 * q1, (ms.lam * R) ** 2 + (r / ms.lam) ** 2, rtol=1e-12)


def test_non_finite_coordinates_rejected():
    ms = build_mass_system(7.0, 19.0, 1.0)
    with pytest.raises(DomainError):
        jacobi_to_scaled(ms, [1.0, math.nan], [1.0, 1.0])


def test_unit_conversions_invert():
    assert UNITS.to_ev(UNITS.ev(1.25)) == pytest.approx(1.25, rel=1e-15)
    assert UNITS.to_angstrom(UNITS.angstrom(0.917)) == pytest.approx(0.917, rel=1e-15)
