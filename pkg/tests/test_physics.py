import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from binaryflow import physics
from binaryflow.physics import ModelParams, StabParams


WATER_AIR = ModelParams()


def fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


class TestDensity:
    def test_endpoint_values(self):
        assert abs(physics.density(1.0, WATER_AIR) - 1000.0) < 1e-12
        assert abs(physics.density(-1.0, WATER_AIR) - 1.3) < 1e-12

    def test_plateaus(self):
        lam = WATER_AIR.lam_ext
        lo = physics.density(-1.0 - 3.0 * lam, WATER_AIR)
        hi = physics.density(1.0 + 3.0 * lam, WATER_AIR)
        assert abs(lo - 0.25 * 1.3) < 1e-12
        assert abs(hi - (1000.0 + 0.75 * 1.3)) < 1e-12
        # plateaus really are flat
        assert physics.density(-50.0, WATER_AIR) == lo
        assert physics.density(50.0, WATER_AIR) == hi

    def test_positive_on_wide_range(self):
        phi = np.linspace(-10.0, 10.0, 20001)
        assert np.all(physics.density(phi, WATER_AIR) > 0.0)

    def test_slope_matches_finite_differences(self):
        phi = np.linspace(-10.0, 10.0, 433)
        ana = physics.density_slope(phi, WATER_AIR)
        num = fd(lambda p: physics.density(p, WATER_AIR), phi)
        assert np.max(np.abs(ana - num)) < 1e-4 * np.max(np.abs(ana))

    def test_c1_at_branch_points(self):
        lam = WATER_AIR.lam_ext
        eps = 1e-9
        for x in (-1.0 - 2.0 * lam, -1.0 - lam, 1.0 + lam, 1.0 + 2.0 * lam):
            dv = physics.density(x + eps, WATER_AIR) - physics.density(x - eps, WATER_AIR)
            ds = (physics.density_slope(x + eps, WATER_AIR)
                  - physics.density_slope(x - eps, WATER_AIR))
            assert abs(dv) < 1e-5
            assert abs(ds) < 1e-3  # slope is continuous, curvature jumps

    def test_curvature_matches_slope_differences(self):
        phi = np.linspace(-2.0, 2.0, 575)
        ana = physics.density_curvature(phi, WATER_AIR)
        num = fd(lambda p: physics.density_slope(p, WATER_AIR), phi)
        assert np.max(np.abs(ana - num)) < 1e-3 * max(np.max(np.abs(ana)), 1.0)

    def test_matched_densities_are_constant(self):
        p = ModelParams(rho2=1000.0)
        phi = np.linspace(-5, 5, 11)
        assert np.all(physics.density(phi, p) == 1000.0)
        assert np.all(physics.density_slope(phi, p) == 0.0)

    @given(st.floats(min_value=-100.0, max_value=100.0))
    def test_density_positive_everywhere(self, phi):
        assert physics.density(phi, WATER_AIR) > 0.0


class TestViscosity:
    def test_endpoint_values(self):
        assert abs(physics.viscosity(1.0, WATER_AIR) - 1.0e-3) < 1e-15
        assert abs(physics.viscosity(-1.0, WATER_AIR) - 1.813e-5) < 1e-17

    def test_positive_outside_physical_range(self):
        phi = np.linspace(-8.0, 8.0, 1601)
        assert np.all(physics.viscosity(phi, WATER_AIR) > 0.0)

    def test_slope_matches_finite_differences(self):
        phi = np.linspace(-2.0, 2.0, 41)
        ana = physics.viscosity_slope(phi, WATER_AIR)
        num = fd(lambda p: physics.viscosity(p, WATER_AIR), phi, h=1e-7)
        assert np.max(np.abs(ana - num) / np.abs(ana)) < 1e-6

    def test_log_linear_midpoint(self):
        expect = math.sqrt(WATER_AIR.eta1 * WATER_AIR.eta2)
        assert abs(physics.viscosity(0.0, WATER_AIR) - expect) < 1e-18


class TestFreeEnergy:
    def test_double_well_minima(self):
        assert physics.double_well(1.0) == 0.0
        assert physics.double_well(-1.0) == 0.0
        assert physics.double_well(0.0) == 0.25
        assert physics.double_well_prime(1.0) == 0.0
        assert physics.double_well_prime(-1.0) == 0.0

    def test_double_well_derivatives(self):
        phi = np.linspace(-2, 2, 37)
        assert np.allclose(physics.double_well_prime(phi),
                           fd(physics.double_well, phi), atol=1e-8)
        assert np.allclose(physics.double_well_second(phi),
                           fd(physics.double_well_prime, phi), atol=1e-7)

    def test_neutral_wetting_tension_is_constant(self):
        p = ModelParams(sigma_s1=0.02, sigma_s2=0.02)
        phi = np.linspace(-2, 2, 11)
        assert np.allclose(physics.solid_fluid_tension(phi, p), 0.02)
        assert np.allclose(physics.solid_fluid_tension_prime(phi, p), 0.0)

    def test_tension_blend_endpoints(self):
        p = ModelParams(sigma_s1=0.03, sigma_s2=0.01)
        # cubic blend attains the pure-species values at phi = +-1
        assert abs(physics.solid_fluid_tension(1.0, p) - 0.03) < 1e-15
        assert abs(physics.solid_fluid_tension(-1.0, p) - 0.01) < 1e-15
        assert abs(physics.solid_fluid_tension_prime(1.0, p)) < 1e-15
        assert abs(physics.solid_fluid_tension_prime(-1.0, p)) < 1e-15

    def test_mixture_energy_density(self):
        p = WATER_AIR
        val = physics.mixture_energy_density(0.0, np.array([2.0, 0.0]), p)
        expect = 0.5 * p.sigma * p.eps * 4.0 + p.sigma / p.eps * 0.25
        assert abs(val - expect) < 1e-12 * expect


class TestFluxesAndProfiles:
    def test_mass_flux_direction_and_magnitude(self):
        J = physics.mass_flux(np.array([1.0, 0.0]), WATER_AIR)
        expect = -0.5 * (1000.0 - 1.3) * 3.0487e-10
        assert abs(J[0] - expect) < 1e-22
        assert J[1] == 0.0

    def test_mass_flux_vanishes_for_matched_densities(self):
        p = ModelParams(rho2=1000.0)
        assert np.all(physics.mass_flux(np.array([3.0, -2.0]), p) == 0.0)

    def test_equilibrium_profile(self):
        p = WATER_AIR
        assert physics.equilibrium_profile(0.0, p) == 0.0
        d = 5.0 * p.eps
        expect = math.tanh(d / (math.sqrt(2.0) * p.eps))
        assert abs(physics.equilibrium_profile(d, p) - expect) < 1e-15

    @given(st.floats(min_value=-1e-4, max_value=1e-4))
    def test_equilibrium_profile_bounded_and_odd(self, d):
        p = WATER_AIR
        v = physics.equilibrium_profile(d, p)
        assert -1.0 <= v <= 1.0
        assert abs(v + physics.equilibrium_profile(-d, p)) < 1e-12


class TestParameterValidation:
    def test_sigma_relation(self):
        assert abs(WATER_AIR.sigma - 72.8e-3 / (2.0 * math.sqrt(2.0) / 3.0)) < 1e-18
        p = WATER_AIR.with_sigma(0.05)
        assert abs(p.sigma - 0.05) < 1e-15

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(rho1=1.0, rho2=2.0)
        with pytest.raises(ValueError):
            ModelParams(eta1=-1.0)
        with pytest.raises(ValueError):
            ModelParams(mobility=0.0)
        with pytest.raises(ValueError):
            ModelParams(sigma_s1=-0.1)
        with pytest.raises(ValueError):
            StabParams(beta=0.0)

    def test_table_defaults(self):
        p = WATER_AIR
        assert (p.rho1, p.rho2) == (1000.0, 1.3)
        assert (p.eta1, p.eta2) == (1.0e-3, 1.813e-5)
        assert p.sigma12 == 72.8e-3
        assert p.eps == 0.78125e-6
        assert p.mobility == 3.0487e-10
        assert p.alpha_gn == 100.0
        s = StabParams()
        assert (s.beta, s.gamma_skeleton, s.gamma_ghost) == (100.0, 0.01, 0.01)
