"""Constitutive closures for the binary-fluid mixture.

All functions are pure, operate on scalars or numpy arrays, and are total in
the order parameter (the density extension and the log-linear viscosity are
defined for any real value, including the non-physical range outside
[-1, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

SQRT2 = math.sqrt(2.0)

#: conversion factor between the free-energy scale sigma and the physical
#: fluid-fluid surface tension sigma12 = (2*sqrt(2)/3) * sigma
SIGMA12_FACTOR = 2.0 * SQRT2 / 3.0


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the binary-fluid mixture (SI units).

    ``sigma`` (the free-energy scale used in the capillary terms) is derived
    from the fluid-fluid surface tension ``sigma12``; the relation
    sigma12 = (2*sqrt(2)/3) * sigma is enforced at construction.
    """

    rho1: float = 1000.0           # kg/m^3, heavy species (phi = +1)
    rho2: float = 1.3              # kg/m^3, light species (phi = -1)
    eta1: float = 1.0e-3           # Pa s
    eta2: float = 1.813e-5         # Pa s
    sigma12: float = 72.8e-3       # N/m
    eps: float = 0.78125e-6        # m, diffuse-interface thickness
    mobility: float = 3.0487e-10   # m s^2/kg
    alpha_gn: float = 100.0        # Pa s/m, Navier-slip relaxation
    sigma_s1: float = 0.0          # N/m, solid-fluid tension of species 1
    sigma_s2: float = 0.0          # N/m, solid-fluid tension of species 2
    volume_ratio: float = 1.0      # intrinsic volume ratio (kept at 1)
    body_force: tuple = (0.0, 0.0)  # N/m^3

    def __post_init__(self):
        if not (self.rho1 >= self.rho2 > 0.0):
            raise ValueError("densities must satisfy rho1 >= rho2 > 0")
        for name in ("eta1", "eta2", "eps", "mobility", "alpha_gn"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_s1 < 0.0 or self.sigma_s2 < 0.0:
            raise ValueError("solid-fluid tensions must be non-negative")

    @property
    def sigma(self) -> float:
        """Free-energy scale entering the capillary stress and potential."""
        return self.sigma12 / SIGMA12_FACTOR

    @property
    def matched_densities(self) -> bool:
        return self.rho1 == self.rho2

    @property
    def lam_ext(self) -> float:
        """Width parameter of the density extension, rho2/(rho1 - rho2)."""
        if self.matched_densities:
            return math.inf
        return self.rho2 / (self.rho1 - self.rho2)

    @property
    def neutral_wetting(self) -> bool:
        return self.sigma_s1 == self.sigma_s2

    def with_sigma(self, sigma: float) -> "ModelParams":
        """Return a copy with the free-energy scale set to ``sigma``."""
        return replace(self, sigma12=SIGMA12_FACTOR * sigma)


@dataclass(frozen=True)
class StabParams:
    """Penalty constants of the stabilized formulation (dimensionless)."""

    beta: float = 100.0            # Nitsche penalty
    gamma_skeleton: float = 0.01   # pressure skeleton penalty
    gamma_ghost: float = 0.01      # ghost penalty (all fields)

    def __post_init__(self):
        if min(self.beta, self.gamma_skeleton, self.gamma_ghost) <= 0.0:
            raise ValueError("stabilization parameters must be positive")


# ---------------------------------------------------------------------------
# mixture density (C^1 extension outside the physical phase-field range)

def density(phi, params: ModelParams):
    """Mixture density, extended to arbitrary phi so it stays positive.

    Linear interpolation on [-1-lam, 1+lam], quadratic blending on the two
    adjacent intervals of width lam, and constant plateaus rho2/4 and
    rho1 + 3*rho2/4 beyond.  Globally C^1.
    """
    phi = np.asarray(phi, dtype=float)
    r1, r2 = params.rho1, params.rho2
    if params.matched_densities:
        return np.full_like(phi, r1)
    lam = params.lam_ext
    lin = 0.5 * (1.0 + phi) * r1 + 0.5 * (1.0 - phi) * r2
    lo_blend = 0.25 * r2 + 0.25 * r2 / lam**2 * (1.0 + 2.0 * lam + phi) ** 2
    hi_blend = r1 + 0.75 * r2 - 0.25 * r2 / lam**2 * (1.0 + 2.0 * lam - phi) ** 2
    return np.select(
        [phi <= -1.0 - 2.0 * lam,
         phi < -1.0 - lam,
         phi <= 1.0 + lam,
         phi < 1.0 + 2.0 * lam],
        [0.25 * r2, lo_blend, lin, hi_blend],
        default=r1 + 0.75 * r2,
    )


def density_slope(phi, params: ModelParams):
    """d(density)/d(phi) of the extended density."""
    phi = np.asarray(phi, dtype=float)
    if params.matched_densities:
        return np.zeros_like(phi)
    r1, r2 = params.rho1, params.rho2
    lam = params.lam_ext
    return np.select(
        [phi <= -1.0 - 2.0 * lam,
         phi < -1.0 - lam,
         phi <= 1.0 + lam,
         phi < 1.0 + 2.0 * lam],
        [0.0,
         0.5 * r2 / lam**2 * (1.0 + 2.0 * lam + phi),
         0.5 * (r1 - r2) * np.ones_like(phi),
         0.5 * r2 / lam**2 * (1.0 + 2.0 * lam - phi)],
        default=0.0,
    )


def density_curvature(phi, params: ModelParams):
    """Second derivative of the extended density (piecewise constant)."""
    phi = np.asarray(phi, dtype=float)
    if params.matched_densities:
        return np.zeros_like(phi)
    r2 = params.rho2
    lam = params.lam_ext
    return np.select(
        [phi <= -1.0 - 2.0 * lam,
         phi < -1.0 - lam,
         phi <= 1.0 + lam,
         phi < 1.0 + 2.0 * lam],
        [0.0, 0.5 * r2 / lam**2, 0.0, -0.5 * r2 / lam**2],
        default=0.0,
    )


# ---------------------------------------------------------------------------
# mixture viscosity (log-linear blend, positive for all phi)

def viscosity(phi, params: ModelParams):
    """Mixture viscosity from the log-linear (Arrhenius-type) blend.

    With unit intrinsic volume ratio this is
    log(eta) = [(1+phi) log(eta1) + (1-phi) log(eta2)] / 2, which stays
    positive for every real phi.
    """
    phi = np.asarray(phi, dtype=float)
    l1, l2 = math.log(params.eta1), math.log(params.eta2)
    lam = params.volume_ratio
    num = (1.0 + phi) * lam * l1 + (1.0 - phi) * l2
    den = (1.0 + phi) * lam + (1.0 - phi)
    return np.exp(num / den)


def viscosity_slope(phi, params: ModelParams):
    """d(viscosity)/d(phi); closed form for unit volume ratio."""
    if params.volume_ratio != 1.0:
        raise NotImplementedError("analytic slope implemented for unit volume ratio")
    c = 0.5 * math.log(params.eta1 / params.eta2)
    return viscosity(phi, params) * c


# ---------------------------------------------------------------------------
# free-energy pieces

def double_well(phi):
    """Double-well free energy Psi = (phi^2 - 1)^2 / 4."""
    phi = np.asarray(phi, dtype=float)
    return 0.25 * (phi**2 - 1.0) ** 2


def double_well_prime(phi):
    phi = np.asarray(phi, dtype=float)
    return phi**3 - phi


def double_well_second(phi):
    phi = np.asarray(phi, dtype=float)
    return 3.0 * phi**2 - 1.0


def solid_fluid_tension(phi, params: ModelParams):
    """Solid-fluid surface tension blend between sigma_s1 (phi=1) and sigma_s2 (phi=-1)."""
    phi = np.asarray(phi, dtype=float)
    d = params.sigma_s2 - params.sigma_s1
    return 0.25 * (phi**3 - 3.0 * phi) * d + 0.5 * (params.sigma_s1 + params.sigma_s2)


def solid_fluid_tension_prime(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    d = params.sigma_s2 - params.sigma_s1
    return 0.75 * (phi**2 - 1.0) * d


def solid_fluid_tension_second(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    d = params.sigma_s2 - params.sigma_s1
    return 1.5 * phi * d


# ---------------------------------------------------------------------------
# fluxes, stresses and diagnostics

def mass_flux(grad_mu, params: ModelParams):
    """Relative mass flux driven by the chemical-potential gradient.

    J = -((rho1 - rho2)/2) * mobility * grad(mu); vanishes identically for
    matched densities.
    """
    grad_mu = np.asarray(grad_mu, dtype=float)
    return -0.5 * (params.rho1 - params.rho2) * params.mobility * grad_mu


def mixture_energy_density(phi, grad_phi, params: ModelParams):
    """Mixture free-energy density (sigma*eps/2)|grad phi|^2 + (sigma/eps) Psi."""
    phi = np.asarray(phi, dtype=float)
    grad_phi = np.asarray(grad_phi, dtype=float)
    sq = np.sum(grad_phi**2, axis=-1)
    s, e = params.sigma, params.eps
    return 0.5 * s * e * sq + (s / e) * double_well(phi)


def equilibrium_profile(signed_distance, params: ModelParams):
    """1D equilibrium phase-field profile tanh(d / (sqrt(2) eps))."""
    d = np.asarray(signed_distance, dtype=float)
    return np.tanh(d / (SQRT2 * params.eps))
