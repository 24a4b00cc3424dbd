"""Physical parameters, unit conventions and Thomas-Fermi relations.

Everything is SI: masses in kg, lengths in m, angular frequencies in rad/s,
energies in J.  Detunings and Rabi frequencies are angular frequencies, so an
energy is obtained by multiplying with ``hbar``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, pi

RB87_MASS = 1.4432e-25

_PAIRS = ("tt", "uu", "tu")


@dataclass(frozen=True)
class AtomSpecies:
    """Atomic mass and s-wave scattering lengths between the trapped (t)
    and untrapped (u) internal states.

    Negative scattering lengths are rejected unless ``allow_negative`` is set.
    """

    mass: float
    a_tt: float = 0.0
    a_uu: float = 0.0
    a_tu: float = 0.0
    allow_negative: bool = False

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass!r}")
        for pair in _PAIRS:
            a = self.scattering_length(pair)
            if not math.isfinite(a):
                raise ValueError(f"a_{pair} must be finite")
            if a < 0 and not self.allow_negative:
                raise ValueError(f"a_{pair} = {a} < 0 (set allow_negative to permit)")

    def scattering_length(self, pair):
        if pair not in _PAIRS:
            raise ValueError(f"unknown state pair {pair!r}; expected one of {_PAIRS}")
        return getattr(self, "a_" + pair)


def rubidium87(a=0.0):
    """Rb-87 with the same scattering length ``a`` for every state pair."""
    return AtomSpecies(RB87_MASS, a, a, a)


@dataclass(frozen=True)
class TrapConfig:
    """Isotropic harmonic trap.  Gravity is kept for interface completeness
    only; every model in this package is gravity-free."""

    omega: float
    gravity: bool = False

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"trap frequency must be positive, got {self.omega!r}")
        if self.gravity:
            raise NotImplementedError("gravity is not supported; all beams propagate in free space")

    def oscillator_length(self, species):
        return math.sqrt(hbar / (species.mass * self.omega))

    def ground_frequency(self):
        """omega_0 = omega_t / 2, the ground-state energy over hbar."""
        return 0.5 * self.omega


@dataclass(frozen=True)
class CouplingConfig:
    """Effective two-photon (Raman) or single-photon (rf) outcoupling.

    The Rabi frequency is stored as magnitude and phase; ``detuning`` is the
    constant two-photon detuning in rad/s.  Time-dependent detunings live in
    :mod:`atomlaser.gpe` as schedules.
    """

    scheme: str
    rabi_magnitude: float
    k0: float = 0.0
    detuning: float = 0.0
    rabi_phase: float = 0.0

    def __post_init__(self):
        if self.scheme not in ("rf", "raman"):
            raise ValueError(f"scheme must be 'rf' or 'raman', got {self.scheme!r}")
        if self.rabi_magnitude < 0:
            raise ValueError("Rabi magnitude must be >= 0")
        if self.scheme == "rf" and self.k0 != 0.0:
            raise ValueError("rf coupling carries no momentum kick (k0 must be 0)")

    @classmethod
    def from_rabi(cls, scheme, rabi, k0=0.0, detuning=0.0):
        rabi = complex(rabi)
        return cls(scheme, abs(rabi), k0, detuning, cmath.phase(rabi))

    @property
    def rabi(self):
        return cmath.rect(self.rabi_magnitude, self.rabi_phase)

    def spatial_profile(self, x):
        """Lambda(x): exp(i k0 x) for Raman, 1 for rf."""
        x = np.asarray(x, dtype=float)
        if self.scheme == "rf":
            return np.ones_like(x, dtype=complex)
        return np.exp(1j * self.k0 * x)


def nonlinear_coupling(species, pair="tt"):
    """U_ij = 4 pi hbar^2 a_ij / m in J m^3."""
    return 4.0 * pi * hbar**2 * species.scattering_length(pair) / species.mass


def default_transverse_area(species, trap):
    """pi times the squared oscillator length."""
    return pi * hbar / (species.mass * trap.omega)


@dataclass(frozen=True)
class NonlinearCouplings:
    """Three-dimensional couplings plus the transverse area used for the
    1D reduction (``reduced`` divides each by the area)."""

    u_tt: float
    u_uu: float
    u_tu: float
    area: float = field(default=1.0)

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError("transverse area must be positive")

    @classmethod
    def from_species(cls, species, area):
        return cls(*(nonlinear_coupling(species, p) for p in _PAIRS), area=area)

    @property
    def reduced(self):
        """(U_tt, U_uu, U_tu) / area, in J m."""
        return (self.u_tt / self.area, self.u_uu / self.area, self.u_tu / self.area)


def _check_atoms(n_atoms):
    n = np.asarray(n_atoms, dtype=float)
    if np.any(n < 0):
        raise ValueError("atom number must be non-negative")
    return n


def chemical_potential(n_atoms, species, trap, u_tt=None, dims=3):
    """Thomas-Fermi chemical potential (J).

    ``dims=3`` is the closed form for an isotropic 3D trap with coupling in
    J m^3.  ``dims=1`` is the 1D analogue for a reduced coupling in J m,
    obtained from N = (4/3) mu R / g.  Works elementwise on arrays.
    """
    n = _check_atoms(n_atoms)
    if u_tt is None:
        u_tt = nonlinear_coupling(species, "tt")
    m, w = species.mass, trap.omega
    if dims == 3:
        mu = 0.5 * m * w**2 * (15.0 * n * u_tt / (4.0 * pi * m * w**2)) ** 0.4
    elif dims == 1:
        mu = (0.75 * n * u_tt * math.sqrt(0.5 * m * w**2)) ** (2.0 / 3.0)
    else:
        raise ValueError("dims must be 1 or 3")
    return float(mu) if np.ndim(mu) == 0 else mu


def thomas_fermi_radius(mu, species, trap):
    return math.sqrt(2.0 * max(mu, 0.0) / (species.mass * trap.omega**2))


def thomas_fermi_density(r, n_atoms, species, trap, u_tt=None, dims=3):
    """max(0, (mu - m w^2 r^2 / 2) / U) with mu from :func:`chemical_potential`.

    The gravitational term of the full profile is not modelled.
    """
    if u_tt is None:
        u_tt = nonlinear_coupling(species, "tt")
    if u_tt == 0:
        raise ValueError("Thomas-Fermi density is undefined for U_tt = 0")
    mu = chemical_potential(n_atoms, species, trap, u_tt, dims)
    r = np.asarray(r, dtype=float)
    return np.maximum(0.0, (mu - 0.5 * species.mass * trap.omega**2 * r**2) / u_tt)


def matched_transverse_area(n_atoms, species, trap):
    """Transverse area for which the 1D Thomas-Fermi chemical potential of
    ``n_atoms`` equals the 3D one.

    With this area the mean-field hill seen by outcoupled atoms in a 1D
    simulation has the same height as in the isotropic 3D condensate.
    """
    if n_atoms <= 0:
        raise ValueError("matched area needs a positive atom number")
    u3 = nonlinear_coupling(species, "tt")
    if u3 <= 0:
        raise ValueError("matched area needs a positive U_tt")
    mu = chemical_potential(n_atoms, species, trap, u3, dims=3)
    m, w = species.mass, trap.omega
    g = 4.0 * mu**1.5 / (3.0 * n_atoms * math.sqrt(0.5 * m * w**2))
    return u3 / g


def free_dispersion(k, species):
    """omega(k) = hbar k^2 / 2m."""
    return hbar * np.asarray(k) ** 2 / (2.0 * species.mass)
