"""Dispersive phase uncertainty from a step potential in one interferometer arm.

A beam with wavenumbers spread over [k, k + dk] crosses a barrier of height
V0 and width L.  Inside the barrier the local wavenumber is
q = sqrt(k^2 - kappa^2) with kappa^2 = 2 m V0 / hbar^2.  The first-order
phase spread is

    dphi = (L dk / 2) [hbar k (hbar^2 k^2 - 4 m V0) / (hbar^2 k^2 - 2 m V0)^(3/2) - 1].

With eps = kappa^2 / k^2 and s = sqrt(1 - eps) the bracket equals
(1 - 2 eps) / s^3 - 1 = eps (s^2 - s - 1) / ((1 + s) s^3), which is how it is
evaluated here: the subtraction of 1 is done analytically so small barriers
keep full relative precision.

The first-order formula is the k-derivative of the transit-delay phase
Phi(k) = (L/2)(k^2/q - k): the extra phase a component picks up from the
barrier's group delay, measured at fixed time.  The fixed-position phase
L (q - k) is also provided; its derivative has the different bracket
k/q - 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .errors import AtomLaserError

LARGE_SPREAD = 0.1


class EvanescentError(AtomLaserError, ValueError):
    """The probe energy does not exceed the barrier."""


@dataclass(frozen=True)
class StepProbe:
    k: float
    dk: float
    v0: float
    length: float
    mass: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not self.length > 0:
            raise ValueError("barrier width must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.v0 < 0:
            raise ValueError("only barriers (V0 >= 0) are supported")
        if self.dk < 0:
            raise ValueError("spread dk must be >= 0")

    @property
    def kappa_sq(self):
        return 2.0 * self.mass * self.v0 / hbar**2

    def allowed(self, k=None):
        k = self.k if k is None else k
        return hbar**2 * k**2 > 2.0 * self.mass * self.v0


def _check_allowed(p, k):
    if not p.allowed(k):
        raise EvanescentError(
            f"hbar^2 k^2 <= 2 m V0 at k = {k:.6g}: the probe tunnels and the formula does not apply")


def bracket_minus_one(k, kappa_sq):
    """hbar k (hbar^2 k^2 - 4 m V0) / (hbar^2 k^2 - 2 m V0)^(3/2) - 1."""
    eps = kappa_sq / k**2
    s = math.sqrt(1.0 - eps)
    return eps * (s * s - s - 1.0) / ((1.0 + s) * s**3)


def phase_uncertainty(p):
    """First-order phase spread between the k and k + dk components (rad)."""
    _check_allowed(p, p.k)
    if p.dk > LARGE_SPREAD * p.k:
        warnings.warn(f"dk/k = {p.dk / p.k:.3g} > {LARGE_SPREAD}: first-order formula is inaccurate",
                      stacklevel=2)
    return 0.5 * p.length * p.dk * bracket_minus_one(p.k, p.kappa_sq)


def transit_phase(k, kappa_sq, length):
    """(L/2)(k^2/q - k), written as (L/2) k kappa^2 / (q (k + q))."""
    q = np.sqrt(k**2 - kappa_sq)
    return 0.5 * length * k * kappa_sq / (q * (k + q))


def fixed_position_phase(k, kappa_sq, length):
    """L (q - k), written as -L kappa^2 / (q + k)."""
    q = np.sqrt(k**2 - kappa_sq)
    return -length * kappa_sq / (q + k)


_CONVENTIONS = {"transit": transit_phase, "fixed_position": fixed_position_phase}


def phase_uncertainty_exact(p, convention="transit"):
    """Phase difference Phi(k + dk) - Phi(k) without expanding in dk.

    ``convention="transit"`` uses the group-delay phase whose derivative is the
    first-order formula, so the two agree as dk/k -> 0.
    ``convention="fixed_position"`` uses the plain phase accumulated across
    the barrier relative to free propagation.
    """
    try:
        phase = _CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"convention must be one of {sorted(_CONVENTIONS)}") from None
    _check_allowed(p, p.k)
    _check_allowed(p, p.k + p.dk)
    if p.v0 == 0.0 or p.dk == 0.0:
        return 0.0
    return float(phase(p.k + p.dk, p.kappa_sq, p.length) - phase(p.k, p.kappa_sq, p.length))


def phase_table(k, dk, v0, length, mass):
    """Rows of (k, dk, V0, L, dphi, dphi_transit, dphi_fixed) over broadcast inputs."""
    k, dk, v0, length = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                              for a in (k, dk, v0, length)))
    rows = []
    for args in zip(k.ravel(), dk.ravel(), v0.ravel(), length.ravel()):
        p = StepProbe(*args, mass=mass)
        rows.append(args + (phase_uncertainty(p),
                            phase_uncertainty_exact(p, "transit"),
                            phase_uncertainty_exact(p, "fixed_position")))
    return rows
