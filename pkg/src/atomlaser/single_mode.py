"""Single-mode linear outcoupling model.

A condensate amplitude ``alpha`` in the trap ground state is coupled to a
discretized continuum of free beam modes ``beta(q)``::

    i d(alpha)/dt   = omega0 alpha - conj(Omega) sum_q conj(A(q)) beta(q) dq
    i d(beta(q))/dt = (omega(q) - delta) beta(q) - Omega A(q) alpha

with the overlap A(q) = <u_q| Lambda |t> and Lambda(x) = exp(i k0 x) for Raman
coupling, so the beam is kicked towards +k0.  For real Omega and a real
overlap these are the familiar amplitude equations of the Fourier-limited
atom laser.  ``beta`` is a density per unit q: atom numbers are Riemann sums
``sum |beta|^2 dq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, pi

from . import oscillator
from .errors import (CoverageError, DivergenceError, GridSizeError, ResonanceError,
                     RevivalError, StepSizeError)

COVERAGE_SIGMAS = 6.0
BOUNDARY_POINTS = 5
BOUNDARY_FRACTION = 1e-6
NORM_DRIFT_LIMIT = 1e-6
PHASE_STEP_LIMIT = 0.1


@dataclass(frozen=True)
class BeamModeGrid:
    """Uniform q samples with their dispersion omega(q) and dq/domega."""

    q: np.ndarray
    omega: np.ndarray
    dq_domega: np.ndarray
    kind: str = "free-space"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size < 2:
            raise ValueError("need at least two q samples")
        dq = np.diff(q)
        if np.any(dq <= 0):
            raise ValueError("q samples must be strictly increasing")
        if not np.allclose(dq, dq[0], rtol=1e-9, atol=0):
            raise ValueError("q samples must be uniformly spaced")
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("dispersion must be finite on every sample")

    @classmethod
    def free_space(cls, q, species):
        q = np.asarray(q, dtype=float)
        omega = hbar * q**2 / (2.0 * species.mass)
        with np.errstate(divide="ignore"):
            dq_domega = species.mass / (hbar * np.abs(q))
        return cls(q, omega, dq_domega, "free-space")

    @classmethod
    def uniform(cls, q_min, q_max, dq, species):
        n = int(round((q_max - q_min) / dq)) + 1
        return cls.free_space(q_min + dq * np.arange(n), species)

    @property
    def dq(self):
        return float(self.q[1] - self.q[0])

    def __len__(self):
        return self.q.size


@dataclass
class SingleModeState:
    alpha: complex
    beta: np.ndarray
    t: float = 0.0
    frame: str = "lab"

    def number(self, dq):
        return abs(self.alpha) ** 2 + float(np.sum(np.abs(self.beta) ** 2)) * dq


@dataclass(frozen=True)
class OverlapFunction:
    values: np.ndarray

    def at(self, grid, q):
        """Nearest-sample value (exact on grid points)."""
        i = int(np.argmin(np.abs(grid.q - q)))
        return self.values[i]


def momentum_width(species, trap):
    """sigma_k = sqrt(m w / 2 hbar), the rms width of |phi_0(k)|^2."""
    return math.sqrt(species.mass * trap.omega / (2.0 * hbar))


def overlap(species, trap, grid, coupling, check_coverage=True):
    """A(q) for a harmonic ground-state source and plane-wave beam modes.

    Plane waves exp(iqx)/sqrt(2 pi) make A(q) the momentum-space ground
    state evaluated at q - k0, normalized so that int |A|^2 dq = 1.  With
    ``check_coverage`` the grid must span k0 +- 6 sigma_k.
    """
    sigma = momentum_width(species, trap)
    lo, hi = coupling.k0 - COVERAGE_SIGMAS * sigma, coupling.k0 + COVERAGE_SIGMAS * sigma
    if check_coverage and (grid.q[0] > lo or grid.q[-1] < hi):
        raise CoverageError(
            f"q grid [{grid.q[0]:.4g}, {grid.q[-1]:.4g}] does not cover "
            f"[{lo:.4g}, {hi:.4g}] (k0 +- {COVERAGE_SIGMAS:g} sigma_k)")
    length = trap.oscillator_length(species)
    return OverlapFunction(oscillator.ground_state_momentum(grid.q - coupling.k0, length).astype(complex))


def resonant_wavenumber(omega0, detuning, species):
    """Positive root q0 of hbar q^2 / 2m = omega0 + delta."""
    target = omega0 + detuning
    if target <= 0:
        raise ResonanceError(f"omega0 + delta = {target:.4g} rad/s <= 0: no propagating beam mode")
    return math.sqrt(2.0 * species.mass * target / hbar)


def analytic_gamma(rabi, overlap_at_resonance, dq_domega):
    """Golden-rule decay rate 2 pi |Omega|^2 |A(q0)|^2 dq/domega (rad/s)."""
    if not (dq_domega > 0 and math.isfinite(dq_domega)):
        raise ResonanceError(f"dq/domega must be finite and positive, got {dq_domega!r}")
    return 2.0 * pi * abs(rabi) ** 2 * abs(overlap_at_resonance) ** 2 * dq_domega


def golden_rule_gamma(species, trap, coupling):
    """analytic_gamma for free-space beams and a harmonic ground-state source.

    Raman coupling selects the +k0 root only.  rf coupling (k0 = 0) decays
    into both +q0 and -q0, which doubles the rate.
    """
    omega0 = trap.ground_frequency()
    q0 = resonant_wavenumber(omega0, coupling.detuning, species)
    length = trap.oscillator_length(species)
    a_res = oscillator.ground_state_momentum(q0 - coupling.k0, length)
    gamma = analytic_gamma(coupling.rabi, a_res, species.mass / (hbar * q0))
    return 2.0 * gamma if coupling.scheme == "rf" else gamma


def free_space_gamma(rabi, k0, omega_t, species):
    """Closed form sqrt(pi) |Omega|^2 sqrt(m / hbar w_t) / k0.

    Evaluated exactly as written.  A normalized Gaussian overlap in
    :func:`analytic_gamma` gives twice this value; see the README.
    """
    if k0 == 0:
        raise ZeroDivisionError("free_space_gamma needs k0 > 0; use analytic_gamma for rf")
    if k0 < 0:
        raise ValueError("k0 must be positive")
    return math.sqrt(pi) * abs(rabi) ** 2 * math.sqrt(species.mass / (hbar * omega_t)) / k0


def spectrum_F(dw, t, gamma):
    """Finite-time line shape (1 - 2 cos(dw t) e^{-g t/2} + e^{-g t}) / (g^2/4 + dw^2)."""
    dw = np.asarray(dw, dtype=float)
    num = 1.0 - 2.0 * np.cos(dw * t) * math.exp(-0.5 * gamma * t) + math.exp(-gamma * t)
    return num / (0.25 * gamma**2 + dw**2)


@dataclass(frozen=True)
class FluxBound:
    flux: float
    ratio: float
    n0: float

    @property
    def passed(self):
        return self.ratio <= self.n0 * (1.0 + 1e-12)


def flux_linewidth_bound(n0, duration, linewidth, n_out=None):
    """Average flux over linewidth, to be compared with N0.

    ``n_out`` defaults to ``n0`` (the whole condensate drained in
    ``duration``); ``linewidth`` is an angular frequency.
    """
    if linewidth == 0:
        raise ValueError("linewidth must be non-zero")
    if duration <= 0:
        raise ValueError("duration must be positive")
    flux = (n0 if n_out is None else n_out) / duration
    return FluxBound(flux, flux / linewidth, n0)


@dataclass
class Trajectory:
    """Sampled evolution, always reported in the lab frame."""

    grid: BeamModeGrid
    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    n0: float
    frame: str
    dt: float
    extra: dict = field(default_factory=dict)

    @property
    def n_condensate(self):
        return np.abs(self.alpha) ** 2

    @property
    def n_beam(self):
        return np.sum(np.abs(self.beta) ** 2, axis=1) * self.grid.dq

    def state(self, i):
        return SingleModeState(self.alpha[i], self.beta[i], float(self.times[i]), "lab")


def _rk4_linear(f, y, t, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def evolve_single_mode(state, grid, overlap_fn, rabi, detuning, omega0, dt, t_end,
                       n_samples=101, frame="rotating", check_guards=True):
    """Integrate the amplitude equations with fixed-step RK4.

    Returns a :class:`Trajectory` sampled at ``n_samples`` equally spaced
    times from ``state.t`` to ``state.t + t_end``.  ``dt`` is reduced so that
    an integer number of steps separates consecutive samples.

    Guards (skipped with ``check_guards=False``): phase step
    max|domega| dt < 0.1, t_end below half the discretization revival time,
    norm drift below 1e-6, boundary modes below 1e-6 N0.
    """
    if frame not in ("rotating", "lab"):
        raise ValueError("frame must be 'rotating' or 'lab'")
    dq = grid.dq
    a_q = np.asarray(overlap_fn.values, dtype=complex)
    detune = omega0 - (grid.omega - detuning)
    n0 = state.number(dq)

    n_intervals = max(n_samples - 1, 1)
    steps_per = max(1, math.ceil(t_end / n_intervals / dt))
    dt = t_end / (n_intervals * steps_per)

    if check_guards:
        phase_step = float(np.max(np.abs(detune))) * dt
        if phase_step >= PHASE_STEP_LIMIT:
            raise StepSizeError(f"max|domega| dt = {phase_step:.3g} >= {PHASE_STEP_LIMIT}")
        i_res = int(np.argmin(np.abs(detune)))
        j = min(i_res, len(grid) - 2)
        spacing = abs(grid.omega[j + 1] - grid.omega[j])
        if spacing > 0 and t_end >= math.pi / spacing:
            raise RevivalError(
                f"run time {t_end:.4g} s exceeds half the revival time {math.pi / spacing:.4g} s; refine dq")

    coupling_beta = -rabi * a_q           # i d(beta)/dt term multiplying alpha
    coupling_alpha = -np.conj(rabi) * np.conj(a_q) * dq

    if frame == "rotating":
        y = np.concatenate(([state.alpha * np.exp(1j * omega0 * state.t)],
                            state.beta * np.exp(1j * (grid.omega - detuning) * state.t)))
        half_turn = np.exp(0.5j * detune * dt)

        def advance(y, t, n_steps):
            # phases exp(i domega t) advanced by multiplication, reset exactly per call
            ph = np.exp(1j * detune * t)
            a, b = y[0], y[1:]
            for _ in range(n_steps):
                ph_mid = ph * half_turn
                ph_end = ph_mid * half_turn
                ca0, ca1, ca2 = coupling_alpha * ph, coupling_alpha * ph_mid, coupling_alpha * ph_end
                cb0, cb1, cb2 = coupling_beta * ph.conj(), coupling_beta * ph_mid.conj(), coupling_beta * ph_end.conj()
                ka1 = -1j * np.dot(ca0, b)
                kb1 = -1j * cb0 * a
                ka2 = -1j * np.dot(ca1, b + 0.5 * dt * kb1)
                kb2 = -1j * cb1 * (a + 0.5 * dt * ka1)
                ka3 = -1j * np.dot(ca1, b + 0.5 * dt * kb2)
                kb3 = -1j * cb1 * (a + 0.5 * dt * ka2)
                ka4 = -1j * np.dot(ca2, b + dt * kb3)
                kb4 = -1j * cb2 * (a + dt * ka3)
                a = a + dt / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
                b = b + dt / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4)
                ph = ph_end
            return np.concatenate(([a], b))
    else:
        y = np.concatenate(([state.alpha], state.beta)).astype(complex)
        w_beta = grid.omega - detuning

        def rhs(t, y):
            out = np.empty_like(y)
            out[0] = -1j * (omega0 * y[0] + np.dot(coupling_alpha, y[1:]))
            out[1:] = -1j * (w_beta * y[1:] + coupling_beta * y[0])
            return out

        def advance(y, t, n_steps):
            for i in range(n_steps):
                y = _rk4_linear(rhs, y, t + i * dt, dt)
            return y

    def to_lab(t, y):
        if frame == "lab":
            return y[0], y[1:].copy()
        return (y[0] * np.exp(-1j * omega0 * t),
                y[1:] * np.exp(-1j * (grid.omega - detuning) * t))

    times = state.t + t_end * np.arange(n_intervals + 1) / n_intervals
    alphas = np.empty(n_intervals + 1, dtype=complex)
    betas = np.empty((n_intervals + 1, len(grid)), dtype=complex)
    alphas[0], betas[0] = to_lab(state.t, y)
    t = state.t
    for s in range(1, n_intervals + 1):
        y = advance(y, t, steps_per)
        t = times[s]
        alphas[s], betas[s] = to_lab(t, y)
        if check_guards:
            norm = abs(y[0]) ** 2 + float(np.sum(np.abs(y[1:]) ** 2)) * dq
            if not abs(norm - n0) <= NORM_DRIFT_LIMIT * n0:
                raise DivergenceError(f"norm drift {abs(norm - n0) / n0:.3g} exceeds {NORM_DRIFT_LIMIT}")
    if check_guards:
        edge = np.abs(betas[-1]) ** 2 * dq
        edge_pop = max(edge[:BOUNDARY_POINTS].sum(), edge[-BOUNDARY_POINTS:].sum())
        if edge_pop > BOUNDARY_FRACTION * n0:
            raise GridSizeError(
                f"boundary modes hold {edge_pop / n0:.3g} N0 (> {BOUNDARY_FRACTION:g}); widen the q grid")
    return Trajectory(grid, times, alphas, betas, n0, frame, dt)


@dataclass(frozen=True)
class RunPlan:
    """Grid and step choices for a single-mode run aimed at gamma t_end."""

    grid: BeamModeGrid
    overlap: OverlapFunction
    detuning: float
    gamma: float
    dt: float
    t_end: float


def plan_run(species, trap, coupling, gamma_t=10.0, window=450.0, revival_safety=1.25,
             detuning=None, max_modes=20000, points_per_sigma=20):
    """Choose a q window, spacing and step for a resonant single-mode run.

    The detuning defaults to resonance with the k0 component of the source
    (omega(k0) = omega0 + delta).  The q window spans ``window`` golden-rule
    widths around resonance, capped at the +-6 sigma_k support of the
    overlap.  A window narrower than that support sees an essentially flat
    overlap, which is all the decay needs.  Spacing keeps t_end below the
    revival limit by ``revival_safety`` and resolves sigma_k with
    ``points_per_sigma`` modes.
    """
    omega0 = trap.ground_frequency()
    if detuning is None:
        detuning = hbar * coupling.k0**2 / (2.0 * species.mass) - omega0
    coupling = type(coupling)(coupling.scheme, coupling.rabi_magnitude, coupling.k0,
                              detuning, coupling.rabi_phase)
    gamma = golden_rule_gamma(species, trap, coupling)
    if gamma <= 0:
        raise ValueError("zero coupling gives no decay to plan for")
    t_end = gamma_t / gamma
    q0 = resonant_wavenumber(omega0, detuning, species)
    v = hbar * q0 / species.mass
    sigma = momentum_width(species, trap)
    half = min(window * gamma / v, COVERAGE_SIGMAS * sigma)
    dq = math.pi / (revival_safety * t_end * v)
    dq = min(dq, half / 10.0, sigma / points_per_sigma)
    lo, hi = q0 - half, q0 + half
    if sigma * COVERAGE_SIGMAS <= window * gamma / v:
        lo = min(lo, coupling.k0 - COVERAGE_SIGMAS * sigma)
        hi = max(hi, coupling.k0 + COVERAGE_SIGMAS * sigma)
    n = int(math.ceil((hi - lo) / dq)) + 1
    if n > max_modes:
        raise GridSizeError(f"plan needs {n} beam modes (> {max_modes})")
    grid = BeamModeGrid.free_space(lo + dq * np.arange(n), species)
    ov = overlap(species, trap, grid, coupling, check_coverage=False)
    max_detune = float(np.max(np.abs(omega0 - (grid.omega - detuning))))
    dt = 0.9 * PHASE_STEP_LIMIT / max_detune
    return RunPlan(grid, ov, detuning, gamma, dt, t_end)
