"""Multimode linear outcoupling: trap eigenmodes coupled to box beam modes.

Trap modes are harmonic-oscillator eigenstates with frequencies
w_t(n + 1/2).  Beam modes are plane waves exp(i k_n x)/sqrt(L) on a periodic
box of length L, so the mode spacing is dk = 2 pi / L.  The coupling matrix
is stored in continuum normalization, A_mn = phi~_m(k_n - k0), so that row
norms sum to one with weight dk and the m = 0 row equals the single-mode
overlap; the dynamics use A_mn sqrt(dk).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar

from . import oscillator
from .errors import CoverageError, DivergenceError, GridSizeError, ResonanceError, StepSizeError
from .single_mode import BOUNDARY_FRACTION, BOUNDARY_POINTS, NORM_DRIFT_LIMIT, PHASE_STEP_LIMIT


@dataclass(frozen=True)
class TrapModeBasis:
    n_modes: int
    omega_t: float
    length: float

    @classmethod
    def harmonic(cls, n_modes, species, trap):
        return cls(n_modes, trap.omega, trap.oscillator_length(species))

    @property
    def frequencies(self):
        return self.omega_t * (np.arange(self.n_modes) + 0.5)

    def position(self, x):
        return oscillator.position_eigenfunctions(self.n_modes - 1, x, self.length)

    def momentum(self, k):
        return oscillator.momentum_eigenfunctions(self.n_modes - 1, k, self.length)

    def momentum_extent(self):
        """|k| beyond which every basis function is negligible (~1e-16)."""
        return (math.sqrt(2.0 * self.n_modes + 1.0) + 9.0) / self.length


@dataclass(frozen=True)
class BoxBeamModes:
    """Plane waves on a periodic box, k_n = k_offset + 2 pi n / L."""

    k: np.ndarray
    box_length: float

    @classmethod
    def around(cls, k_center, half_width, box_length):
        dk = 2.0 * math.pi / box_length
        n_lo = math.floor((k_center - half_width) / dk)
        n_hi = math.ceil((k_center + half_width) / dk)
        return cls(dk * np.arange(n_lo, n_hi + 1), box_length)

    @property
    def dk(self):
        return 2.0 * math.pi / self.box_length

    def omega(self, species):
        return hbar * self.k**2 / (2.0 * species.mass)

    def __len__(self):
        return self.k.size


@dataclass(frozen=True)
class CouplingMatrix:
    values: np.ndarray   # shape (n_trap_modes, n_beam_modes)
    dk: float

    @property
    def discrete(self):
        return self.values * math.sqrt(self.dk)


def coupling_matrix(basis, beams, coupling, check_coverage=True):
    """A_mn = phi~_m(k_n - k0): trap mode m transferred into beam mode n."""
    shifted = beams.k - coupling.k0
    if check_coverage:
        need = basis.momentum_extent()
        if shifted[0] > -need or shifted[-1] < need:
            raise CoverageError(
                f"beam grid spans k - k0 in [{shifted[0]:.4g}, {shifted[-1]:.4g}], "
                f"needs +-{need:.4g} for {basis.n_modes} modes")
    return CouplingMatrix(basis.momentum(shifted), beams.dk)


@dataclass
class MultimodeState:
    alpha: np.ndarray
    beta: np.ndarray
    t: float = 0.0
    frame: str = "lab"

    def number(self):
        return float(np.sum(np.abs(self.alpha) ** 2) + np.sum(np.abs(self.beta) ** 2))


@dataclass
class MultimodeTrajectory:
    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    frame: str
    dt: float
    extra: dict = field(default_factory=dict)

    @property
    def number(self):
        return np.sum(np.abs(self.alpha) ** 2, axis=1) + np.sum(np.abs(self.beta) ** 2, axis=1)


def hamiltonian(basis, beams, matrix, rabi, detuning, species):
    """Dense Hermitian generator of (alpha, beta), in units of hbar."""
    m, n = basis.n_modes, len(beams)
    h = np.zeros((m + n, m + n), dtype=complex)
    h[np.arange(m), np.arange(m)] = basis.frequencies
    h[m + np.arange(n), m + np.arange(n)] = beams.omega(species) - detuning
    c = -rabi * matrix.discrete.T        # (n, m): beta_n <- alpha_m
    h[m:, :m] = c
    h[:m, m:] = c.conj().T
    return h


def evolve_multimode(state, basis, beams, matrix, rabi, detuning, species, dt, t_end,
                     n_samples=101, frame="rotating", check_guards=True):
    """RK4 integration of the multimode amplitude equations.

    In the rotating frame alpha~_m = alpha_m exp(i w_tm t) and
    beta~_n = beta_n exp(i (w_un - delta) t) only the couplings remain,
    modulated by exp(i (w_tm - (w_un - delta)) t).  Output is in the lab
    frame.  Guards mirror :func:`atomlaser.single_mode.evolve_single_mode`
    except for the revival check, which is the caller's responsibility
    through the box length.
    """
    if frame not in ("rotating", "lab"):
        raise ValueError("frame must be 'rotating' or 'lab'")
    w_t = basis.frequencies
    w_u = beams.omega(species) - detuning
    c = matrix.discrete                               # (m, n)
    beta_from_alpha = -rabi * c.T                     # (n, m)
    alpha_from_beta = -np.conj(rabi) * c.conj()       # (m, n)
    detune = w_t[:, None] - w_u[None, :]              # (m, n)
    n0 = state.number()

    n_intervals = max(n_samples - 1, 1)
    steps_per = max(1, math.ceil(t_end / n_intervals / dt))
    dt = t_end / (n_intervals * steps_per)
    if check_guards:
        phase_step = float(np.max(np.abs(detune))) * dt
        if frame == "lab":
            phase_step = max(phase_step, float(max(np.max(np.abs(w_t)), np.max(np.abs(w_u)))) * dt)
        if phase_step >= PHASE_STEP_LIMIT:
            raise StepSizeError(f"max|domega| dt = {phase_step:.3g} >= {PHASE_STEP_LIMIT}")

    m = basis.n_modes
    if frame == "rotating":
        def rhs(t, y):
            ph = np.exp(1j * detune * t)
            a, b = y[:m], y[m:]
            return np.concatenate((-1j * (alpha_from_beta * ph) @ b,
                                   -1j * (beta_from_alpha * ph.T.conj()) @ a))

        y = np.concatenate((state.alpha * np.exp(1j * w_t * state.t),
                            state.beta * np.exp(1j * w_u * state.t))).astype(complex)
    else:
        def rhs(t, y):
            a, b = y[:m], y[m:]
            return np.concatenate((-1j * (w_t * a + alpha_from_beta @ b),
                                   -1j * (w_u * b + beta_from_alpha @ a)))

        y = np.concatenate((state.alpha, state.beta)).astype(complex)

    def to_lab(t, y):
        if frame == "lab":
            return y[:m].copy(), y[m:].copy()
        return y[:m] * np.exp(-1j * w_t * t), y[m:] * np.exp(-1j * w_u * t)

    times = state.t + t_end * np.arange(n_intervals + 1) / n_intervals
    alphas = np.empty((n_intervals + 1, m), dtype=complex)
    betas = np.empty((n_intervals + 1, len(beams)), dtype=complex)
    alphas[0], betas[0] = to_lab(state.t, y)
    t = state.t
    for s in range(1, n_intervals + 1):
        for _ in range(steps_per):
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = rhs(t + dt, y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += dt
        t = times[s]
        alphas[s], betas[s] = to_lab(t, y)
        if check_guards:
            norm = float(np.sum(np.abs(y) ** 2))
            if not abs(norm - n0) <= NORM_DRIFT_LIMIT * n0:
                raise DivergenceError(f"norm drift {abs(norm - n0) / n0:.3g} exceeds {NORM_DRIFT_LIMIT}")
    if check_guards and len(beams) > 2 * BOUNDARY_POINTS:
        edge = np.abs(betas[-1]) ** 2
        edge_pop = max(edge[:BOUNDARY_POINTS].sum(), edge[-BOUNDARY_POINTS:].sum())
        if edge_pop > BOUNDARY_FRACTION * n0:
            raise GridSizeError(f"boundary beam modes hold {edge_pop / n0:.3g} N0")
    return MultimodeTrajectory(times, alphas, betas, frame, dt)


def resonant_momentum(n, detuning, k0, species, trap):
    """k_n = sqrt(2 m (delta + w_n) / hbar) - k0, the source momentum that
    trap mode n outcouples from."""
    w_n = trap.omega * (n + 0.5)
    arg = detuning + w_n
    if np.any(np.asarray(arg) <= 0):
        raise ResonanceError(f"delta + w_n <= 0 for mode {n}: no resonant propagating state")
    return np.sqrt(2.0 * species.mass * arg / hbar) - k0


def ground_resonant_detuning(k0, species, trap):
    """delta = hbar k0^2 / 2m - w_t0: the zero-momentum component of the
    ground state is exactly on resonance."""
    return hbar * k0**2 / (2.0 * species.mass) - 0.5 * trap.omega


@dataclass(frozen=True)
class ModeIntensities:
    n: np.ndarray
    k_resonant: np.ndarray
    intensity: np.ndarray       # normalized to max 1
    raw: np.ndarray             # |alpha_n|^2 |A_n(k_n)|^2
    no_resonance: np.ndarray    # True where delta + w_n <= 0


def relative_intensities(alpha, basis, detuning, k0, species, trap):
    """|alpha_n|^2 |A_n(k_n)|^2 per trap mode, normalized to a maximum of 1.

    A_n is evaluated analytically at the continuous resonant momentum.
    Modes without a propagating resonance get intensity 0 and a flag.
    """
    alpha = np.asarray(alpha, dtype=complex)
    n = np.arange(basis.n_modes)
    if alpha.shape != n.shape:
        raise ValueError("need one amplitude per basis mode")
    w_n = trap.omega * (n + 0.5)
    flagged = detuning + w_n <= 0
    k_res = np.full(n.shape, np.nan)
    ok = ~flagged
    k_res[ok] = np.sqrt(2.0 * species.mass * (detuning + w_n[ok]) / hbar) - k0
    raw = np.zeros(n.shape)
    psi = oscillator.hermite_functions(basis.n_modes - 1, np.nan_to_num(k_res) * basis.length)
    vals = psi[n, n] ** 2 * basis.length
    raw[ok] = np.abs(alpha[ok]) ** 2 * vals[ok]
    top = raw.max()
    if top <= 0:
        raise ResonanceError("no mode has a non-zero resonant intensity")
    return ModeIntensities(n, k_res, raw / top, raw, flagged)


def box_length_for(resolution_k):
    """Periodic box length giving beam mode spacing ``resolution_k``."""
    if resolution_k <= 0:
        raise ValueError("resolution must be positive")
    return 2.0 * math.pi / resolution_k
