"""Coupled one-dimensional Gross-Pitaevskii solver for trapped (t) and
untrapped (u) fields.

    i hbar dpsi_t/dt = [-hbar^2/2m d^2 + m w^2 x^2/2 + g_tt|psi_t|^2 + g_tu|psi_u|^2] psi_t
                       - hbar Omega* exp(-i k0 x) psi_u
    i hbar dpsi_u/dt = [-hbar^2/2m d^2 - hbar delta(t) + g_uu|psi_u|^2 + g_tu|psi_t|^2] psi_u
                       - hbar Omega exp(i k0 x) psi_t

with g_ij = U_ij / A the couplings reduced by a transverse area A.  Fields are
in sqrt(atoms/m).

Time stepping is Strang splitting, K(dt/2) P(dt/2) C(dt) P(dt/2) K(dt/2):
K is the kinetic operator in k-space (for psi_u it also carries the uniform
-hbar delta term, which keeps the large kinetic and detuning phases of a
resonant pair in the same sub-step), P the trap, mean-field and absorber
phases in x-space, and C the coupling, applied as the exact pointwise 2x2
rotation.  Adjacent kinetic half-steps are merged between output times.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
from scipy.constants import hbar

from . import physical_model as pm
from .errors import (ConfigError, DivergenceError, GridSizeError, NumericalGuardError,
                     StepSizeError)

EDGE_POINTS = 8
EDGE_THRESHOLD = 1e-6
NORM_TOLERANCE = 1e-8      # relative, per 1000 steps
ROUNDOFF_FLOOR = 1e-14     # relative change per imaginary-time step


class OutcouplingPointError(ConfigError):
    """Requested outcoupling point lies outside the condensate."""


class ConvergenceError(NumericalGuardError):
    def __init__(self, message):
        super().__init__("ground-state-convergence", message)


def _workers():
    try:
        return max(1, int(os.environ.get("ATOMLASER_THREADS", "1")))
    except ValueError:
        raise ConfigError("ATOMLASER_THREADS must be an integer") from None


# --------------------------------------------------------------------------- grid

@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid x_j = origin + j dx, j = 0..n-1, n a power of two.

    ``k`` is in FFT (numpy) ordering: 0, dk, ..., -dk.
    """

    n: int
    extent: float
    origin: float | None = None

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise GridSizeError(f"grid point count must be a power of two, got {self.n}")
        if not self.extent > 0:
            raise ValueError("grid extent must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", -0.5 * self.extent)

    @classmethod
    def from_spacing(cls, n, dx, left=None):
        """Grid of ``n`` points spaced ``dx`` starting at ``left``
        (default: centered on x = 0)."""
        return cls(n, n * dx, left)

    @property
    def dx(self):
        return self.extent / self.n

    @property
    def dk(self):
        return 2.0 * math.pi / self.extent

    @property
    def x(self):
        return self.origin + self.dx * np.arange(self.n)

    @property
    def k(self):
        return 2.0 * math.pi * np.fft.fftfreq(self.n, self.dx)

    @property
    def k_max(self):
        return math.pi / self.dx

    def max_dt(self, mass):
        """Kinetic step bound dx^2 m / (pi hbar): the largest kinetic phase
        per step stays below pi/2."""
        return self.dx**2 * mass / (math.pi * hbar)


# ------------------------------------------------------------------------- system

@dataclass(frozen=True)
class GPESystem:
    """Species, trap and the transverse area of the 1D reduction."""

    species: pm.AtomSpecies
    trap: pm.TrapConfig
    area: float

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError("transverse area must be positive")

    @classmethod
    def with_default_area(cls, species, trap):
        return cls(species, trap, pm.default_transverse_area(species, trap))

    @classmethod
    def with_matched_area(cls, species, trap, n0):
        return cls(species, trap, pm.matched_transverse_area(n0, species, trap))

    @property
    def couplings(self):
        return pm.NonlinearCouplings.from_species(self.species, self.area)

    @property
    def g(self):
        """(g_tt, g_uu, g_tu) in J m."""
        return self.couplings.reduced

    @property
    def mass(self):
        return self.species.mass

    @classmethod
    def with_calibrated_area(cls, grid, species, trap, n0, rtol=1e-6, max_iter=20, **gs_kwargs):
        """Area for which the simulated 1D ground state has the 3D Thomas-Fermi
        chemical potential mu(N0), including the kinetic correction that the
        closed-form match of :func:`atomlaser.physical_model.matched_transverse_area`
        leaves out.  Fixed-point iteration on A -> A (mu_1D / mu_3D)^(3/2),
        the Thomas-Fermi scaling of mu with the reduced coupling.
        """
        target = pm.chemical_potential(n0, species, trap)
        system = cls.with_matched_area(species, trap, n0)
        for _ in range(max_iter):
            mu = ground_state(grid, system, n0, **gs_kwargs).mu
            if abs(mu / target - 1.0) < rtol:
                return system
            system = cls(species, trap, system.area * (mu / target) ** 1.5)
        raise ConvergenceError("transverse-area calibration did not converge")

    def trap_potential(self, x):
        return 0.5 * self.mass * self.trap.omega**2 * np.asarray(x) ** 2

    def mu(self, n):
        """1D Thomas-Fermi chemical potential of this reduction (J)."""
        return pm.chemical_potential(n, self.species, self.trap, self.g[0], dims=1)


@dataclass(frozen=True)
class Absorber:
    """Imaginary potential -i hbar W(x) on the untrapped field.

    W rises quadratically from 0 to ``strength`` (rad/s) across the outer
    ``fraction`` of the grid on each listed side.
    """

    strength: float
    fraction: float = 0.1
    sides: tuple = ("left", "right")

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("absorber strength must be >= 0")
        if not 0 < self.fraction < 0.5:
            raise ValueError("absorber fraction must lie in (0, 0.5)")
        bad = set(self.sides) - {"left", "right"}
        if bad:
            raise ValueError(f"unknown absorber sides {sorted(bad)}")

    def profile(self, grid):
        x = grid.x
        width = self.fraction * grid.extent
        w = np.zeros(grid.n)
        if "left" in self.sides:
            onset = grid.origin + width
            d = np.clip((onset - x) / width, 0.0, None)
            w = np.maximum(w, d**2)
        if "right" in self.sides:
            onset = grid.origin + grid.extent - grid.dx - width
            d = np.clip((x - onset) / width, 0.0, None)
            w = np.maximum(w, d**2)
        return self.strength * w


# -------------------------------------------------------------------------- state

@dataclass
class FieldState:
    psi_t: np.ndarray
    psi_u: np.ndarray
    t: float
    dx: float
    n0: float
    n_absorbed: float = 0.0

    @property
    def n_trapped(self):
        return float(np.sum(np.abs(self.psi_t) ** 2) * self.dx)

    @property
    def n_beam(self):
        return float(np.sum(np.abs(self.psi_u) ** 2) * self.dx)

    @property
    def n_total(self):
        return self.n_trapped + self.n_beam + self.n_absorbed

    @property
    def outcoupled_fraction(self):
        return 1.0 - self.n_trapped / self.n0

    def copy(self):
        return replace(self, psi_t=self.psi_t.copy(), psi_u=self.psi_u.copy())


# ---------------------------------------------------------------------- detuning

def initial_line_center(n0, k0, species, trap, u_tt=None):
    """k_cent = sqrt(k0^2 + 2 m mu(N0) / hbar^2) with the 3D mu."""
    mu = pm.chemical_potential(n0, species, trap, u_tt)
    return math.sqrt(k0**2 + 2.0 * species.mass * mu / hbar**2)


def chirp_compensated_detuning(mu_t, mu_0, r0, k0, species, trap):
    """delta(t) in rad/s keeping E_out = hbar delta + mu(t) fixed.

    hbar delta = hbar^2 k0^2 / 2m - mu(t) + mu(0) - m w^2 r0^2 / 2.
    """
    m = species.mass
    return (hbar**2 * k0**2 / (2.0 * m) - mu_t + mu_0
            - 0.5 * m * trap.omega**2 * r0**2) / hbar


@dataclass(frozen=True)
class DetuningSchedule:
    """Constant delta, or the chirp-compensating sweep driven by the live
    trapped atom number.

    For the sweep, ``mu_of_n`` maps N to the chemical potential in J.  The
    default (see :meth:`compensated`) is the closed-form Thomas-Fermi mu of
    the simulated (1D-reduced) system.
    """

    kind: str
    delta: float = 0.0
    k0: float = 0.0
    r0: float = 0.0
    n0: float = 0.0
    species: pm.AtomSpecies | None = None
    trap: pm.TrapConfig | None = None
    mu_of_n: object = None

    @classmethod
    def constant(cls, delta):
        return cls("constant", delta=float(delta))

    @classmethod
    def resonant_center(cls, k0, species):
        """delta = hbar k0^2 / 2m: outcouple from the condensate center."""
        return cls.constant(hbar * k0**2 / (2.0 * species.mass))

    @classmethod
    def compensated(cls, k0, r0, n0, system, mu_of_n=None):
        mu_of_n = system.mu if mu_of_n is None else mu_of_n
        mu0 = mu_of_n(n0)
        r_tf = pm.thomas_fermi_radius(mu0, system.species, system.trap)
        if r0 < 0 or r0 > r_tf:
            raise OutcouplingPointError(
                f"outcoupling point r0 = {r0:.4g} m lies outside the condensate "
                f"(Thomas-Fermi radius {r_tf:.4g} m)")
        return cls("compensated", k0=k0, r0=r0, n0=n0, species=system.species,
                   trap=system.trap, mu_of_n=mu_of_n)

    def __call__(self, t, n_now=None):
        if self.kind == "constant":
            return self.delta
        n_now = self.n0 if n_now is None else n_now
        return chirp_compensated_detuning(self.mu_of_n(n_now), self.mu_of_n(self.n0),
                                          self.r0, self.k0, self.species, self.trap)

    def output_energy(self, t, n_now=None):
        """E_out = hbar delta(t) + mu(t) in J."""
        n_now = self.n0 if n_now is None else n_now
        mu = self.mu_of_n(n_now) if self.mu_of_n is not None else 0.0
        return hbar * self(t, n_now) + mu


def weak_outcoupling_budget(n0, d_omega, species, trap, u_tt=None):
    """Largest atom number that may be outcoupled while mu(N) moves by less
    than hbar d_omega.

    From Delta N dmu/dN < hbar d_omega with the 3D Thomas-Fermi mu:
    Delta N < (5 hbar / m w^2) (4 pi m w^2 / 15 U_tt)^(2/5) N0^(3/5) d_omega.
    """
    if d_omega < 0:
        raise ValueError("linewidth target must be >= 0")
    if u_tt is None:
        u_tt = pm.nonlinear_coupling(species, "tt")
    m, w = species.mass, trap.omega
    return (5.0 * hbar / (m * w**2) * (4.0 * math.pi * m * w**2 / (15.0 * u_tt)) ** 0.4
            * n0**0.6 * d_omega)


# -------------------------------------------------------------------- ground state

@dataclass
class GroundState:
    state: FieldState
    mu: float            # J
    residual: float      # ||(H - mu) psi|| / (mu_scale ||psi||)
    steps: int


def _hamiltonian_apply(psi, grid, system, kin_j, v_j):
    """(K + V + g|psi|^2) psi in J sqrt(atoms/m)."""
    kpsi = scipy.fft.ifft(kin_j * scipy.fft.fft(psi, workers=_workers()), workers=_workers())
    return kpsi + (v_j + system.g[0] * np.abs(psi) ** 2) * psi


def ground_state(grid, system, n0, tol=1e-10, stages=3, max_steps=200000, dt_start=None):
    """Trapped ground state with N0 atoms by imaginary-time propagation.

    Strang-split imaginary-time steps with renormalization, starting from the
    Thomas-Fermi profile (Gaussian when g_tt = 0).  A stage at fixed step tau
    ends when the estimated distance to its fixed point,
    ||dpsi|| / (||psi|| w tau), drops below ``tol``.  Each of the ``stages``
    stages divides tau by 4, shrinking the splitting bias of the fixed point
    by the same factor.
    """
    if not n0 > 0:
        raise ValueError("N0 must be positive")
    m, w = system.mass, system.trap.omega
    x, k = grid.x, grid.k
    kin_j = hbar**2 * k**2 / (2.0 * m)
    v_j = system.trap_potential(x)
    g = system.g[0]
    length = math.sqrt(hbar / (m * w))
    if g > 0:
        mu_guess = system.mu(n0)
        psi = np.sqrt(np.clip((mu_guess - v_j) / g, 0.0, None)) + 0j
    else:
        mu_guess = 0.5 * hbar * w
        psi = np.exp(-0.5 * (x / length) ** 2) + 0j
    psi *= math.sqrt(n0 / (np.sum(np.abs(psi) ** 2) * grid.dx))
    workers = _workers()

    energy_scale = max(mu_guess, 0.5 * hbar * w)
    tau = dt_start if dt_start is not None else 0.2 * hbar / energy_scale
    steps = 0
    for _ in range(stages):
        half_k = np.exp(-0.5 * kin_j * tau / hbar)
        rate = w * tau
        while True:
            old = psi
            psi = scipy.fft.ifft(half_k * scipy.fft.fft(psi, workers=workers), workers=workers)
            psi *= np.exp(-(v_j + g * np.abs(psi) ** 2) * tau / hbar)
            psi = scipy.fft.ifft(half_k * scipy.fft.fft(psi, workers=workers), workers=workers)
            psi *= math.sqrt(n0 / (np.sum(np.abs(psi) ** 2) * grid.dx))
            steps += 1
            change = np.linalg.norm(psi - old) / np.linalg.norm(psi)
            if change < max(tol * rate, ROUNDOFF_FLOOR):
                break
            if steps >= max_steps:
                raise ConvergenceError(f"ground state not converged after {max_steps} steps")
        tau /= 4.0
    hpsi = _hamiltonian_apply(psi, grid, system, kin_j, v_j)
    mu = float(np.real(np.vdot(psi, hpsi)) * grid.dx / n0)
    resid = float(np.linalg.norm(hpsi - mu * psi) / (energy_scale * np.linalg.norm(psi)))
    # the ground state is real and positive: drop the round-off phase
    psi = np.abs(psi).astype(complex)
    state = FieldState(psi, np.zeros_like(psi), 0.0, grid.dx, n0)
    return GroundState(state, mu, resid, steps)


# ---------------------------------------------------------------------- evolution

@dataclass
class GPETrajectory:
    times: np.ndarray
    n_trapped: np.ndarray
    n_beam: np.ndarray
    n_absorbed: np.ndarray
    detuning: np.ndarray
    snapshots: list
    final: FieldState
    dt: float
    steps: int
    norm_error: float

    @property
    def outcoupled_fraction(self):
        return 1.0 - self.n_trapped / self.final.n0


def evolve_gpe(state, grid, system, coupling, schedule, dt, t_end, sample_every=None,
               snapshot_times=(), absorber=None, check_guards=True):
    """Strang split-step evolution of the coupled fields.

    Parameters
    ----------
    state : FieldState
        Initial fields; not modified.
    coupling : CouplingConfig
        Rabi frequency (rad/s) and kick k0.  ``rabi_magnitude = 0`` decouples.
    schedule : DetuningSchedule
    dt : float
        Time step.  May be negative for backward evolution when no absorber
        is present.
    t_end : float
        Duration, an integer multiple of ``dt``.
    sample_every : int, optional
        Steps between diagnostic samples (default: about 200 samples).
    snapshot_times : sequence of float
        Elapsed times (multiples of ``dt``) at which full fields are kept.
    absorber : Absorber, optional
    """
    m = system.mass
    if dt == 0:
        raise StepSizeError("dt must be non-zero")
    if abs(dt) >= grid.max_dt(m):
        raise StepSizeError(f"|dt| = {abs(dt):.3g} s exceeds dx^2 m / (pi hbar) = {grid.max_dt(m):.3g} s")
    if absorber is not None and absorber.strength > 0 and dt < 0:
        raise ValueError("backward evolution is not defined with an absorber")
    n_steps = int(round(t_end / dt))
    if n_steps < 0 or abs(n_steps * dt - t_end) > 1e-6 * abs(dt):
        raise ValueError("t_end must be a non-negative integer multiple of dt")
    if sample_every is None:
        sample_every = max(1, n_steps // 200)
    snap_steps = set()
    for ts in snapshot_times:
        s = int(round(ts / dt))
        if abs(s * dt - ts) > 1e-6 * abs(dt) or not 0 <= s <= n_steps:
            raise ValueError(f"snapshot time {ts} is not a step multiple inside the run")
        snap_steps.add(s)
    stops = sorted(set(range(0, n_steps + 1, sample_every)) | snap_steps | {n_steps})

    g_tt, g_uu, g_tu = system.g
    x = grid.x
    kin = hbar * grid.k**2 / (2.0 * m)                       # rad/s
    v_t = system.trap_potential(x) / hbar                    # rad/s
    half_kin = np.exp(-0.5j * kin * dt)
    full_kin = half_kin * half_kin
    rabi = coupling.rabi_magnitude
    theta = rabi * dt
    cos_c, sin_c = math.cos(theta), math.sin(theta)
    lam = np.exp(1j * (coupling.k0 * x + coupling.rabi_phase)) if rabi > 0 else None
    w_abs = absorber.profile(grid) if absorber is not None and absorber.strength > 0 else None
    if w_abs is not None:
        absorb_idx = np.nonzero(w_abs)[0]
        absorb_half = np.exp(-w_abs[absorb_idx] * 0.5 * dt)
    workers = _workers()

    psi_t = state.psi_t.astype(complex, copy=True)
    psi_u = state.psi_u.astype(complex, copy=True)
    dx = grid.dx
    n_abs = state.n_absorbed
    n_total0 = state.n_total
    t0 = state.t

    def n_trapped_now():
        return float(np.sum(psi_t.real**2 + psi_t.imag**2) * dx)

    def kinetic(factor, phase_u):
        nonlocal psi_t, psi_u
        psi_t = scipy.fft.ifft(factor * scipy.fft.fft(psi_t, workers=workers), workers=workers)
        psi_u = scipy.fft.ifft(factor * scipy.fft.fft(psi_u, workers=workers), workers=workers)
        psi_u *= np.exp(1j * phase_u)

    def potential(tau):
        nonlocal psi_t, psi_u, n_abs
        d_t = psi_t.real**2 + psi_t.imag**2
        d_u = psi_u.real**2 + psi_u.imag**2
        psi_t *= np.exp(-1j * tau * (v_t + (g_tt * d_t + g_tu * d_u) / hbar))
        psi_u *= np.exp(-1j * tau * ((g_uu * d_u + g_tu * d_t) / hbar))
        if w_abs is not None:
            before = d_u[absorb_idx]
            psi_u[absorb_idx] *= absorb_half
            n_abs += float(np.sum(before * (1.0 - absorb_half**2)) * dx)

    def couple():
        nonlocal psi_t, psi_u
        if lam is None:
            return
        new_t = cos_c * psi_t + 1j * sin_c * np.conj(lam) * psi_u
        psi_u = cos_c * psi_u + 1j * sin_c * lam * psi_t
        psi_t = new_t

    times, nts, nus, nabs, dets, snaps = [], [], [], [], [], []
    worst = 0.0

    def record(step):
        nonlocal worst
        t = t0 + step * dt
        nt = n_trapped_now()
        nu = float(np.sum(np.abs(psi_u) ** 2) * dx)
        if not (math.isfinite(nt) and math.isfinite(nu)):
            raise DivergenceError(f"non-finite field at t = {t:.6g} s")
        err = abs(nt + nu + n_abs - n_total0) / n_total0 if n_total0 > 0 else 0.0
        worst = max(worst, err)
        if check_guards and err > NORM_TOLERANCE * max(1.0, step / 1000.0):
            raise DivergenceError(f"norm accounting violated: relative error {err:.3g} after {step} steps")
        if check_guards and nu > 0:
            d_u = np.abs(psi_u) ** 2
            edge = max(d_u[:EDGE_POINTS].max(), d_u[-EDGE_POINTS:].max())
            if edge > EDGE_THRESHOLD * d_u.max():
                raise GridSizeError(f"beam reaches the grid edge at t = {t:.6g} s "
                                    f"(edge/peak density {edge / d_u.max():.3g})")
        times.append(t)
        nts.append(nt)
        nus.append(nu)
        nabs.append(n_abs)
        dets.append(schedule(t, nt))
        if step in snap_steps:
            snaps.append(FieldState(psi_t.copy(), psi_u.copy(), t, dx, state.n0, n_abs))

    record(0)
    step = 0
    for stop in stops[1:]:
        count = stop - step
        if count <= 0:
            continue
        # first kinetic half-step of this block covers [t, t + dt/2]
        t_here = t0 + step * dt
        nt = n_trapped_now()
        kinetic(half_kin, schedule(t_here + 0.25 * dt, nt) * 0.5 * dt)
        for i in range(count):
            potential(0.5 * dt)
            couple()
            potential(0.5 * dt)
            t_mid = t0 + (step + i + 1) * dt
            nt = n_trapped_now()
            if i < count - 1:
                kinetic(full_kin, schedule(t_mid, nt) * dt)
            else:
                kinetic(half_kin, schedule(t_mid - 0.25 * dt, nt) * 0.5 * dt)
        step = stop
        record(step)

    final = FieldState(psi_t, psi_u, t0 + n_steps * dt, dx, state.n0, n_abs)
    return GPETrajectory(np.array(times), np.array(nts), np.array(nus), np.array(nabs),
                         np.array(dets), snaps, final, dt, n_steps, worst)


def settle_beam(state, grid, system, duration, dt, absorber=None):
    """Evolve with the coupling off so freshly outcoupled atoms leave the
    mean-field hill; returns the final state."""
    if duration <= 0:
        return state.copy()
    off = pm.CouplingConfig("raman", 0.0, 0.0)
    n = max(1, int(math.ceil(duration / abs(dt))))
    step = duration / n
    traj = evolve_gpe(state, grid, system, off, DetuningSchedule.constant(0.0), step, duration,
                      sample_every=n, absorber=absorber)
    return traj.final


def time_scale_parameters(params, s):
    """Map a parameter set to an equivalent faster one by a time factor ``s``.

    omega -> s omega, k0 -> sqrt(s) k0, Omega -> s Omega, a -> a / sqrt(s),
    durations -> duration / s, lengths -> length / sqrt(s).  Dimensionless
    groups (mu / hbar omega, k0 times the oscillator length, gamma T, mu T / hbar)
    are unchanged when the transverse area also scales as 1 / s.
    """
    if not s > 0:
        raise ValueError("scale factor must be positive")
    rules = {"omega": s, "k0": math.sqrt(s), "rabi": s, "a": 1.0 / math.sqrt(s),
             "duration": 1.0 / s, "dt": 1.0 / s, "length": 1.0 / math.sqrt(s),
             "r0": 1.0 / math.sqrt(s), "area": 1.0 / s, "dk": math.sqrt(s)}
    out = {}
    for key, value in params.items():
        out[key] = value * rules[key] if key in rules and value is not None else value
    return out


# ---------------------------------------------------------------------- snapshots

SNAPSHOT_MAGIC = b"ATOMLNW1"
_HEADER = struct.Struct("<8sQdd")
HEADER_SIZE = 64


def write_snapshot(path, psi, dx, t):
    """64-byte header (magic, uint64 count, float64 dx, float64 t, zero pad)
    followed by little-endian complex128 samples."""
    psi = np.ascontiguousarray(psi, dtype="<c16")
    header = _HEADER.pack(SNAPSHOT_MAGIC, psi.size, float(dx), float(t))
    with open(path, "wb") as fh:
        fh.write(header.ljust(HEADER_SIZE, b"\0"))
        fh.write(psi.tobytes())


def read_snapshot(path):
    """Returns (psi, dx, t)."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) != HEADER_SIZE:
            raise ValueError(f"{path}: truncated header")
        magic, count, dx, t = _HEADER.unpack(header[:_HEADER.size])
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != count:
        raise ValueError(f"{path}: expected {count} samples, found {data.size}")
    return data.astype(complex), dx, t
