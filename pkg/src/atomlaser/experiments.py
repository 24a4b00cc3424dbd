"""Experiment runners behind the command line.

Each runner takes a validated :class:`atomlaser.config.ExperimentConfig` and
returns an :class:`ExperimentResult`: named tables (written as CSV), an
ordered summary and, for field runs, the snapshot arrays.  Runners do no file
I/O, so the library and the command line produce identical numbers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar

from . import analysis as an
from . import gpe
from . import multimode as mm
from . import physical_model as pm
from . import single_mode as sm
from .errors import ConfigError, MeasurementError
from .interferometry import StepProbe, phase_uncertainty, phase_uncertainty_exact


@dataclass
class Table:
    name: str
    columns: list
    rows: list
    notes: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    kind: str
    tables: list
    summary: dict
    snapshots: list = field(default_factory=list)   # (label, psi, dx, t)

    def table(self, name):
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def column(self, table, name):
        t = self.table(table)
        i = t.columns.index(name)
        return [row[i] for row in t.rows]


# ------------------------------------------------------------------ single mode

@dataclass(frozen=True)
class SingleModeRun:
    plan: sm.RunPlan
    trajectory: sm.Trajectory
    drain: an.DrainFit
    line: an.LineMeasurement
    spectrum: an.Spectrum
    model: np.ndarray
    flux: sm.FluxBound


def single_mode_run(species, trap, k0, rabi, numerics):
    """Resonant single-mode run from a full condensate (N0 = 1) with drain
    fit, Lorentzian linewidth and the finite-time model spectrum."""
    coupling = pm.CouplingConfig("raman", rabi, k0)
    plan = sm.plan_run(species, trap, coupling, gamma_t=numerics["gamma_t"],
                       window=numerics["window"], revival_safety=numerics["revival_safety"],
                       points_per_sigma=numerics["points_per_sigma"])
    state = sm.SingleModeState(1.0 + 0j, np.zeros(len(plan.grid), dtype=complex))
    omega0 = trap.ground_frequency()
    traj = sm.evolve_single_mode(state, plan.grid, plan.overlap, rabi, plan.detuning, omega0,
                                 plan.dt, plan.t_end, n_samples=numerics["n_samples"])
    drain = an.fit_drain_time(traj.times, traj.n_condensate, strict=False)
    # the resonance lies on the q > 0 branch, where omega(q) is monotone
    pos = plan.grid.q > 0
    beta2 = np.abs(traj.beta[-1][pos]) ** 2
    d_omega = plan.grid.omega[pos] - plan.detuning - omega0
    spec = an.Spectrum(d_omega, beta2 * plan.grid.dq_domega[pos], plan.t_end, "omega", "single_mode")
    line = an.fit_lorentzian(spec)
    model = (rabi**2 * np.abs(plan.overlap.values[pos]) ** 2
             * sm.spectrum_F(d_omega, plan.t_end, plan.gamma))
    flux = sm.flux_linewidth_bound(1.0, plan.t_end, line.fwhm, n_out=float(traj.n_beam[-1]))
    return SingleModeRun(plan, traj, drain, line, spec, model, flux)


def run_table1(cfg):
    s = cfg["system"]
    species = pm.AtomSpecies(s["mass"], s["a"], s["a"], s["a"])
    trap = pm.TrapConfig(s["omega_t"])
    rows = []
    worst_flux = 0.0
    for k0, rabi, asterisk in cfg["sweep"]["rows"]:
        run = single_mode_run(species, trap, k0, rabi, cfg["numerics"])
        closed = sm.free_space_gamma(rabi, k0, trap.omega, species)
        worst_flux = max(worst_flux, run.flux.ratio)
        rows.append((k0, rabi, run.drain.rate, run.line.fwhm, run.plan.gamma, int(asterisk),
                     closed, run.line.residual, run.flux.ratio, int(run.flux.passed)))
    columns = ["k0", "Omega", "inv_tau", "gamma_numeric", "gamma_analytic", "asterisk_flag",
               "gamma_closed_form", "fit_residual", "flux_ratio", "flux_bound_passed"]
    notes = ["rates in rad/s; gamma_numeric is the Lorentzian width of the final beam spectrum",
             "gamma_analytic uses the normalized ground-state overlap; gamma_closed_form is "
             "sqrt(pi) Omega^2 sqrt(m/hbar w) / k0"]
    summary = {"rows": len(rows), "max_flux_ratio": worst_flux, "flux_bound_n0": 1.0,
               "flux_bound_passed": int(all(r[-1] for r in rows))}
    return ExperimentResult(cfg.kind, [Table("table1", columns, rows, notes)], summary)


def run_spectrum(cfg):
    s = cfg["system"]
    species = pm.AtomSpecies(s["mass"], s["a"], s["a"], s["a"])
    trap = pm.TrapConfig(s["omega_t"])
    c = cfg["coupling"]
    run = single_mode_run(species, trap, c["k0"], c["rabi"], cfg["numerics"])
    pos = run.plan.grid.q > 0
    beta2 = run.spectrum.density / run.plan.grid.dq_domega[pos]
    rows = list(zip(run.plan.grid.q[pos], run.spectrum.abscissa, beta2, run.model))
    rel = np.abs(beta2 / run.model - 1.0)
    summary = {
        "gamma_analytic": run.plan.gamma,
        "gamma_t": run.plan.gamma * run.plan.t_end,
        "lorentzian_fwhm": run.line.fwhm,
        "lorentzian_fwhm_over_gamma": run.line.fwhm / run.plan.gamma,
        "lorentzian_residual": run.line.residual,
        "drain_rate": run.drain.rate,
        "max_model_deviation": float(rel.max()),
        "n_beam": float(run.trajectory.n_beam[-1]),
        "flux_ratio": run.flux.ratio,
        "flux_bound_passed": int(run.flux.passed),
    }
    table = Table("spectrum", ["q", "d_omega", "beta_sq", "model"], rows,
                  ["beta_sq and model are atoms per unit q at the final time (N0 = 1)"])
    return ExperimentResult(cfg.kind, [table], summary)


def run_modes(cfg):
    s = cfg["system"]
    species = pm.AtomSpecies(s["mass"], s["a"], s["a"], s["a"])
    trap = pm.TrapConfig(s["omega_t"])
    sw = cfg["sweep"]
    basis = mm.TrapModeBasis.harmonic(sw["n_modes"], species, trap)
    alpha = (np.ones(sw["n_modes"]) if sw["amplitudes"] == "equal"
             else np.asarray(sw["amplitudes"], dtype=float))
    rows, summary = [], {}
    for k0 in sw["k0"]:
        delta = mm.ground_resonant_detuning(k0, species, trap)
        res = mm.relative_intensities(alpha, basis, delta, k0, species, trap)
        for n in res.n:
            rows.append((k0, int(n), res.k_resonant[n], res.intensity[n], int(res.no_resonance[n])))
        odd = res.intensity[1::2]
        even = res.intensity[0:-1:2][: odd.size]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(even > 0, odd / even, np.inf)
        summary[f"max_odd_even_ratio@{k0:g}"] = float(np.max(ratio))
        summary[f"decreasing@{k0:g}"] = int(bool(np.all(np.diff(res.intensity) < 0)))
    table = Table("modes", ["k0", "n", "k_resonant", "intensity", "no_resonance"], rows,
                  ["intensity is |alpha_n|^2 |A_n(k_n)|^2 normalized to its maximum per k0"])
    return ExperimentResult(cfg.kind, [table], summary)


def run_interferometer(cfg):
    sw = cfg["sweep"]
    mass = cfg["system"]["mass"]
    heights = sw["v0"] if sw["v0"] is not None else sw["v0_fraction"]
    rows = []
    for k, dk, h, length in itertools.product(sw["k"], sw["dk"], heights, sw["length"]):
        v0 = h if sw["v0"] is not None else h * hbar**2 * k**2 / (2.0 * mass)
        p = StepProbe(k, dk, v0, length, mass)
        rows.append((k, dk, v0, length, phase_uncertainty(p),
                     phase_uncertainty_exact(p, "transit"),
                     phase_uncertainty_exact(p, "fixed_position")))
    table = Table("phase", ["k", "dk", "V0", "L", "dphi", "dphi_transit", "dphi_fixed_position"],
                  rows, ["phases in rad; dphi is the first-order formula"])
    return ExperimentResult(cfg.kind, [table], {"rows": len(rows)})


# ------------------------------------------------------------------------- GPE

@dataclass
class GPESetup:
    species: pm.AtomSpecies
    trap: pm.TrapConfig
    grid: gpe.SpatialGrid
    system: gpe.GPESystem
    ground: gpe.GroundState
    coupling: pm.CouplingConfig
    schedule: gpe.DetuningSchedule
    absorber: gpe.Absorber | None
    n0: float
    r_tf: float
    k_cent: float


def _scaled_physics(cfg):
    """Apply the time factor to the physical parameters of a field config."""
    s = cfg["system"]
    scale = s["time_scale"]
    lengths = {p: (s[f"a_{p}"] if s[f"a_{p}"] is not None else s["a"]) for p in ("tt", "uu", "tu")}
    params = {"omega": s["omega_t"], "k0": cfg["coupling"]["k0"], "rabi": cfg["coupling"]["rabi"],
              "r0": cfg["detuning"]["r0"],
              "area": s["area"] if not isinstance(s["area"], str) else None}
    out = gpe.time_scale_parameters(params, scale)
    for p, a in lengths.items():
        out[f"a_{p}"] = gpe.time_scale_parameters({"a": a}, scale)["a"]
    delta = cfg["detuning"]["value"]
    out["delta"] = None if delta is None else delta * scale
    return out


def _check_absorber_clear(grid, system, n0, absorber):
    """The absorber must vanish over the source: twice the larger of the
    Thomas-Fermi radius and four oscillator lengths around x = 0.  An
    absorber there removes beam atoms as they are made and slows the decay."""
    length = system.trap.oscillator_length(system.species)
    radius = 4.0 * length
    if system.g[0] > 0:
        radius = max(radius, pm.thomas_fermi_radius(system.mu(n0), system.species, system.trap))
    inside = np.abs(grid.x) <= 2.0 * radius
    if np.any(absorber.profile(grid)[inside] > 0):
        raise ConfigError(f"absorber reaches the condensate region |x| <= {2.0 * radius:.3g} m; "
                          "move [numerics] origin or shrink absorber_fraction")


def build_gpe(cfg):
    """Species, grid, calibrated system, ground state and schedule of a field config."""
    s, num, det = cfg["system"], cfg["numerics"], cfg["detuning"]
    p = _scaled_physics(cfg)
    species = pm.AtomSpecies(s["mass"], p["a_tt"], p["a_uu"], p["a_tu"])
    trap = pm.TrapConfig(p["omega"])
    grid = gpe.SpatialGrid.from_spacing(num["n_points"], num["dx"], num["origin"])
    n0 = s["n0"]
    tol = num["ground_state_tol"]
    if p["area"] is not None:
        system = gpe.GPESystem(species, trap, p["area"])
    elif s["area"] == "default":
        system = gpe.GPESystem.with_default_area(species, trap)
    elif s["area"] == "matched":
        system = gpe.GPESystem.with_matched_area(species, trap, n0)
    else:
        system = gpe.GPESystem.with_calibrated_area(grid, species, trap, n0, tol=tol)
    absorber = None
    if num["absorber_strength"] > 0:
        absorber = gpe.Absorber(num["absorber_strength"], num["absorber_fraction"],
                                tuple(num["absorber_sides"]))
        _check_absorber_clear(grid, system, n0, absorber)
    ground = gpe.ground_state(grid, system, n0, tol=tol)
    coupling = pm.CouplingConfig(cfg["coupling"]["scheme"], p["rabi"], p["k0"])
    r_tf = pm.thomas_fermi_radius(ground.mu, species, trap)
    if det["mode"] == "resonant-center":
        schedule = gpe.DetuningSchedule.resonant_center(p["k0"], species)
    elif det["mode"] == "constant":
        schedule = gpe.DetuningSchedule.constant(p["delta"])
    else:
        r0 = p["r0"] if p["r0"] is not None else det["r0_fraction"] * r_tf
        schedule = gpe.DetuningSchedule.compensated(p["k0"], r0, n0, system)
    k_cent = (gpe.initial_line_center(n0, p["k0"], species, trap)
              if species.a_tt > 0 else p["k0"])
    return GPESetup(species, trap, grid, system, ground, coupling, schedule, absorber, n0, r_tf, k_cent)


def beam_window(setup, analysis):
    """Smooth step selecting the beam beyond ``window_start`` Thomas-Fermi radii
    on the side the kick points to (all ones when disabled)."""
    start = analysis["window_start"]
    if start <= 0 or setup.r_tf <= 0:
        return None
    x = setup.grid.x
    sign = 1.0 if setup.coupling.k0 >= 0 else -1.0
    return 0.5 * (1.0 + np.tanh((sign * x - start * setup.r_tf) / (analysis["window_width"] * setup.r_tf)))


def snapshot_spectrum(setup, state, analysis, dt):
    """Momentum spectrum of the beam in ``state`` after the optional settle."""
    if analysis["settle"] > 0:
        state = gpe.settle_beam(state, setup.grid, setup.system, analysis["settle"], dt, setup.absorber)
    psi = state.psi_u
    w = beam_window(setup, analysis)
    if w is not None:
        psi = psi * w
    return an.field_momentum_spectrum(psi, setup.grid.dx, setup.grid.origin, pad=analysis["pad"],
                                      t=state.t, provenance="gpe")


_LINE_COLUMNS = ["t", "outcoupled_fraction", "n_beam", "center", "fwhm_k", "fwhm_E", "method",
                 "residual", "support_width", "support_center"]


def _line_rows(setup, snapshots, analysis, dt):
    rows = []
    for st in snapshots:
        spec = snapshot_spectrum(setup, st, analysis, dt)
        try:
            m = an.measure_fwhm(spec, policy=analysis["policy"])
            sup = an.support_width(spec, analysis["support_fraction"])
        except MeasurementError as exc:
            rows.append((st.t, st.outcoupled_fraction, st.n_beam, math.nan, math.nan, math.nan,
                         type(exc).__name__, math.nan, math.nan, math.nan))
            continue
        rows.append((st.t, st.outcoupled_fraction, st.n_beam, m.center, m.fwhm,
                     an.energy_width(m.fwhm, m.center, setup.species.mass), m.method, m.residual,
                     sup.fwhm, sup.center))
    return rows


def run_gpe(cfg):
    setup = build_gpe(cfg)
    num, analysis = cfg["numerics"], cfg["analysis"]
    dt = num["dt"]
    traj = gpe.evolve_gpe(setup.ground.state, setup.grid, setup.system, setup.coupling,
                          setup.schedule, dt, num["duration"],
                          snapshot_times=num["snapshot_times"], absorber=setup.absorber)
    snaps = [s for s in traj.snapshots if s.t > 0]
    lines = _line_rows(setup, snaps, analysis, dt)
    series = list(zip(traj.times, traj.n_trapped, traj.n_beam, traj.n_absorbed, traj.detuning))
    tables = [Table("timeseries", ["t", "n_trapped", "n_beam", "n_absorbed", "detuning"], series,
                    ["detuning in rad/s"]),
              Table("lines", _LINE_COLUMNS, lines,
                    ["center, fwhm_k, support in 1/m; fwhm_E in J"])]

    final = traj.final
    summary = {
        "n0": setup.n0,
        "omega_t": setup.trap.omega,
        "k0": setup.coupling.k0,
        "rabi": setup.coupling.rabi_magnitude,
        "area": setup.system.area,
        "mu_ground": setup.ground.mu,
        "mu_3d": pm.chemical_potential(setup.n0, setup.species, setup.trap) if setup.species.a_tt > 0 else 0.0,
        "r_tf": setup.r_tf,
        "k_cent": setup.k_cent,
        "grid_dk": setup.grid.dk,
        "steps": traj.steps,
        "norm_error": traj.norm_error,
        "final_fraction": final.outcoupled_fraction,
        "n_beam": final.n_beam,
        "n_absorbed": final.n_absorbed,
    }
    if setup.schedule.kind == "compensated":
        e_out = np.array([setup.schedule.output_energy(t, n) for t, n in zip(traj.times, traj.n_trapped)])
        summary["e_out"] = float(e_out[0])
        summary["e_out_spread"] = float(np.max(np.abs(e_out / e_out[0] - 1.0)))
    summary.update(_line_summary(setup, lines, analysis, num["duration"]))
    snapshots = []
    for i, st in enumerate(traj.snapshots):
        snapshots.append((f"psi_t_{i:04d}", st.psi_t, st.dx, st.t))
        snapshots.append((f"psi_u_{i:04d}", st.psi_u, st.dx, st.t))
    return ExperimentResult(cfg.kind, tables, summary, snapshots)


def _line_summary(setup, lines, analysis, duration):
    out = {}
    if not lines:
        return out
    cols = {c: np.array([r[i] for r in lines], dtype=float)
            for i, c in enumerate(_LINE_COLUMNS) if c != "method"}
    t, center, fwhm, support = cols["t"], cols["center"], cols["fwhm_k"], cols["support_width"]
    late = t >= analysis["monotone_from"]
    out["final_center"] = float(center[-1])
    out["final_fwhm_k"] = float(fwhm[-1])
    out["final_support_width"] = float(support[-1])
    out["center_descending"] = int(an.is_monotone(center, increasing=False))
    out["support_growing"] = int(an.is_monotone(support[late], increasing=True))
    finite = np.isfinite(center)
    out["center_drift"] = float(center[finite][-1] - center[finite][0]) if finite.any() else math.nan
    try:
        c0 = an.extrapolate_line_center(t, center, analysis["center_fit_start"],
                                        analysis["center_fit_points"], analysis["center_fit_degree"])
    except MeasurementError:
        c0 = math.nan
    out["initial_center"] = c0
    out["initial_center_offset_bins"] = (c0 - setup.k_cent) / setup.grid.dk
    # flux bound with the final energy width as the linewidth
    if np.isfinite(cols["fwhm_E"][-1]) and cols["fwhm_E"][-1] > 0:
        n_out = setup.n0 * cols["outcoupled_fraction"][-1]
        bound = sm.flux_linewidth_bound(setup.n0, duration, cols["fwhm_E"][-1] / hbar, n_out=n_out)
        out["flux_ratio"] = bound.ratio
        out["flux_bound_passed"] = int(bound.passed)
    if analysis["slope_window"]:
        out["loglog_slope"] = an.loglog_slope(t, fwhm, tuple(analysis["slope_window"]))
        out["fwhm_times_t_final"] = float(fwhm[-1] * t[-1])
        d_omega = cols["fwhm_E"][-1] / hbar
        if setup.species.a_tt > 0 and np.isfinite(d_omega):
            out["atom_budget"] = gpe.weak_outcoupling_budget(setup.n0, d_omega, setup.species, setup.trap)
            out["atoms_removed"] = float(setup.n0 * cols["outcoupled_fraction"][-1])
    return out


def run_weak_sweep(cfg):
    # settle, strict FWHM and the slope window come from the analysis section
    return run_gpe(cfg)


RUNNERS = {
    "table1": run_table1,
    "spectrum": run_spectrum,
    "modes": run_modes,
    "gpe": run_gpe,
    "chirp": run_gpe,
    "weak-sweep": run_weak_sweep,
    "interferometer": run_interferometer,
}


def run_experiment(cfg):
    return RUNNERS[cfg.kind](cfg)


# ------------------------------------------------------------------ comparison

def equal_fraction_ratio(frac_a, width_a, frac_b, width_b):
    """width_a / width_b at the largest outcoupled fraction both runs reach.

    Widths are interpolated linearly in the outcoupled fraction, which grows
    monotonically in time.
    """
    fa, wa = np.asarray(frac_a, float), np.asarray(width_a, float)
    fb, wb = np.asarray(frac_b, float), np.asarray(width_b, float)
    ok_a, ok_b = np.isfinite(wa), np.isfinite(wb)
    fa, wa, fb, wb = fa[ok_a], wa[ok_a], fb[ok_b], wb[ok_b]
    if fa.size == 0 or fb.size == 0:
        raise MeasurementError("no finite widths to compare")
    f_star = min(fa[-1], fb[-1])
    return f_star, float(np.interp(f_star, fa, wa) / np.interp(f_star, fb, wb))
