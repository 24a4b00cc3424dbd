import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import hbar
from scipy.linalg import expm

from atomlaser import gpe
from atomlaser import physical_model as pm
from atomlaser import single_mode as sm
from atomlaser.errors import ConfigError, DivergenceError, GridSizeError, StepSizeError

RB = pm.rubidium87
OFF = pm.CouplingConfig("raman", 0.0, 0.0)


def _linear_setup(omega=2000.0, n=1024, dx=1e-7):
    sp = RB(0.0)
    trap = pm.TrapConfig(omega)
    system = gpe.GPESystem.with_default_area(sp, trap)
    grid = gpe.SpatialGrid.from_spacing(n, dx)
    return sp, trap, system, grid


# ---------------------------------------------------------------- grid

@given(st.sampled_from([2**p for p in range(3, 16)]), st.floats(1e-9, 1e-5))
def test_grid_reciprocity(n, dx):
    g = gpe.SpatialGrid.from_spacing(n, dx)
    assert g.dx * g.dk * g.n == pytest.approx(2 * math.pi, rel=1e-12)


def test_grid_layout():
    g = gpe.SpatialGrid(8, 8.0)
    assert np.allclose(g.x, np.arange(-4.0, 4.0))
    assert np.allclose(g.k, 2 * math.pi / 8.0 * np.array([0, 1, 2, 3, -4, -3, -2, -1]))
    assert g.k_max == pytest.approx(math.pi)
    shifted = gpe.SpatialGrid.from_spacing(8, 1.0, left=-1.0)
    assert shifted.x[0] == -1.0 and shifted.x[-1] == 6.0


def test_grid_power_of_two():
    with pytest.raises(GridSizeError):
        gpe.SpatialGrid(1000, 1e-4)
    with pytest.raises(ValueError):
        gpe.SpatialGrid(1024, 0.0)


def test_max_dt_formula():
    sp = RB()
    g = gpe.SpatialGrid.from_spacing(256, 2e-7)
    assert g.max_dt(sp.mass) == pytest.approx((2e-7) ** 2 * sp.mass / (math.pi * hbar), rel=1e-14)


# -------------------------------------------------------- ground state

def test_linear_ground_state_is_oscillator_gaussian():
    sp, trap, system, grid = _linear_setup(omega=50.0, n=256, dx=2.5e-7)
    gs = gpe.ground_state(grid, system, 1e4)
    length = trap.oscillator_length(sp)
    ref = math.sqrt(1e4) * (math.pi * length**2) ** -0.25 * np.exp(-0.5 * (grid.x / length) ** 2)
    assert gs.mu == pytest.approx(0.5 * hbar * trap.omega, rel=1e-7)
    assert np.max(np.abs(gs.state.psi_t - ref)) < 1e-4 * ref.max()
    assert gs.state.n_trapped == pytest.approx(1e4, rel=1e-12)
    assert np.all(gs.state.psi_u == 0)


def test_strong_nonlinearity_matches_thomas_fermi():
    sp, trap, n0 = RB(3e-9), pm.TrapConfig(250.0), 1e7
    system = gpe.GPESystem.with_matched_area(sp, trap, n0)
    r_tf = pm.thomas_fermi_radius(system.mu(n0), sp, trap)
    grid = gpe.SpatialGrid(1024, 4 * r_tf)
    gs = gpe.ground_state(grid, system, n0)
    tf = pm.thomas_fermi_density(grid.x, n0, sp, trap, system.g[0], dims=1)
    inner = np.abs(grid.x) < 0.9 * r_tf
    assert np.max(np.abs(np.abs(gs.state.psi_t[inner]) ** 2 / tf[inner] - 1)) < 0.02
    assert gs.mu == pytest.approx(system.mu(n0), rel=0.02)


@pytest.mark.parametrize("factor", [1.0, 2.0])
def test_ground_state_is_stationary(factor):
    sp, trap, n0 = RB(3e-9), pm.TrapConfig(250.0), 1e7
    system = gpe.GPESystem.with_matched_area(sp, trap, n0)
    grid = gpe.SpatialGrid(1024, 4 * pm.thomas_fermi_radius(system.mu(n0), sp, trap))
    gs = gpe.ground_state(grid, system, factor * n0)
    dt = 0.2 * grid.max_dt(sp.mass)
    out = gpe.evolve_gpe(gs.state, grid, system, OFF, gpe.DetuningSchedule.constant(0.0), dt, dt)
    before, after = gs.state.psi_t, out.final.psi_t
    occupied = np.abs(before) > 1e-3 * np.abs(before).max()
    assert np.max(np.abs(np.abs(after[occupied]) / np.abs(before[occupied]) - 1)) < 1e-8
    # the whole field rotates at mu / hbar
    phase = np.angle(after[occupied] / before[occupied])
    assert np.ptp(phase) < 1e-6
    assert -np.mean(phase) == pytest.approx(gs.mu * dt / hbar, rel=1e-4)


def test_ground_state_iteration_cap():
    _, _, system, grid = _linear_setup(omega=50.0, n=256, dx=2.5e-7)
    with pytest.raises(gpe.ConvergenceError):
        gpe.ground_state(grid, system, 1.0, max_steps=3)
    with pytest.raises(ValueError):
        gpe.ground_state(grid, system, 0.0)


def test_calibrated_area_hits_3d_chemical_potential():
    sp, trap, n0 = RB(4e-11 / math.sqrt(10)), pm.TrapConfig(1500.0), 1e6
    grid = gpe.SpatialGrid.from_spacing(1024, 2.5e-8)
    system = gpe.GPESystem.with_calibrated_area(grid, sp, trap, n0)
    mu = gpe.ground_state(grid, system, n0).mu
    assert mu == pytest.approx(pm.chemical_potential(n0, sp, trap), rel=1e-6)


# ------------------------------------------------------------ evolution

def test_decoupled_fields_stay_decoupled():
    sp, trap, system, grid = _linear_setup(omega=50.0, n=256, dx=2.5e-7)
    gs = gpe.ground_state(grid, system, 1e3)
    traj = gpe.evolve_gpe(gs.state, grid, system, OFF, gpe.DetuningSchedule.constant(10.0),
                          1e-5, 2e-3, sample_every=20)
    assert np.all(traj.final.psi_u == 0)
    assert np.max(np.abs(traj.n_trapped / 1e3 - 1)) < 1e-12


def test_matches_exact_linear_evolution_at_second_order():
    sp, trap, system, _ = _linear_setup()
    grid = gpe.SpatialGrid.from_spacing(64, 1e-7)
    k0, rabi = 3e6, 500.0
    delta = hbar * k0**2 / (2 * sp.mass) - 0.5 * trap.omega
    n = grid.n
    fourier = np.fft.fft(np.eye(n), axis=0)
    kinetic = np.linalg.solve(fourier, np.diag(hbar * grid.k**2 / (2 * sp.mass)) @ fourier)
    lam = np.exp(1j * k0 * grid.x)
    h = np.block([[kinetic + np.diag(system.trap_potential(grid.x) / hbar), np.diag(-rabi * lam.conj())],
                  [np.diag(-rabi * lam), kinetic - delta * np.eye(n)]])
    psi = np.exp(-0.5 * (grid.x / 6e-7) ** 2) + 0j
    t_end = 1e-4
    exact = expm(-1j * h * t_end) @ np.concatenate((psi, np.zeros(n)))
    state = gpe.FieldState(psi, np.zeros(n, complex), 0.0, grid.dx, 1.0)
    errors = []
    for dt in (1e-6, 5e-7):
        traj = gpe.evolve_gpe(state, grid, system, pm.CouplingConfig("raman", rabi, k0),
                              gpe.DetuningSchedule.constant(delta), dt, t_end, check_guards=False)
        errors.append(np.max(np.abs(np.concatenate((traj.final.psi_t, traj.final.psi_u)) - exact)))
    assert errors[1] < 1e-7
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("rabi", [0.0, 300.0])
def test_time_reversal(rabi):
    sp, trap, system, grid = _linear_setup(n=512)
    gs = gpe.ground_state(grid, system, 1.0)
    k0 = 3e6
    coupling = pm.CouplingConfig("raman", rabi, k0)
    sched = gpe.DetuningSchedule.constant(hbar * k0**2 / (2 * sp.mass) - 0.5 * trap.omega)
    start = gs.state.copy()
    start.psi_t = start.psi_t * np.exp(1j * 2e5 * grid.x)
    fwd = gpe.evolve_gpe(start, grid, system, coupling, sched, 2e-6, 2e-3, check_guards=False)
    back = gpe.evolve_gpe(fwd.final, grid, system, coupling, sched, -2e-6, -2e-3, check_guards=False)
    scale = np.abs(start.psi_t).max()
    assert np.max(np.abs(back.final.psi_t - start.psi_t)) < 1e-8 * scale
    assert np.max(np.abs(back.final.psi_u)) < 1e-8 * scale


def test_linear_decay_matches_golden_rule_and_norm_accounting():
    omega, k0, rabi = 2000.0, 1e7, 500.0
    sp, trap, system, _ = _linear_setup(omega=omega)
    grid = gpe.SpatialGrid.from_spacing(4096, 1e-7, left=-1e-4)
    delta = hbar * k0**2 / (2 * sp.mass) - 0.5 * omega
    coupling = pm.CouplingConfig("raman", rabi, k0, delta)
    gamma = sm.golden_rule_gamma(sp, trap, coupling)
    gs = gpe.ground_state(grid, system, 1.0)
    traj = gpe.evolve_gpe(gs.state, grid, system, coupling, gpe.DetuningSchedule.constant(delta),
                          2e-6, 0.012, sample_every=250, absorber=gpe.Absorber(2e4, 0.1))
    late = traj.times > 0.002
    rate = -np.polyfit(traj.times[late], np.log(traj.n_trapped[late]), 1)[0]
    assert rate == pytest.approx(gamma, rel=0.10)
    assert traj.n_absorbed[-1] > 0
    total = traj.n_trapped + traj.n_beam + traj.n_absorbed
    assert np.max(np.abs(total - 1.0)) < 1e-8
    assert traj.norm_error < 1e-8


def test_step_guard():
    sp, trap, system, grid = _linear_setup(n=256)
    gs = gpe.ground_state(grid, system, 1.0)
    dt = grid.max_dt(sp.mass)
    with pytest.raises(StepSizeError):
        gpe.evolve_gpe(gs.state, grid, system, OFF, gpe.DetuningSchedule.constant(0.0), dt, 10 * dt)
    with pytest.raises(StepSizeError):
        gpe.evolve_gpe(gs.state, grid, system, OFF, gpe.DetuningSchedule.constant(0.0), 0.0, 1.0)


def test_run_length_and_snapshot_validation():
    sp, trap, system, grid = _linear_setup(n=256)
    gs = gpe.ground_state(grid, system, 1.0)
    sched = gpe.DetuningSchedule.constant(0.0)
    with pytest.raises(ValueError):
        gpe.evolve_gpe(gs.state, grid, system, OFF, sched, 1e-6, 1.5e-6)
    with pytest.raises(ValueError):
        gpe.evolve_gpe(gs.state, grid, system, OFF, sched, 1e-6, 1e-5, snapshot_times=[2e-5])
    with pytest.raises(ValueError):
        gpe.evolve_gpe(gs.state, grid, system, OFF, sched, -1e-6, -1e-5, absorber=gpe.Absorber(1.0))
    traj = gpe.evolve_gpe(gs.state, grid, system, OFF, sched, 1e-6, 1e-5,
                          snapshot_times=[3e-6, 1e-5])
    assert [round(s.t, 12) for s in traj.snapshots] == [3e-6, 1e-5]


def test_edge_guard():
    sp, trap, system, grid = _linear_setup(n=256)
    psi_u = np.zeros(grid.n, complex)
    psi_u[grid.n // 2] = 1.0
    psi_u[2] = 0.1
    state = gpe.FieldState(np.zeros(grid.n, complex), psi_u, 0.0, grid.dx, 1.0)
    with pytest.raises(GridSizeError):
        gpe.evolve_gpe(state, grid, system, OFF, gpe.DetuningSchedule.constant(0.0), 1e-7, 1e-7)


def test_norm_violation_is_a_divergence():
    sp, trap, system, grid = _linear_setup(n=256)
    psi = np.full(grid.n, np.nan, complex)
    state = gpe.FieldState(psi, np.zeros(grid.n, complex), 0.0, grid.dx, 1.0)
    with pytest.raises(DivergenceError):
        gpe.evolve_gpe(state, grid, system, OFF, gpe.DetuningSchedule.constant(0.0), 1e-7, 1e-7)


def test_absorber_profile():
    grid = gpe.SpatialGrid(1024, 1.0)
    w = gpe.Absorber(10.0, 0.1, ("right",)).profile(grid)
    assert np.all(w[grid.x < 0.3] == 0)
    assert w[-1] == pytest.approx(10.0)
    assert np.all(np.diff(w[grid.x > 0.4]) >= 0)
    with pytest.raises(ValueError):
        gpe.Absorber(-1.0)
    with pytest.raises(ValueError):
        gpe.Absorber(1.0, 0.6)
    with pytest.raises(ValueError):
        gpe.Absorber(1.0, 0.1, ("top",))


def test_settle_beam_keeps_number():
    sp, trap, system, grid = _linear_setup(n=256)
    psi_u = np.exp(-0.5 * (grid.x / 1e-6) ** 2 + 1j * 1e6 * grid.x)
    state = gpe.FieldState(np.zeros(grid.n, complex), psi_u.astype(complex), 0.0, grid.dx, 1.0)
    out = gpe.settle_beam(state, grid, system, 1e-4, 1e-6)
    assert out.n_beam == pytest.approx(state.n_beam, rel=1e-12)
    assert out.t == pytest.approx(1e-4)
    same = gpe.settle_beam(state, grid, system, 0.0, 1e-6)
    assert same is not state and np.array_equal(same.psi_u, state.psi_u)


# -------------------------------------------------------------- detuning

def _tf_system():
    sp, trap = RB(4e-11), pm.TrapConfig(150.0)
    return gpe.GPESystem.with_matched_area(sp, trap, 1e6)


def test_compensated_schedule_at_start():
    system = _tf_system()
    sp, trap, k0, n0 = system.species, system.trap, 3.2e6, 1e6
    r0 = 0.5 * pm.thomas_fermi_radius(system.mu(n0), sp, trap)
    sched = gpe.DetuningSchedule.compensated(k0, r0, n0, system)
    expected = (hbar**2 * k0**2 / (2 * sp.mass) - 0.5 * sp.mass * trap.omega**2 * r0**2) / hbar
    assert sched(0.0, n0) == pytest.approx(expected, rel=1e-14)


@given(st.floats(1e3, 1e6))
def test_output_energy_is_constant(n_now):
    system = _tf_system()
    sched = gpe.DetuningSchedule.compensated(3.2e6, 1e-6, 1e6, system)
    e0 = sched.output_energy(0.0, 1e6)
    assert sched.output_energy(1.0, n_now) == pytest.approx(e0, rel=1e-10)


def test_no_depletion_and_zero_r0_gives_kinetic_detuning():
    system = _tf_system()
    sp, k0 = system.species, 3.2e6
    sched = gpe.DetuningSchedule.compensated(k0, 0.0, 1e6, system)
    for t in (0.0, 0.5, 1.0):
        assert sched(t, 1e6) == pytest.approx(hbar * k0**2 / (2 * sp.mass), rel=1e-14)


def test_outcoupling_point_outside_condensate():
    system = _tf_system()
    r_tf = pm.thomas_fermi_radius(system.mu(1e6), system.species, system.trap)
    with pytest.raises(gpe.OutcouplingPointError):
        gpe.DetuningSchedule.compensated(3.2e6, 1.01 * r_tf, 1e6, system)
    assert issubclass(gpe.OutcouplingPointError, ConfigError)


def test_constant_and_resonant_schedules():
    sp = RB()
    assert gpe.DetuningSchedule.constant(5.0)(123.0, 1.0) == 5.0
    assert gpe.DetuningSchedule.resonant_center(1e7, sp)(0.0) == pytest.approx(
        hbar * 1e14 / (2 * sp.mass), rel=1e-15)


# ------------------------------------------------------ budget and k_cent

def test_weak_outcoupling_budget_value():
    # 50-digit evaluation of (5 hbar / m w^2)(4 pi m w^2 / 15 U)^(2/5) N^(3/5) d_omega
    budget = gpe.weak_outcoupling_budget(1e7, 1.0, RB(3e-9), pm.TrapConfig(250.0))
    assert budget == pytest.approx(1358.022347120028, rel=1e-12)


def test_weak_outcoupling_budget_scaling():
    sp, trap = RB(3e-9), pm.TrapConfig(250.0)
    b = gpe.weak_outcoupling_budget(1e6, 2.0, sp, trap)
    assert gpe.weak_outcoupling_budget(32e6, 2.0, sp, trap) / b == pytest.approx(8.0, rel=1e-12)
    assert gpe.weak_outcoupling_budget(1e6, 6.0, sp, trap) / b == pytest.approx(3.0, rel=1e-12)
    assert gpe.weak_outcoupling_budget(1e6, 0.0, sp, trap) == 0.0
    with pytest.raises(ValueError):
        gpe.weak_outcoupling_budget(1e6, -1.0, sp, trap)


def test_initial_line_center():
    sp, trap = RB(4e-11), pm.TrapConfig(150.0)
    assert gpe.initial_line_center(1e6, 3.2e6, sp, trap) == pytest.approx(3488879.720632251, rel=1e-12)
    assert gpe.initial_line_center(1e6, 3.2e6, RB(0.0), trap) == 3.2e6
    mu = pm.chemical_potential(1e6, sp, trap)
    k0 = math.sqrt(2 * sp.mass * mu / (3 * hbar**2))
    assert gpe.initial_line_center(1e6, k0, sp, trap) == pytest.approx(2 * k0, rel=1e-14)


# ---------------------------------------------------------- time scaling

@given(st.floats(0.5, 50.0))
def test_time_scaling_keeps_dimensionless_groups(s):
    sp, trap, n0 = RB(4e-11), pm.TrapConfig(150.0), 1e6
    base = {"omega": 150.0, "k0": 3.2e6, "rabi": 14.2, "a": 4e-11, "duration": 1.0,
            "area": pm.matched_transverse_area(n0, sp, trap), "name": "x"}
    out = gpe.time_scale_parameters(base, s)
    sp2, trap2 = RB(out["a"]), pm.TrapConfig(out["omega"])
    mu1 = pm.chemical_potential(n0, sp, trap, pm.nonlinear_coupling(sp) / base["area"], dims=1)
    mu2 = pm.chemical_potential(n0, sp2, trap2, pm.nonlinear_coupling(sp2) / out["area"], dims=1)
    assert mu2 / (hbar * out["omega"]) == pytest.approx(mu1 / (hbar * 150.0), rel=1e-10)
    assert out["k0"] * trap2.oscillator_length(sp2) == pytest.approx(
        3.2e6 * trap.oscillator_length(sp), rel=1e-12)
    assert out["rabi"] * out["duration"] == pytest.approx(14.2, rel=1e-12)
    assert out["name"] == "x"
    with pytest.raises(ValueError):
        gpe.time_scale_parameters(base, 0.0)


# ------------------------------------------------------------ snapshots

def test_snapshot_round_trip(tmp_path):
    psi = (np.arange(16) + 1j * np.arange(16)[::-1]).astype(complex)
    p = tmp_path / "s.bin"
    gpe.write_snapshot(p, psi, 1.25e-7, 0.03)
    data = p.read_bytes()
    assert data[:8] == b"ATOMLNW1" and len(data) == 64 + 16 * 16
    back, dx, t = gpe.read_snapshot(p)
    assert np.array_equal(back, psi) and dx == 1.25e-7 and t == 0.03


def test_snapshot_rejects_corruption(tmp_path):
    p = tmp_path / "s.bin"
    gpe.write_snapshot(p, np.ones(4, complex), 1.0, 0.0)
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXXXXXX" + bytes(raw[8:]))
    with pytest.raises(ValueError, match="magic"):
        gpe.read_snapshot(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(bytes(raw[:-16]))
    with pytest.raises(ValueError, match="expected"):
        gpe.read_snapshot(short)
    head = tmp_path / "head.bin"
    head.write_bytes(bytes(raw[:20]))
    with pytest.raises(ValueError, match="truncated"):
        gpe.read_snapshot(head)
