import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.constants import hbar, pi

from atomlaser import physical_model as pm

RB = pm.rubidium87


def test_u_zero_scattering_length():
    assert pm.nonlinear_coupling(RB(0.0)) == 0.0


def test_u_linear_in_a():
    assert pm.nonlinear_coupling(RB(8e-11)) == pytest.approx(2 * pm.nonlinear_coupling(RB(4e-11)), rel=1e-15, abs=0)


def test_u_rubidium_value():
    # 40-digit evaluation of 4 pi hbar^2 a / m with CODATA hbar
    assert pm.nonlinear_coupling(RB(4e-11)) == pytest.approx(3.8734295132685367e-53, rel=1e-12, abs=0)


@given(st.floats(1e-12, 1e-7))
def test_u_round_trip(a):
    sp = RB(a)
    back = pm.nonlinear_coupling(sp) * sp.mass / (4 * pi * hbar**2)
    assert back == pytest.approx(a, rel=1e-12)


def test_species_validation():
    with pytest.raises(ValueError):
        pm.AtomSpecies(0.0)
    with pytest.raises(ValueError):
        pm.AtomSpecies(1e-25, a_tt=-1e-9)
    assert pm.AtomSpecies(1e-25, a_tt=-1e-9, allow_negative=True).a_tt < 0
    with pytest.raises(ValueError):
        RB(1e-9).scattering_length("xy")


def test_trap_and_coupling_validation():
    with pytest.raises(ValueError):
        pm.TrapConfig(0.0)
    with pytest.raises(NotImplementedError):
        pm.TrapConfig(50.0, gravity=True)
    with pytest.raises(ValueError):
        pm.CouplingConfig("rf", 1.0, k0=1e6)
    with pytest.raises(ValueError):
        pm.CouplingConfig("raman", -1.0, k0=1e6)
    with pytest.raises(ValueError):
        pm.CouplingConfig("microwave", 1.0)


def test_coupling_complex_rabi_and_profile():
    c = pm.CouplingConfig.from_rabi("raman", 3 + 4j, k0=2.0)
    assert c.rabi_magnitude == pytest.approx(5.0)
    assert c.rabi == pytest.approx(3 + 4j)
    x = np.linspace(0, 1, 5)
    assert np.allclose(c.spatial_profile(x), np.exp(2j * x))
    assert np.all(pm.CouplingConfig("rf", 1.0).spatial_profile(x) == 1)


def test_mu_zero_atoms():
    assert pm.chemical_potential(0, RB(4e-11), pm.TrapConfig(150.0)) == 0.0


def test_mu_power_law():
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    assert pm.chemical_potential(32e5, sp, tr) == pytest.approx(4 * pm.chemical_potential(1e5, sp, tr), rel=1e-13, abs=0)


def test_mu_value():
    # 40-digit evaluation of the closed form: 7.44503e-32 J, 705.976 rad/s
    mu = pm.chemical_potential(1e6, RB(4e-11), pm.TrapConfig(150.0))
    assert mu == pytest.approx(7.445026505599064e-32, rel=1e-12, abs=0)
    assert mu / hbar == pytest.approx(705.9762437248361, rel=1e-12)


def test_mu_rejects_negative():
    with pytest.raises(ValueError):
        pm.chemical_potential(-1.0, RB(4e-11), pm.TrapConfig(150.0))


@given(st.floats(1.0, 1e9), st.floats(1.0001, 100.0))
def test_mu_increasing_and_concave(n, factor):
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    mu = lambda x: pm.chemical_potential(x, sp, tr)
    assert mu(n * factor) > mu(n)
    # concavity: the chord from 0 lies below the curve
    assert mu(n * factor) / (n * factor) < mu(n) / n


def test_tf_density_edges():
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    mu = pm.chemical_potential(1e6, sp, tr)
    r_tf = pm.thomas_fermi_radius(mu, sp, tr)
    assert r_tf == pytest.approx(6.771635963274476e-06, rel=1e-12, abs=0)
    assert pm.thomas_fermi_density(r_tf, 1e6, sp, tr) <= 1e-9 * mu / pm.nonlinear_coupling(sp)
    assert pm.thomas_fermi_density(0.0, 1e6, sp, tr) == pytest.approx(mu / pm.nonlinear_coupling(sp), rel=1e-14)
    r = np.linspace(0, 2 * r_tf, 101)
    d = pm.thomas_fermi_density(r, 1e6, sp, tr)
    assert np.all(d >= 0) and np.all(d[r > r_tf] == 0)


def test_tf_density_rejects_zero_coupling():
    with pytest.raises(ValueError):
        pm.thomas_fermi_density(0.0, 1e6, RB(0.0), pm.TrapConfig(150.0))


def test_tf_density_integrates_to_n_in_1d():
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    g = 1e-38
    mu = pm.chemical_potential(1e5, sp, tr, g, dims=1)
    r_tf = pm.thomas_fermi_radius(mu, sp, tr)
    total, _ = integrate.quad(lambda x: pm.thomas_fermi_density(x, 1e5, sp, tr, g, dims=1),
                             -r_tf, r_tf, epsabs=0, epsrel=1e-12)
    assert total == pytest.approx(1e5, rel=1e-9)


def test_matched_area_equalizes_mu():
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    area = pm.matched_transverse_area(1e6, sp, tr)
    g = pm.nonlinear_coupling(sp) / area
    assert pm.chemical_potential(1e6, sp, tr, g, dims=1) == pytest.approx(
        pm.chemical_potential(1e6, sp, tr), rel=1e-12, abs=0)


def test_default_area_and_reduction():
    sp, tr = RB(4e-11), pm.TrapConfig(150.0)
    area = pm.default_transverse_area(sp, tr)
    assert area == pytest.approx(pi * tr.oscillator_length(sp) ** 2, rel=1e-14, abs=0)
    c = pm.NonlinearCouplings.from_species(sp, area)
    assert c.reduced[0] == pytest.approx(pm.nonlinear_coupling(sp) / area, rel=1e-15, abs=0)
    with pytest.raises(ValueError):
        pm.NonlinearCouplings(1.0, 1.0, 1.0, area=0.0)


def test_ground_frequency_and_dispersion():
    sp, tr = RB(), pm.TrapConfig(50.0)
    assert tr.ground_frequency() == 25.0
    assert pm.free_dispersion(1e7, sp) == pytest.approx(hbar * 1e14 / (2 * sp.mass), rel=1e-15, abs=0)
    assert math.isclose(tr.oscillator_length(sp), math.sqrt(hbar / (sp.mass * 50.0)))
