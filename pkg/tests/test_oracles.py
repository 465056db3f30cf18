import math

import numpy as np
import pytest

from phonon_machines.oracles import (HomogeneousSpec, dispersion,
                                     evaporative_scaling,
                                     sudden_merge_energy_density,
                                     sudden_merge_total_energy, zero_mode_gap)
from phonon_machines.units import DEFAULT_CONSTANTS as CONST
from phonon_machines.units import interaction_from_sound_speed

G_REF = interaction_from_sound_speed(2.0, 100.0)


def spec(length=25.0, modes=200, t_nk=50.0):
    return HomogeneousSpec(length_um=length, density_per_um=100.0,
                           g_jum=G_REF, temperature_nk=t_nk, mode_count=modes)


def test_dispersion_closed_form():
    s = spec(length=50.0, modes=3)
    omega = dispersion(s)
    # L = 50 um, c = 2 um/ms, k = 1 -> pi * 0.04 rad/ms
    assert omega[0] == pytest.approx(math.pi * 0.04, rel=1e-12)
    assert omega[2] == pytest.approx(3 * omega[0], rel=1e-12)


def test_dispersion_length_scaling():
    full = dispersion(spec(length=50.0, modes=8))
    half = dispersion(spec(length=25.0, modes=4))
    assert np.allclose(full[1::2], half, rtol=1e-12)


def test_zero_mode_gap_values():
    omega = dispersion(spec(length=50.0, modes=6))
    w0, zeta = zero_mode_gap(0.01, G_REF, 100.0, omega)
    assert w0 == pytest.approx(
        2 * math.pi * math.sqrt(2 * G_REF * 0.01e-3 * 100.0 / CONST.hbar_j_ms),
        rel=1e-12)
    # squeezing parameters decay like 1/k^2
    assert np.allclose(zeta * np.arange(1, 7) ** 2, zeta[0], rtol=1e-12)
    w0_small, _ = zero_mode_gap(1e-6, G_REF, 100.0)
    assert w0_small < 1e-2 * w0 / math.sqrt(1e-4)  # w0 ~ sqrt(J) -> 0
    with pytest.raises(ValueError):
        zero_mode_gap(0.0, G_REF, 100.0)


def test_evaporative_scaling_values():
    assert evaporative_scaling(60.0, 100.0, 100.0) == 60.0
    # rho' = rho/2 -> T' = T / 2^(3/2), frozen from the closed form
    assert evaporative_scaling(1.0, 100.0, 50.0) == pytest.approx(
        0.35355339059327373, rel=1e-15)
    with pytest.raises(ValueError):
        evaporative_scaling(50.0, 0.0, 10.0)


def test_sudden_merge_initial_bulk_value():
    s = spec(modes=240)
    kt = CONST.thermal_energy(50.0)
    k = np.arange(1, 241)
    omega_old = math.pi * 2.0 * k / 25.0
    occ = 1.0 / np.expm1(CONST.hbar_j_ms * omega_old / kt)
    uniform = float(CONST.hbar_j_ms * np.sum(omega_old * (occ + 0.5)) / 25.0)
    z = np.array([-15.0, -8.0, 8.0, 15.0])  # away from weld and walls
    dens = sudden_merge_energy_density(s, 0.0, z)
    assert np.allclose(dens, uniform, rtol=5e-3)


def test_sudden_merge_energy_conservation():
    s = spec(modes=200)
    totals = [sudden_merge_total_energy(s, t) for t in (0.0, 3.0, 7.0)]
    assert totals[0] == pytest.approx(totals[1], rel=1e-12)
    assert totals[0] == pytest.approx(totals[2], rel=1e-12)
    # the quench adds strictly positive work on top of the two thermal halves
    kt = CONST.thermal_energy(50.0)
    k = np.arange(1, 201)
    omega_old = math.pi * 2.0 * k / 25.0
    occ = 1.0 / np.expm1(CONST.hbar_j_ms * omega_old / kt)
    initial = 2 * float(CONST.hbar_j_ms * np.sum(omega_old * (occ + 0.5)))
    assert totals[0] > initial


def test_sudden_merge_front_travels_at_sound_speed():
    s = spec(modes=240)
    z = np.linspace(-24.5, 24.5, 197)
    kt = CONST.thermal_energy(50.0)
    k = np.arange(1, 241)
    omega_old = math.pi * 2.0 * k / 25.0
    occ = 1.0 / np.expm1(CONST.hbar_j_ms * omega_old / kt)
    uniform = float(CONST.hbar_j_ms * np.sum(omega_old * (occ + 0.5)) / 25.0)
    for t in (3.0, 6.0):
        dens = sudden_merge_energy_density(s, t, z)
        excess = np.abs(dens - uniform)
        peak_positions = np.sort(z[np.argsort(excess)[-6:]])
        # the two strongest features sit at +- c t
        assert min(abs(peak_positions + 2.0 * t)) < 0.6
        assert min(abs(peak_positions - 2.0 * t)) < 0.6


def test_sudden_merge_tail_flag():
    with pytest.raises(ValueError, match="k_max"):
        sudden_merge_energy_density(spec(modes=30), 1.0, np.array([0.0]))
    # explicit opt-out for cutoff-matched comparisons
    sudden_merge_energy_density(spec(modes=30), 1.0, np.array([0.0]),
                                check_tail=False)


def test_sudden_merge_rejects_outside_positions():
    with pytest.raises(ValueError):
        sudden_merge_energy_density(spec(), 1.0, np.array([30.0]))


def test_homogeneous_spec_validation():
    with pytest.raises(ValueError):
        HomogeneousSpec(0.0, 100.0, G_REF, 50.0)
    with pytest.raises(ValueError):
        HomogeneousSpec(25.0, 100.0, G_REF, 50.0, mode_count=0)
