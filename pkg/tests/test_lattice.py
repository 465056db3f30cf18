import math
import warnings

import numpy as np
import pytest

from phonon_machines.gaussian import normal_modes
from phonon_machines.lattice import (CouplingSpec, DensityProfile, build_profile,
                                     discretize, glue_profiles,
                                     join_hamiltonians, split_hamiltonian)
from phonon_machines.units import DEFAULT_CONSTANTS as CONST
from phonon_machines.units import interaction_from_sound_speed


def test_homogeneous_profile_values():
    prof = build_profile("homogeneous", 50.0, 100.0, dz_um=0.5)
    assert prof.n_pixels == 100
    assert np.all(prof.rho == 100.0)
    assert prof.length_um == 50.0


def test_erf_box_limits_and_shape():
    flat = build_profile("erf_box", 50.0, 100.0, edge_floor=1.0, dz_um=0.5)
    assert np.allclose(flat.rho, 100.0)
    soft = build_profile("erf_box", 50.0, 100.0, edge_width_um=4.0,
                         edge_floor=0.5, dz_um=0.5)
    assert soft.rho.max() == pytest.approx(100.0, rel=1e-6)
    # edges fall towards the floor, symmetric
    assert soft.rho[0] < 0.55 * 100.0
    assert np.allclose(soft.rho, soft.rho[::-1])
    # Fig-12-style variant: edges only drop to about 0.8 of the peak
    mild = build_profile("erf_box", 40.0, 100.0, edge_floor=0.8, dz_um=0.5)
    assert mild.rho.min() > 0.78 * 100.0


def test_trapeze_profile():
    prof = build_profile("trapeze", 20.0, 100.0, edge_width_um=4.0,
                         edge_floor=0.25, dz_um=0.5)
    mid = prof.rho[prof.n_pixels // 2]
    assert mid == pytest.approx(100.0)
    assert prof.rho[0] < 40.0
    assert np.all(np.diff(prof.rho[:8]) > 0)  # linear ramp up


def test_build_profile_validation():
    with pytest.raises(ValueError):
        build_profile("homogeneous", 1.0, 100.0, dz_um=0.5)
    with pytest.raises(ValueError):
        build_profile("erf_box", 50.0, 100.0, edge_floor=0.0)
    with pytest.raises(ValueError):
        build_profile("unknown", 50.0, 100.0)


def test_discretize_two_pixel_structure():
    prof = DensityProfile(rho=np.array([100.0, 100.0]), dz=0.5)
    coupling = CouplingSpec(sound_speed_um_ms=2.0,
                            reference_density_per_um=100.0, j_hz=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ham = discretize(prof, coupling)
    stiff = CONST.hbar_j_ms**2 * 100.0 / (CONST.mass_internal * 0.5)
    j_diag = 8 * math.pi**2 * CONST.hbar_j_ms * 0.5 * 0.01e-3 * 100.0
    expected = stiff * np.array([[1.0, -1.0], [-1.0, 1.0]]) + j_diag * np.eye(2)
    assert np.allclose(ham.h_phi, expected, rtol=1e-12)
    g = interaction_from_sound_speed(2.0, 100.0)
    assert np.allclose(ham.h_rho, 0.5 * g)


def test_free_phase_block_annihilates_constants(homogeneous_box):
    profile, _, _ = homogeneous_box
    free = discretize(profile, CouplingSpec(j_hz=0.0))
    ones = np.ones(free.n_pixels)
    assert np.abs(free.h_phi @ ones).max() < 1e-12 * np.abs(free.h_phi).max()


def test_discretize_linear_in_j(homogeneous_box):
    profile, _, _ = homogeneous_box
    h0 = discretize(profile, CouplingSpec(j_hz=0.0))
    h1 = discretize(profile, CouplingSpec(j_hz=0.01))
    h2 = discretize(profile, CouplingSpec(j_hz=0.02))
    d1 = h1.h_phi - h0.h_phi
    d2 = h2.h_phi - h1.h_phi
    assert np.allclose(d1, np.diag(np.diag(d1)))  # pure diagonal shift
    assert np.allclose(d1, d2, rtol=1e-12)


def test_healing_length_warning(homogeneous_box):
    profile, coupling, _ = homogeneous_box
    with pytest.warns(UserWarning, match="healing length"):
        discretize(profile, coupling)
    fine = build_profile("homogeneous", 50.0, 100.0, dz_um=0.25)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        discretize(fine, coupling)  # no warning below the healing length


def test_transversal_coupling_formula():
    rho = np.array([100.0])
    spec = CouplingSpec(omega_perp_rad_s=2 * math.pi * 2000.0,
                        scattering_length_um=5.2e-3)
    g = spec.g_of_z(rho)[0]
    hbar_j_ms = CONST.hbar_j_ms
    x = 5.2e-3 * 100.0
    expected = (hbar_j_ms * 2 * math.pi * 2.0 * 5.2e-3
                * (2 + 3 * x) / (1 + 2 * x) ** 1.5)
    assert g == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        CouplingSpec(omega_perp_rad_s=100.0)  # missing scattering length


def test_glue_profiles():
    a = build_profile("homogeneous", 20.0, 100.0, dz_um=0.5)
    b = build_profile("homogeneous", 60.0, 100.0, dz_um=0.5)
    glued = glue_profiles(a, b)
    assert glued.n_pixels == 160
    doubled = glue_profiles(a, a)
    assert doubled.length_um == 40.0
    mismatched = build_profile("homogeneous", 20.0, 100.0, dz_um=0.4)
    with pytest.raises(ValueError, match="cutoff mismatch"):
        glue_profiles(a, mismatched)


def test_machine_piece_counts():
    # 40 + 40 + 120 um at dz = 0.5 -> 320 pixels once glued
    parts = [build_profile("homogeneous", L, 100.0, dz_um=0.5)
             for L in (40.0, 40.0, 120.0)]
    total = glue_profiles(glue_profiles(parts[0], parts[1]), parts[2])
    assert total.n_pixels == 400


def test_split_identity_and_neumann(homogeneous_box):
    profile, coupling, ham = homogeneous_box
    cut = 40
    left, right, h_int = split_hamiltonian(ham, cut)
    recon = np.zeros_like(ham.h_phi)
    recon[:cut, :cut] = left.h_phi
    recon[cut:, cut:] = right.h_phi
    recon += h_int.toarray()
    assert np.array_equal(recon, ham.h_phi)
    assert np.array_equal(np.r_[left.h_rho, right.h_rho], ham.h_rho)
    # interaction stencil: exactly four entries at the cut
    coo = h_int.tocoo()
    assert sorted(zip(coo.row, coo.col)) == [(cut - 1, cut - 1), (cut - 1, cut),
                                             (cut, cut - 1), (cut, cut)]
    # both parts keep zero-row-sum kinetics after removing the J diagonal
    j_diag = 8 * math.pi**2 * CONST.hbar_j_ms * ham.dz * 0.01e-3 * profile.rho
    kin = left.h_phi - np.diag(j_diag[:cut])
    assert np.abs(kin @ np.ones(cut)).max() < 1e-9 * np.abs(kin).max()


def test_split_even_odd_degeneracy(homogeneous_box):
    profile, _, _ = homogeneous_box
    free = discretize(profile, CouplingSpec(j_hz=0.0))
    nhalf = free.n_pixels // 2
    left, right, _ = split_hamiltonian(free, nhalf)
    block = np.zeros_like(free.h_phi)
    block[:nhalf, :nhalf] = left.h_phi
    block[nhalf:, nhalf:] = right.h_phi
    from phonon_machines.gaussian import QuadraticHamiltonian
    split_ham = QuadraticHamiltonian(free.h_rho, block, free.dz)
    modes = normal_modes(split_ham)
    freqs = modes.frequencies
    # equal halves: the spectrum is doubly degenerate
    assert np.allclose(freqs[0::2], freqs[1::2], rtol=1e-10)


def test_join_matches_glued_discretization():
    coupling = CouplingSpec(j_hz=0.01)
    a = build_profile("erf_box", 25.0, 100.0, dz_um=0.5)
    b = build_profile("erf_box", 25.0, 100.0, dz_um=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        direct = discretize(glue_profiles(a, b), coupling)
        ha, hb = discretize(a, coupling), discretize(b, coupling)
    eta = math.sqrt(a.rho[-1] * b.rho[0])
    joint, h_int = join_hamiltonians(ha, hb, eta)
    assert np.allclose(joint.h_phi, direct.h_phi, rtol=1e-12, atol=0.0)
    assert np.allclose(joint.h_rho, direct.h_rho)


def test_lattice_sound_speed_from_dispersion(homogeneous_box):
    profile, _, _ = homogeneous_box
    free = discretize(profile, CouplingSpec(j_hz=0.0))
    modes = normal_modes(free)
    length = profile.length_um
    # fitted low-k slope of the dispersion gives back c = sqrt(g rho / m)
    k = np.arange(1, 6)
    slope = np.polyfit(math.pi * k / length, modes.frequencies[:5], 1)[0]
    assert slope == pytest.approx(2.0, rel=0.01)
