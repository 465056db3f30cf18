import math
import warnings

import numpy as np
import pytest

from phonon_machines.gaussian import (GaussianState, mutual_information,
                                      symplectic_eigenvalues, thermal_state,
                                      total_energy, von_neumann_entropy)
from phonon_machines.lattice import (CouplingSpec, build_profile, discretize,
                                     glue_profiles, split_hamiltonian)
from phonon_machines.qtp import (MergeConfig, compress, decorrelate,
                                 default_step_count, energy_density, idle,
                                 ramp_valve, rescale_representation,
                                 zero_mode_diffusion)
from phonon_machines.units import DEFAULT_CONSTANTS as CONST


def two_halves(length=12.0, dz=0.5, t_a=50.0, t_b=50.0, j_hz=0.01, floor=0.5):
    """Small merged setup for fast structural tests."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pa = build_profile("erf_box", length, 100.0, edge_floor=floor, dz_um=dz)
        pb = build_profile("erf_box", length, 100.0, edge_floor=floor, dz_um=dz)
        joint = glue_profiles(pa, pb)
        coupling = CouplingSpec(j_hz=j_hz)
        h_joint = discretize(joint, coupling)
    cut = pa.n_pixels
    h_left, h_right, _ = split_hamiltonian(h_joint, cut)
    n = joint.n_pixels
    h_split_phi = np.zeros_like(h_joint.h_phi)
    h_split_phi[:cut, :cut] = h_left.h_phi
    h_split_phi[cut:, cut:] = h_right.h_phi
    from phonon_machines.gaussian import QuadraticHamiltonian
    h_split = QuadraticHamiltonian(h_joint.h_rho.copy(), h_split_phi, dz)
    sa = thermal_state(h_left, t_a)
    sb = thermal_state(h_right, t_b)
    cov = np.zeros((2 * n, 2 * n))
    sel_a = np.r_[np.arange(cut), n + np.arange(cut)]
    sel_b = np.r_[cut + np.arange(n - cut), n + cut + np.arange(n - cut)]
    cov[np.ix_(sel_a, sel_a)] = sa.cov
    cov[np.ix_(sel_b, sel_b)] = sb.cov
    state = GaussianState(cov, np.zeros(2 * n), dz)
    return state, h_split, h_joint, cut


def test_default_step_count():
    assert default_step_count(40.0) == 800
    assert default_step_count(0.0) == 1
    assert default_step_count(1.0, 0.3) == 4


def test_ramp_valve_zero_time_is_identity():
    state, h_split, h_joint, _ = two_halves()
    frames = ramp_valve(state, h_split, h_joint, MergeConfig(0.0, 1), 10)
    assert len(frames) == 1
    assert np.array_equal(frames[0].state.cov, state.cov)


def test_frames_recompute_and_sum_to_total():
    state, h_split, h_joint, _ = two_halves()
    frames = ramp_valve(state, h_split, h_joint, MergeConfig(4.0, 80),
                        frame_stride=20)
    for fr in frames:
        assert np.abs(fr.energy - fr.recomputed_energy()).max() <= \
            1e-10 * np.abs(fr.energy).max()
        assert fr.energy.sum() == pytest.approx(
            total_energy(fr.state, fr.ham), rel=1e-12)


def test_merge_split_cycle_converges_and_tends_adiabatic():
    # A merge followed by the reverse split is a palindromic product, not
    # the inverse evolution: the state does not retrace at finite ramp
    # speed.  What must hold: the cycle map converges under step halving
    # (the residual is physics, not Trotter error), and slower ramps leave
    # the state closer to where it started.
    def cycle(t_ramp, steps):
        state, h_split, h_joint, _ = two_halves()
        fwd = ramp_valve(state, h_split, h_joint, MergeConfig(t_ramp, steps),
                         frame_stride=10**9)
        back = ramp_valve(fwd[-1].state, h_split, h_joint,
                          MergeConfig(t_ramp, steps, "split"),
                          frame_stride=10**9)
        return state.cov, back[-1].state.cov

    ref, coarse = cycle(4.0, 80)
    _, fine = cycle(4.0, 160)
    drift = np.abs(coarse - ref).max()
    trotter = np.abs(fine - coarse).max()
    assert trotter < 0.02 * drift

    _, slow = cycle(16.0, 320)
    assert np.abs(slow - ref).max() < 0.6 * drift


def test_trotter_halving_convergence():
    state, h_split, h_joint, _ = two_halves()
    covs = {}
    for n_steps in (40, 80, 160):
        frames = ramp_valve(state, h_split, h_joint,
                            MergeConfig(4.0, n_steps), frame_stride=10**9)
        covs[n_steps] = frames[-1].state.cov
    d1 = np.abs(covs[80] - covs[40]).max()
    d2 = np.abs(covs[160] - covs[80]).max()
    assert d2 <= 0.3 * d1  # second-order midpoint scheme


def test_valve_preserves_purity_class():
    state, h_split, h_joint, _ = two_halves()
    d0 = symplectic_eigenvalues(state).min()
    frames = ramp_valve(state, h_split, h_joint, MergeConfig(4.0, 80), 20)
    for fr in frames:
        assert symplectic_eigenvalues(fr.state).min() >= d0 - 1e-8


def test_equal_temperature_merge_has_no_net_bulk_flow():
    state, h_split, h_joint, cut = two_halves(t_a=50.0, t_b=50.0)
    frames = ramp_valve(state, h_split, h_joint, MergeConfig(6.0, 120), 12)
    left_mean = np.mean([fr.energy[:cut].sum() for fr in frames])
    right_mean = np.mean([fr.energy[cut:].sum() for fr in frames])
    assert abs(left_mean / right_mean - 1.0) < 0.01


def test_merge_split_injects_nonnegative_energy_decreasing_in_time():
    injected = {}
    for t_ramp, steps in ((2.0, 40), (6.0, 120)):
        state, h_split, h_joint, cut = two_halves()
        e0 = total_energy(state, h_split)
        fwd = ramp_valve(state, h_split, h_joint, MergeConfig(t_ramp, steps),
                         frame_stride=10**9)
        split = ramp_valve(fwd[-1].state, h_split, h_joint,
                           MergeConfig(t_ramp, steps, "split"),
                           frame_stride=10**9)
        final = decorrelate(split[-1].state, cut)
        injected[t_ramp] = total_energy(final, h_split) - e0
    assert injected[2.0] > 0
    assert injected[6.0] > 0
    assert injected[6.0] < injected[2.0]


def test_idle_thermal_state_frames_identical():
    state, _, h_joint, _ = two_halves()
    thermal = thermal_state(h_joint, 50.0)
    frames = idle(thermal, h_joint, 10.0, frame_stride=40)
    for fr in frames:
        assert np.abs(fr.state.cov - thermal.cov).max() < \
            1e-8 * np.abs(thermal.cov).max()


def test_idle_conserves_energy_and_entropy():
    state, h_split, h_joint, _ = two_halves()
    frames = idle(state, h_joint, 7.0, frame_stride=20)
    e = [fr.energy.sum() for fr in frames]
    assert np.abs(np.diff(e)).max() < 1e-9 * abs(e[0])
    s = [von_neumann_entropy(fr.state) for fr in frames[::4]]
    assert np.abs(np.diff(s)).max() < 1e-8


def test_wave_packet_round_trip_period():
    # a smooth phase kick in a homogeneous box recurs after 2L/c; only
    # low momenta are excited, so lattice dispersion barely detunes it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 20.0, 100.0, dz_um=0.5)
        ham = discretize(prof, CouplingSpec(j_hz=0.01))
    state = thermal_state(ham, 50.0)
    n = ham.n_pixels
    z = prof.pixel_centres()
    mean = np.zeros(2 * n)
    mean[n:] = 0.4 * np.exp(-0.5 * ((z - 6.0) / 2.0) ** 2)
    kicked = GaussianState(state.cov.copy(), mean, state.dz)
    period = 2 * 20.0 / 2.0
    frames = idle(kicked, ham, period, frame_stride=100)
    final = frames[-1].state
    mid = frames[len(frames) // 2].state
    corr_final = np.corrcoef(final.mean[n:], kicked.mean[n:])[0, 1]
    corr_mid = np.corrcoef(mid.mean[n:], kicked.mean[n:])[0, 1]
    assert corr_final > 0.95
    assert corr_mid < corr_final  # genuinely moved in between


def test_decorrelate_properties():
    state, h_split, h_joint, cut = two_halves()
    frames = ramp_valve(state, h_split, h_joint, MergeConfig(3.0, 60),
                        frame_stride=10**9)
    merged = frames[-1].state
    assert mutual_information(merged, cut) > 1e-3
    clean = decorrelate(merged, cut)
    assert mutual_information(clean, cut) == pytest.approx(0.0, abs=1e-9)
    clean.validate()
    # block-local energies untouched
    before = energy_density(merged, h_split)
    after = energy_density(clean, h_split)
    assert np.allclose(before[:cut].sum(), after[:cut].sum(), rtol=1e-12)
    assert np.allclose(before[cut:].sum(), after[cut:].sum(), rtol=1e-12)
    # idempotent on product states
    again = decorrelate(clean, cut)
    assert np.array_equal(again.cov, clean.cov)


def test_energy_density_uniform_for_homogeneous_thermal():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 25.0, 100.0, dz_um=0.5)
        ham = discretize(prof, CouplingSpec(j_hz=0.01))
    state = thermal_state(ham, 50.0)
    dens = energy_density(state, ham)
    bulk = dens[5:-5]
    assert (bulk.max() - bulk.min()) / bulk.mean() < 0.02
    assert dens.sum() == pytest.approx(total_energy(state, ham), rel=1e-12)


def test_compress_identity_ratio():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 20.0, 100.0, dz_um=0.5)
        coupling = CouplingSpec(j_hz=0.01)
        ham = discretize(prof, coupling)
    state = thermal_state(ham, 50.0)
    frames, out_prof = compress(state, prof, coupling, 1.0, 5.0, 100,
                                frame_stride=10**9)
    assert np.abs(frames[-1].state.cov - state.cov).max() < \
        1e-9 * np.abs(state.cov).max()
    assert out_prof.dz == prof.dz


def test_compress_raises_energy_uniformly_and_reverses():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 20.0, 100.0, dz_um=0.5)
        coupling = CouplingSpec(j_hz=0.01)
        ham = discretize(prof, coupling)
    state = thermal_state(ham, 50.0)
    down, prof_c = compress(state, prof, coupling, 0.5, 8.0,
                            frame_stride=40)
    energies = [fr.energy.sum() for fr in down]
    assert all(b > a for a, b in zip(energies, energies[1:]))
    dens = down[-1].energy
    assert (dens[2:-2].max() - dens[2:-2].min()) / dens[2:-2].mean() < 0.05
    assert down[-1].state.dz == pytest.approx(0.25)
    assert prof_c.rho[0] == pytest.approx(200.0)
    for fr in down[1:]:
        assert symplectic_eigenvalues(fr.state).min() >= 1.0 - 1e-8
    up, prof_f = compress(down[-1].state, prof_c, coupling, 2.0, 8.0,
                          frame_stride=10**9)
    final = up[-1].state
    assert final.dz == pytest.approx(0.5)
    assert total_energy(final, ham) == pytest.approx(
        total_energy(state, ham), rel=0.01)
    # entropy exactly preserved by the affine-symplectic stroke
    assert von_neumann_entropy(final) == pytest.approx(
        von_neumann_entropy(state), abs=1e-8)


def test_compress_rejects_inhomogeneous_and_mismatch():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        soft = build_profile("erf_box", 20.0, 100.0, dz_um=0.5)
        coupling = CouplingSpec(j_hz=0.01)
        ham = discretize(soft, coupling)
    state = thermal_state(ham, 50.0)
    with pytest.raises(ValueError, match="homogeneous"):
        compress(state, soft, coupling, 0.5, 5.0, 50)


def test_compress_warns_beyond_healing_length():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 20.0, 100.0, dz_um=0.25)
        coupling = CouplingSpec(j_hz=0.01)
        ham = discretize(prof, coupling)
        state = thermal_state(ham, 50.0)
    with pytest.warns(UserWarning, match="healing length"):
        compress(state, prof, coupling, 4.0, 5.0, 100, frame_stride=10**9)


def test_rescale_representation_preserves_observables():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = build_profile("homogeneous", 20.0, 100.0, dz_um=0.5)
        coupling = CouplingSpec(j_hz=0.01)
        ham = discretize(prof, coupling)
    state = thermal_state(ham, 50.0)
    rep, ham_rep = rescale_representation(state, ham, 0.4)
    assert rep.dz == 0.4
    assert total_energy(rep, ham_rep) == pytest.approx(
        total_energy(state, ham), rel=1e-12)
    assert von_neumann_entropy(rep) == pytest.approx(
        von_neumann_entropy(state), abs=1e-10)
    assert np.allclose(symplectic_eigenvalues(rep),
                       symplectic_eigenvalues(state), rtol=1e-10)
    back, ham_back = rescale_representation(rep, ham_rep, 0.5)
    assert np.allclose(back.cov, state.cov, rtol=1e-12)
    assert np.allclose(ham_back.h_phi, ham.h_phi, rtol=1e-12)


def test_zero_mode_diffusion_values():
    assert zero_mode_diffusion(0.3, 2.0, 1e-33, 0.0) == 0.3
    g = 5e-33
    one = zero_mode_diffusion(0.0, 2.0, g, 10.0)
    four = zero_mode_diffusion(0.0, 2.0, g, 20.0)
    assert four == pytest.approx(4 * one, rel=1e-12)
    with pytest.raises(ValueError):
        zero_mode_diffusion(-0.1, 1.0, g, 1.0)


def test_zero_mode_diffusion_amplifies_merge_injection():
    # inflating the phase zero-mode variance of both halves (as free phase
    # diffusion does after quenching J to zero) makes merging more violent
    state, h_split, h_joint, cut = two_halves(j_hz=0.01)
    n = state.n_pixels
    e_base = None
    for extra in (0.0, 25.0):
        cov = state.cov.copy()
        for sel in (np.arange(cut), np.arange(cut, n)):
            v = np.zeros(2 * n)
            v[n + sel] = 1.0 / math.sqrt(sel.size)
            cov += extra * np.outer(v, v)
        prepared = GaussianState(cov, np.zeros(2 * n), state.dz)
        frames = ramp_valve(prepared, h_split, h_joint, MergeConfig(3.0, 60),
                            frame_stride=10**9)
        injected = total_energy(frames[-1].state, h_joint) - \
            total_energy(prepared, h_joint)
        if extra == 0.0:
            e_base = injected
    assert injected > 1.5 * e_base
