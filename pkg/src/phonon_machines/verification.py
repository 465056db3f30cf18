"""Oracle-versus-lattice comparisons used by the CLI and the test suite.

Each check pits the lattice machinery against an independent closed form:
thermal symplectic spectra against coth, the homogeneous dispersion against
pi*c*k/L, the phase-locking gap against its analytic value, and the sudden
merge against the continuum Bogoliubov sum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .gaussian import (GaussianState, QuadraticHamiltonian, normal_modes,
                       symplectic_eigenvalues, thermal_state)
from .lattice import CouplingSpec, build_profile, discretize, split_hamiltonian
from .oracles import (HomogeneousSpec, dispersion, sudden_merge_energy_density,
                      zero_mode_gap)
from .qtp import idle
from .units import DEFAULT_CONSTANTS, PhysicalConstants, interaction_from_sound_speed

__all__ = [
    "CheckResult",
    "check_thermal_spectrum",
    "check_dispersion",
    "check_zero_mode_gap",
    "check_sudden_merge",
    "run_all_checks",
    "zero_mode_vacuum_thermal_state",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: measured {self.measured:.3e} "
                f"(tolerance {self.tolerance:.3e}) {self.detail}".rstrip())


def _homogeneous_setup(n_pixels: int, dz: float = 0.5, rho: float = 100.0,
                       c: float = 2.0, j_hz: float = 0.01,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS):
    profile = build_profile("homogeneous", n_pixels * dz, rho, dz_um=dz)
    coupling = CouplingSpec(sound_speed_um_ms=c, reference_density_per_um=rho,
                            j_hz=j_hz, constants=constants)
    with warnings.catch_warnings():
        # the default operating point deliberately sits above the healing
        # length; keep oracle-check output clean
        warnings.simplefilter("ignore")
        ham = discretize(profile, coupling)
    return profile, coupling, ham


def check_thermal_spectrum(n_pixels: int = 64, temperature_nk: float = 50.0,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS
                           ) -> CheckResult:
    """Thermal symplectic eigenvalues equal coth(hbar w / 2 kT)."""
    _, _, ham = _homogeneous_setup(n_pixels, constants=constants)
    modes = normal_modes(ham, constants=constants)
    state = thermal_state(ham, temperature_nk, constants=constants, modes=modes)
    d = symplectic_eigenvalues(state)
    kt = constants.thermal_energy(temperature_nk)
    ref = 1.0 / np.tanh(constants.hbar_j_ms * modes.frequencies / (2.0 * kt))
    err = float(np.max(np.abs(np.sort(d) - np.sort(ref)) / np.sort(ref)))
    return CheckResult("thermal symplectic eigenvalues vs coth", err <= 1e-8,
                       err, 1e-8)


def check_dispersion(n_pixels: int = 200, mode_fraction: float = 0.3,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS
                     ) -> CheckResult:
    """Lattice normal modes against the linear box dispersion pi*c*k/L.

    Compared with J = 0 (gapless) over the lowest ``mode_fraction`` of the
    spectrum.  A second-order lattice Laplacian carries the relative error
    sin(x)/x - 1 with x = pi k / 2N, so the worst compared mode sits at
    x = pi*mode_fraction/2.
    """
    dz, rho, c = 0.5, 100.0, 2.0
    profile = build_profile("homogeneous", n_pixels * dz, rho, dz_um=dz)
    coupling = CouplingSpec(sound_speed_um_ms=c, reference_density_per_um=rho,
                            j_hz=0.0, constants=constants)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ham = discretize(profile, coupling)
    modes = normal_modes(ham, constants=constants)
    k_top = int(mode_fraction * n_pixels)
    g = interaction_from_sound_speed(c, rho, constants)
    spec = HomogeneousSpec(length_um=n_pixels * dz, density_per_um=rho,
                           g_jum=g, temperature_nk=50.0, mode_count=k_top)
    ref = dispersion(spec, constants)
    err = float(np.max(np.abs(modes.frequencies[:k_top] / ref - 1.0)))
    return CheckResult("homogeneous dispersion vs pi*c*k/L", err <= 0.01, err,
                       0.01, f"(k <= {k_top} of N={n_pixels})")


def check_zero_mode_gap(n_pixels: int = 200, j_hz: float = 0.01,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS
                        ) -> CheckResult:
    """Lowest phase-locked lattice frequency against the analytic gap."""
    _, coupling, ham = _homogeneous_setup(n_pixels, j_hz=j_hz,
                                          constants=constants)
    modes = normal_modes(ham, constants=constants)
    g = interaction_from_sound_speed(2.0, 100.0, constants)
    omega0, _ = zero_mode_gap(j_hz, g, 100.0, constants=constants)
    err = abs(modes.frequencies[0] / omega0 - 1.0)
    return CheckResult("phase-locking gap vs closed form", err <= 0.02, err,
                       0.02)


def zero_mode_vacuum_thermal_state(ham: QuadraticHamiltonian,
                                   temperature_nk: float,
                                   constants: PhysicalConstants = DEFAULT_CONSTANTS
                                   ) -> GaussianState:
    """Thermal state of a gapless Hamiltonian with depopulated zero modes.

    Gapped modes carry their Gibbs occupations; exact zero modes are set to
    minimal uncertainty at the squeezing scale of the lowest gapped mode
    instead of the divergent thermal weight, matching the continuum
    treatment that drops them from the mode sums.
    """
    modes = normal_modes(ham, constants=constants)
    if modes.n_zero == 0:
        return thermal_state(ham, temperature_nk, constants, modes)
    kt = constants.thermal_energy(temperature_nk)
    x = constants.hbar_j_ms * modes.frequencies / (2.0 * kt)
    d = np.concatenate((np.ones(modes.n_zero), 1.0 / np.tanh(x)))
    n = ham.n_pixels
    # Rebuild the mode transform with the zero-mode quartic scale pinned to
    # the lowest gapped eigenvalue, which keeps both quadratures of the
    # depopulated modes at physically small vacuum variances.
    lam = modes._eigvals.copy()
    lam[:modes.n_zero] = lam[modes.n_zero]
    quart = np.power(lam, 0.25)
    w = modes._sqrt_h_rho
    o = modes._eigvecs
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = (o * quart[None, :]) / w[:, None]
    m[n:, n:] = (o / quart[None, :]) * w[:, None]
    cov = (m * np.tile(d, 2)[None, :]) @ m.T / ham.dz
    return GaussianState(cov=0.5 * (cov + cov.T),
                         mean=np.zeros(2 * n), dz=ham.dz)


def _gaussian_smooth(values: np.ndarray, dz: float, sigma_um: float) -> np.ndarray:
    """Gaussian blur with reflective ends (Neumann-consistent)."""
    half = int(math.ceil(4 * sigma_um / dz))
    x = np.arange(-half, half + 1) * dz
    kernel = np.exp(-0.5 * (x / sigma_um) ** 2)
    kernel /= kernel.sum()
    padded = np.concatenate((values[half:0:-1], values, values[-2:-half - 2:-1]))
    return np.convolve(padded, kernel, mode="valid")


def check_sudden_merge(half_length_um: float = 25.0, n_half: int = 50,
                       temperature_nk: float = 50.0,
                       times_ms=(2.0, 5.0, 8.0), sigma_um: float = 2.0,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS
                       ) -> CheckResult:
    """Sudden lattice quench against the continuum Bogoliubov sum.

    Two homogeneous halves, thermal except for depopulated zero modes (the
    continuum sum drops the zero mode), are joined instantaneously and the
    smoothed change of energy density is compared before the fronts reach
    the outer walls.  The continuum truncation is matched to the lattice
    mode count and its narrow weld spike is resolved on a refined grid
    before smoothing; the residual deviation is genuine lattice dispersion
    of the cutoff-scale weld work.
    """
    dz = half_length_um / n_half
    rho, c = 100.0, 2.0
    g = interaction_from_sound_speed(c, rho, constants)
    coupling = CouplingSpec(sound_speed_um_ms=c, reference_density_per_um=rho,
                            j_hz=0.0, constants=constants)
    joint_profile = build_profile("homogeneous", 2 * half_length_um, rho,
                                  dz_um=dz)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h_joint = discretize(joint_profile, coupling)
    h_left, h_right, _ = split_hamiltonian(h_joint, n_half)

    left = zero_mode_vacuum_thermal_state(h_left, temperature_nk, constants)
    right = zero_mode_vacuum_thermal_state(h_right, temperature_nk, constants)
    n = 2 * n_half
    cov = np.zeros((2 * n, 2 * n))
    sl = np.concatenate((np.arange(n_half), n + np.arange(n_half)))
    sr = np.concatenate((n_half + np.arange(n_half), n + n_half + np.arange(n_half)))
    cov[np.ix_(sl, sl)] = left.cov
    cov[np.ix_(sr, sr)] = right.cov
    state0 = GaussianState(cov, np.zeros(2 * n), dz)

    from .gaussian import energy_density
    h_split_block = QuadraticHamiltonian(
        h_rho=np.concatenate((h_left.h_rho, h_right.h_rho)),
        h_phi=np.block([[h_left.h_phi, np.zeros((n_half, n_half))],
                        [np.zeros((n_half, n_half)), h_right.h_phi]]), dz=dz)
    e_initial = energy_density(state0, h_split_block) / dz

    # Match the continuum truncation to the lattice band (n_half modes per
    # half) and sample its weld spike on a refined grid before smoothing.
    k_max = n_half
    refine = 8
    spec = HomogeneousSpec(length_um=half_length_um, density_per_um=rho,
                           g_jum=g, temperature_nk=temperature_nk,
                           mode_count=k_max)
    dz_fine = dz / refine
    z_fine = -half_length_um + (np.arange(n * refine) + 0.5) * dz_fine
    kt = constants.thermal_energy(temperature_nk)
    omega_old = math.pi * c * np.arange(1, k_max + 1) / half_length_um
    occ = 1.0 / np.expm1(constants.hbar_j_ms * omega_old / kt)
    ref_uniform = float(constants.hbar_j_ms
                        * np.sum(omega_old * (occ + 0.5)) / half_length_um)

    worst = 0.0
    state = state0
    t_prev = 0.0
    for t in times_ms:
        frames = idle(state, h_joint, t - t_prev, frame_stride=10**9,
                      constants=constants, validate_frames=False)
        state = frames[-1].state
        t_prev = t
        e_latt = energy_density(state, h_joint) / dz
        delta_latt = _gaussian_smooth(e_latt - e_initial, dz, sigma_um)
        e_cont = sudden_merge_energy_density(spec, t, z_fine, k_max=k_max,
                                             constants=constants,
                                             check_tail=False)
        smooth_fine = _gaussian_smooth(e_cont - ref_uniform, dz_fine, sigma_um)
        delta_cont = smooth_fine.reshape(n, refine).mean(axis=1)
        scale = float(np.max(np.abs(delta_cont)))
        worst = max(worst, float(np.max(np.abs(delta_latt - delta_cont))) / scale)
    return CheckResult("sudden quench vs continuum sum", worst <= 0.05, worst,
                       0.05, f"(smoothed at sigma={sigma_um} um)")


def run_all_checks(constants: PhysicalConstants = DEFAULT_CONSTANTS
                   ) -> list[CheckResult]:
    return [
        check_thermal_spectrum(constants=constants),
        check_dispersion(constants=constants),
        check_zero_mode_gap(constants=constants),
        check_sudden_merge(constants=constants),
    ]
