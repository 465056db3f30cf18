"""Thermodynamic primitives: valve (merge/split), idle drift, piston
(compress/expand), decorrelation, and per-pixel energy diagnostics.

Time-dependent ramps are Trotterized with midpoint sampling: the linear
interpolation ``H(t) = (1 - t/T) H_a + (t/T) H_b`` is applied as a product
of exact short-time propagators evaluated at interval midpoints, which
makes the scheme second order in the step size.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import gaussian
from .gaussian import (GaussianState, InvariantViolation, QuadraticHamiltonian,
                       energy_density)
from .lattice import CouplingSpec, DensityProfile, discretize
from .units import DEFAULT_CONSTANTS, PhysicalConstants, healing_length_um, sound_speed_um_ms

__all__ = [
    "TrajectoryFrame",
    "MergeConfig",
    "DT_MAX_MS_DEFAULT",
    "default_step_count",
    "ramp_valve",
    "idle",
    "decorrelate",
    "compress",
    "energy_density",
    "zero_mode_diffusion",
    "rescale_representation",
]

DT_MAX_MS_DEFAULT = 0.05


def default_step_count(duration_ms: float, dt_max_ms: float = DT_MAX_MS_DEFAULT) -> int:
    """Steps needed to keep the Trotter interval at or below ``dt_max_ms``."""
    if duration_ms <= 0:
        return 1
    return max(1, int(math.ceil(duration_ms / dt_max_ms)))


@dataclass
class TrajectoryFrame:
    """Snapshot of a trajectory: state, instantaneous Hamiltonian, and the
    per-pixel energies (J) they imply.  ``labels`` holds subsystem boundary
    pixel indices; ``pixel_width_um`` tracks physical pixel sizes, which
    differ from ``state.dz`` only in rescaled representations."""

    time_ms: float
    state: GaussianState
    ham: QuadraticHamiltonian
    energy: np.ndarray
    labels: tuple[int, ...] = ()
    pixel_width_um: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.pixel_width_um is None:
            self.pixel_width_um = np.full(self.state.n_pixels, self.state.dz)

    def recomputed_energy(self) -> np.ndarray:
        return energy_density(self.state, self.ham)


@dataclass(frozen=True)
class MergeConfig:
    """Timing of a valve ramp."""

    t_merge_ms: float
    n_steps: int
    direction: Literal["merge", "split"] = "merge"

    def __post_init__(self) -> None:
        if self.t_merge_ms < 0:
            raise ValueError("ramp time must be non-negative")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.direction not in ("merge", "split"):
            raise ValueError("direction must be 'merge' or 'split'")


def _make_frame(time_ms: float, cov: np.ndarray, mean: np.ndarray, dz: float,
                ham: QuadraticHamiltonian, labels: tuple[int, ...],
                validate: bool, width: np.ndarray | None = None) -> TrajectoryFrame:
    state = GaussianState(cov=cov.copy(), mean=mean.copy(), dz=dz)
    if validate:
        state.validate()
    return TrajectoryFrame(time_ms=time_ms, state=state, ham=ham,
                           energy=energy_density(state, ham), labels=labels,
                           pixel_width_um=width)


def ramp_valve(state: GaussianState, h_uncoupled: QuadraticHamiltonian,
               h_coupled: QuadraticHamiltonian, cfg: MergeConfig,
               frame_stride: int = 20, labels: tuple[int, ...] = (),
               constants: PhysicalConstants = DEFAULT_CONSTANTS,
               validate_frames: bool = True) -> list[TrajectoryFrame]:
    """Open or close the valve between two condensates.

    Interpolates linearly from the uncoupled to the coupled Hamiltonian
    (or the reverse for ``direction='split'``) over ``cfg.t_merge_ms`` and
    emits a frame every ``frame_stride`` Trotter steps.
    """
    for ham in (h_uncoupled, h_coupled):
        if ham.n_pixels != state.n_pixels:
            raise ValueError("Hamiltonian size does not match the state")
        if abs(ham.dz - state.dz) > 1e-12 * state.dz:
            raise ValueError("cutoff mismatch between state and Hamiltonians")
    if frame_stride < 1:
        raise ValueError("frame_stride must be positive")

    def ham_at(s: float) -> QuadraticHamiltonian:
        return QuadraticHamiltonian(
            h_rho=(1 - s) * h_uncoupled.h_rho + s * h_coupled.h_rho,
            h_phi=(1 - s) * h_uncoupled.h_phi + s * h_coupled.h_phi,
            dz=state.dz)

    def s_of(frac: float) -> float:
        return frac if cfg.direction == "merge" else 1.0 - frac

    frames = [_make_frame(0.0, state.cov, state.mean, state.dz,
                          ham_at(s_of(0.0)), labels, validate_frames)]
    if cfg.t_merge_ms == 0:
        return frames

    n = cfg.n_steps
    dt = cfg.t_merge_ms / n
    hbar = constants.hbar_j_ms
    cov, mean = state.cov.copy(), state.mean.copy()
    d_rho = h_coupled.h_rho - h_uncoupled.h_rho
    d_phi = h_coupled.h_phi - h_uncoupled.h_phi
    for j in range(1, n + 1):
        s = s_of((j - 0.5) / n)
        h_rho = h_uncoupled.h_rho + s * d_rho
        h_phi = h_uncoupled.h_phi + s * d_phi
        cov, mean = gaussian._step_cov_mean(cov, mean, h_rho, h_phi, dt,
                                            state.dz, hbar)
        if j % frame_stride == 0 or j == n:
            frames.append(_make_frame(j * dt, cov, mean, state.dz,
                                      ham_at(s_of(j / n)), labels,
                                      validate_frames))
    return frames


def idle(state: GaussianState, ham: QuadraticHamiltonian, duration_ms: float,
         frame_stride: int = 20, dt_max_ms: float = DT_MAX_MS_DEFAULT,
         labels: tuple[int, ...] = (),
         constants: PhysicalConstants = DEFAULT_CONSTANTS,
         validate_frames: bool = True) -> list[TrajectoryFrame]:
    """Evolve under a fixed Hamiltonian, one exact propagator per frame."""
    if duration_ms < 0:
        raise ValueError("duration must be non-negative")
    frames = [_make_frame(0.0, state.cov, state.mean, state.dz, ham, labels,
                          validate_frames)]
    if duration_ms == 0:
        return frames
    n_frames = max(1, int(math.ceil(duration_ms / (frame_stride * dt_max_ms))))
    dt = duration_ms / n_frames
    w, lam, o = gaussian._phase_mode_decomposition(ham.h_rho, ham.h_phi)
    cov, mean = state.cov.copy(), state.mean.copy()
    for j in range(1, n_frames + 1):
        cov, mean = gaussian._apply_rotation(cov, mean, w, lam, o, dt,
                                             state.dz, constants.hbar_j_ms)
        frames.append(_make_frame(j * dt, cov, mean, state.dz, ham, labels,
                                  validate_frames))
    return frames


def decorrelate(state: GaussianState, cut: int) -> GaussianState:
    """Drop all correlations across a pixel cut (both quadrature sectors).

    Projects the covariance onto the direct sum of the two local blocks;
    local reduced states, and therefore local energies of a block-local
    Hamiltonian, are untouched.
    """
    n = state.n_pixels
    if not 0 < cut < n:
        raise ValueError("cut must split the lattice into two non-empty parts")
    left = np.concatenate((np.arange(cut), n + np.arange(cut)))
    right = np.concatenate((np.arange(cut, n), n + np.arange(cut, n)))
    cov = state.cov.copy()
    cov[np.ix_(left, right)] = 0.0
    cov[np.ix_(right, left)] = 0.0
    return GaussianState(cov=cov, mean=state.mean.copy(), dz=state.dz)


def rescale_representation(state: GaussianState, ham: QuadraticHamiltonian,
                           dz_target: float
                           ) -> tuple[GaussianState, QuadraticHamiltonian]:
    """Re-express a condensate on a lattice with a different cutoff.

    The commutator rescaling ``X -> sqrt(dz/dz_target) X`` is exact: it
    leaves every observable (energies, entropies, symplectic spectra)
    unchanged while making the state compatible with neighbours that carry
    ``dz_target``.  Needed to couple a compressed piston back to its bath.
    """
    if dz_target <= 0:
        raise ValueError("target dz must be positive")
    ratio = state.dz / dz_target
    cov = ratio * state.cov
    mean = math.sqrt(ratio) * state.mean
    new_state = GaussianState(cov=cov, mean=mean, dz=dz_target)
    new_ham = QuadraticHamiltonian(h_rho=ham.h_rho / ratio,
                                   h_phi=ham.h_phi / ratio, dz=dz_target)
    return new_state, new_ham


def _homogeneous_density(profile: DensityProfile) -> float:
    rho = profile.rho
    if (rho.max() - rho.min()) > 1e-9 * rho.max():
        raise ValueError("compression assumes a homogeneous profile")
    return float(rho.mean())


def compress(state: GaussianState, profile: DensityProfile,
             coupling: CouplingSpec, length_ratio: float, t_comp_ms: float,
             n_steps: int | None = None, frame_stride: int = 20,
             labels: tuple[int, ...] = (),
             constants: PhysicalConstants = DEFAULT_CONSTANTS,
             validate_frames: bool = True
             ) -> tuple[list[TrajectoryFrame], DensityProfile]:
    """Change the length of a homogeneous condensate at fixed atom number.

    The length ramps linearly to ``length_ratio`` times its initial value
    over ``t_comp_ms``; each Trotter step rebuilds the Hamiltonian with the
    stretched cutoff and rescaled density, evolves exactly, and applies the
    cone-switch factor dz_old/dz_new so the state satisfies the Heisenberg
    constraint of the new cutoff.  Returns the frames and the final profile.
    """
    if length_ratio <= 0:
        raise ValueError("length ratio must be positive")
    if t_comp_ms <= 0:
        raise ValueError("compression time must be positive")
    rho0 = _homogeneous_density(profile)
    n = profile.n_pixels
    if state.n_pixels != n:
        raise ValueError("state and profile sizes differ")
    if abs(state.dz - profile.dz) > 1e-12 * profile.dz:
        raise ValueError("state and profile use different cutoffs")
    if n_steps is None:
        n_steps = default_step_count(t_comp_ms)
    dz0 = profile.dz
    length0 = n * dz0

    g_ref = float(coupling.g_of_z(np.array([rho0]))[0])
    dz_final = dz0 * length_ratio
    c_final = sound_speed_um_ms(g_ref, rho0 / length_ratio, constants)
    if dz_final > healing_length_um(c_final, constants):
        warnings.warn(
            f"target pixel size {dz_final:.3f} um exceeds the healing length; "
            "the expanded lattice under-resolves the gas", stacklevel=2)

    def length_at(frac: float) -> float:
        return length0 * (1.0 + (length_ratio - 1.0) * frac)

    def ham_at(frac: float) -> QuadraticHamiltonian:
        length = length_at(frac)
        prof = DensityProfile(rho=np.full(n, rho0 * length0 / length),
                              dz=length / n, origin=profile.origin)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return discretize(prof, coupling)

    j_diag_ref = None
    dt = t_comp_ms / n_steps
    hbar = constants.hbar_j_ms
    cov, mean = state.cov.copy(), state.mean.copy()
    frames = [_make_frame(0.0, cov, mean, dz0, ham_at(0.0), labels,
                          validate_frames)]
    for j in range(1, n_steps + 1):
        dz_prev = length_at((j - 1) / n_steps) / n
        dz_new = length_at(j / n_steps) / n
        ham_mid = ham_at((j - 0.5) / n_steps)
        # Homogeneous length changes leave the phase-locking term alone.
        j_diag = np.diag(ham_mid.h_phi) - (-np.diag(ham_mid.h_phi, 1)[0]
                                           * np.r_[1.0, 2.0 * np.ones(n - 2), 1.0])
        if j_diag_ref is None:
            j_diag_ref = j_diag
        elif not np.allclose(j_diag, j_diag_ref, rtol=1e-10, atol=0.0):
            raise InvariantViolation("phase-locking term invariant under compression")
        cov, mean = gaussian._step_cov_mean(cov, mean, ham_mid.h_rho,
                                            ham_mid.h_phi, dt, ham_mid.dz, hbar)
        cov *= dz_prev / dz_new
        mean *= math.sqrt(dz_prev / dz_new)
        if j % frame_stride == 0 or j == n_steps:
            frames.append(_make_frame(j * dt, cov, mean, dz_new,
                                      ham_at(j / n_steps), labels,
                                      validate_frames))
    final_profile = DensityProfile(rho=np.full(n, rho0 / length_ratio),
                                   dz=dz_final, origin=profile.origin)
    return frames, final_profile


def zero_mode_diffusion(phi0_var: float, rho0_var: float, g_jum: float,
                        t_ms: float,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Ballistic growth of the free phase zero mode after quenching J to 0:
    <phi_ZM^2(t)> = <phi_0^2> + (g t / hbar)^2 <drho_0^2>."""
    if phi0_var < 0 or rho0_var < 0:
        raise ValueError("variances must be non-negative")
    rate = g_jum * t_ms / constants.hbar_j_ms
    return phi0_var + rate**2 * rho0_var
