"""Density profiles and discretized phonon Hamiltonians.

The continuum phase stiffness between neighbouring pixels enters through
the geometric mean eta_i = sqrt(rho(z_i) rho(z_i+1)), giving a tridiagonal
phase block with Neumann ends

    h_phi = (hbar^2 / m dz) tridiag(eta) + 8 pi^2 hbar dz diag(J(z) rho(z)),

while the density block is diagonal, h_rho = dz diag(g(z)).  The diagonal
phase-locking term gaps the global phase mode so thermal states are well
defined; it represents the tunnel-coupling energy h * (2 pi J) * rho * phi^2
with J an ordinary frequency in Hz, which pins the locking gap at
w_0 = 2 pi sqrt(2 g J rho / hbar).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.sparse import csr_array
from scipy.special import erf

from .gaussian import QuadraticHamiltonian
from .units import (DEFAULT_CONSTANTS, PhysicalConstants, healing_length_um,
                    interaction_from_sound_speed, sound_speed_um_ms,
                    tunnel_coupling_per_ms)

__all__ = [
    "DensityProfile",
    "CouplingSpec",
    "build_profile",
    "discretize",
    "glue_profiles",
    "split_hamiltonian",
    "join_hamiltonians",
]

ProfileKind = Literal["homogeneous", "erf_box", "trapeze"]


@dataclass
class DensityProfile:
    """Mean-field density rho0(z_i) sampled at pixel centres.

    Attributes:
        rho: atoms/um at each pixel.
        dz: pixel size in um.
        origin: coordinate of the left edge of the first pixel (um).
    """

    rho: np.ndarray
    dz: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.ndim != 1 or self.rho.size < 2:
            raise ValueError("profile needs at least two pixels")
        if np.any(self.rho <= 0):
            raise ValueError("density must be strictly positive everywhere")
        if not self.dz > 0:
            raise ValueError("dz must be positive")

    @property
    def n_pixels(self) -> int:
        return self.rho.size

    @property
    def length_um(self) -> float:
        return self.n_pixels * self.dz

    def pixel_centres(self) -> np.ndarray:
        return self.origin + (np.arange(self.n_pixels) + 0.5) * self.dz


@dataclass
class CouplingSpec:
    """Interaction and phase-locking couplings entering the Hamiltonian.

    Either a constant interaction derived from the speed of sound
    (``g = m c^2 / rho_peak``) or the transversal-confinement formula
    ``g(z) = hbar w_perp a_s (2 + 3 a_s rho) / (1 + 2 a_s rho)^(3/2)``.
    ``j_hz`` is the constant tunnel coupling in Hz; an explicit per-pixel
    ``j_profile_hz`` overrides it.
    """

    sound_speed_um_ms: float | None = 2.0
    reference_density_per_um: float = 100.0
    omega_perp_rad_s: float | None = None
    scattering_length_um: float | None = None
    j_hz: float = 0.01
    j_profile_hz: np.ndarray | None = None
    constants: PhysicalConstants = field(default_factory=lambda: DEFAULT_CONSTANTS)

    def __post_init__(self) -> None:
        transversal = self.omega_perp_rad_s is not None or self.scattering_length_um is not None
        if transversal and (self.omega_perp_rad_s is None or self.scattering_length_um is None):
            raise ValueError("transversal coupling needs both omega_perp and a_s")
        if not transversal and (self.sound_speed_um_ms is None or self.sound_speed_um_ms <= 0):
            raise ValueError("speed of sound must be positive")
        if self.j_hz < 0:
            raise ValueError("tunnel coupling must be non-negative")
        if self.j_profile_hz is not None:
            self.j_profile_hz = np.asarray(self.j_profile_hz, dtype=float)
            if np.any(self.j_profile_hz < 0):
                raise ValueError("tunnel coupling must be non-negative")

    def g_of_z(self, rho: np.ndarray) -> np.ndarray:
        """Interaction strength g(z) in J*um at the given densities."""
        if self.omega_perp_rad_s is not None:
            a_s = self.scattering_length_um
            hbar_j_ms = self.constants.hbar_j_ms
            omega_perp_per_ms = self.omega_perp_rad_s * 1e-3
            x = a_s * rho
            return (hbar_j_ms * omega_perp_per_ms * a_s
                    * (2.0 + 3.0 * x) / (1.0 + 2.0 * x) ** 1.5)
        g = interaction_from_sound_speed(self.sound_speed_um_ms,
                                         self.reference_density_per_um,
                                         self.constants)
        return np.full_like(rho, g)

    def j_of_z(self, n_pixels: int) -> np.ndarray:
        if self.j_profile_hz is not None:
            if self.j_profile_hz.size != n_pixels:
                raise ValueError("j_profile length does not match lattice")
            return self.j_profile_hz
        return np.full(n_pixels, self.j_hz)


def build_profile(kind: ProfileKind, length_um: float, peak_density_per_um: float,
                  edge_width_um: float = 4.0, edge_floor: float = 0.5,
                  dz_um: float = 0.5, origin_um: float = 0.0) -> DensityProfile:
    """Construct a sampled density profile.

    ``homogeneous`` is constant; ``erf_box`` falls off smoothly over
    ``edge_width_um`` at both ends down to ``edge_floor`` times the peak;
    ``trapeze`` uses linear ramps instead.
    """
    if length_um < 4 * dz_um:
        raise ValueError("profile must span at least four pixels")
    if not 0 < edge_floor <= 1:
        raise ValueError("edge_floor must lie in (0, 1]")
    if peak_density_per_um <= 0:
        raise ValueError("peak density must be positive")
    n = int(round(length_um / dz_um))
    z = origin_um + (np.arange(n) + 0.5) * dz_um
    rel_left = z - origin_um
    rel_right = origin_um + length_um - z
    if kind == "homogeneous":
        rho = np.full(n, peak_density_per_um)
    elif kind == "erf_box":
        w = edge_width_um
        ramp_l = 0.5 * (1.0 + erf((rel_left - w / 2.0) / (w / (2.0 * np.sqrt(2.0)))))
        ramp_r = 0.5 * (1.0 + erf((rel_right - w / 2.0) / (w / (2.0 * np.sqrt(2.0)))))
        shape = edge_floor + (1.0 - edge_floor) * ramp_l * ramp_r
        rho = peak_density_per_um * shape
    elif kind == "trapeze":
        w = edge_width_um
        ramp_l = np.clip(rel_left / w, 0.0, 1.0)
        ramp_r = np.clip(rel_right / w, 0.0, 1.0)
        shape = edge_floor + (1.0 - edge_floor) * np.minimum(ramp_l, ramp_r)
        rho = peak_density_per_um * shape
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    return DensityProfile(rho=rho, dz=dz_um, origin=origin_um)


def discretize(profile: DensityProfile, coupling: CouplingSpec) -> QuadraticHamiltonian:
    """Phonon Hamiltonian of a profile on its lattice.

    Warns when the pixel size exceeds the healing length at peak density,
    where the phononic description starts to miss physical length scales.
    """
    rho = profile.rho
    n = profile.n_pixels
    dz = profile.dz
    constants = coupling.constants
    g = coupling.g_of_z(rho)
    j_per_ms = tunnel_coupling_per_ms(coupling.j_of_z(n))

    eta = np.sqrt(rho[:-1] * rho[1:])
    stiff = constants.hbar_j_ms**2 / (constants.mass_internal * dz)
    h_phi = np.zeros((n, n))
    diag = np.zeros(n)
    diag[:-1] += eta
    diag[1:] += eta
    h_phi[np.arange(n), np.arange(n)] = stiff * diag
    h_phi[np.arange(n - 1), np.arange(1, n)] = -stiff * eta
    h_phi[np.arange(1, n), np.arange(n - 1)] = -stiff * eta
    # Phase locking at angular scale 2*pi*J with Planck-constant weight:
    # the quadratic-form diagonal is 8 pi^2 hbar dz J rho, gapping the
    # global phase mode at w_0 = 2 pi sqrt(2 g J rho / hbar).
    h_phi[np.arange(n), np.arange(n)] += (
        8.0 * np.pi**2 * constants.hbar_j_ms * dz * j_per_ms * rho)

    h_rho = dz * g

    c_peak = sound_speed_um_ms(float(g.max()), float(rho.max()), constants)
    xi = healing_length_um(c_peak, constants)
    if dz > xi:
        warnings.warn(
            f"pixel size {dz:.3f} um exceeds the healing length {xi:.3f} um; "
            "the lattice no longer resolves the shortest physical scale",
            stacklevel=2)
    return QuadraticHamiltonian(h_rho=h_rho, h_phi=h_phi, dz=dz)


def glue_profiles(a: DensityProfile, b: DensityProfile) -> DensityProfile:
    """Concatenate two profiles into one lattice (momentum cutoffs must match)."""
    if abs(a.dz - b.dz) > 1e-12 * a.dz:
        raise ValueError(
            "cutoff mismatch: profiles carry different dz, so their momentum "
            "cutoffs are inconsistent")
    return DensityProfile(rho=np.concatenate((a.rho, b.rho)), dz=a.dz,
                          origin=a.origin)


def _bond_matrix(n: int, cut: int, strength: float) -> csr_array:
    """Sparse phase-sector bond (+s, -s; -s, +s) on pixels (cut-1, cut)."""
    rows = np.array([cut - 1, cut, cut - 1, cut])
    cols = np.array([cut - 1, cut, cut, cut - 1])
    vals = np.array([strength, strength, -strength, -strength])
    return csr_array((vals, (rows, cols)), shape=(n, n))


def split_hamiltonian(joint: QuadraticHamiltonian, cut: int
                      ) -> tuple[QuadraticHamiltonian, QuadraticHamiltonian, csr_array]:
    """Cut a joint Hamiltonian into decoupled halves plus the interface bond.

    Removing the bond restores Neumann ends on both sides; the returned
    sparse ``h_int`` satisfies ``joint.h_phi = blockdiag parts + h_int``
    exactly.
    """
    n = joint.n_pixels
    if not 0 < cut < n:
        raise ValueError("cut out of range")
    coupling = -joint.h_phi[cut - 1, cut]
    if coupling == 0:
        raise ValueError("no bond across the requested cut")
    h_int = _bond_matrix(n, cut, coupling)
    h_phi_split = joint.h_phi - h_int.toarray()
    left = QuadraticHamiltonian(h_rho=joint.h_rho[:cut].copy(),
                                h_phi=h_phi_split[:cut, :cut].copy(), dz=joint.dz)
    right = QuadraticHamiltonian(h_rho=joint.h_rho[cut:].copy(),
                                 h_phi=h_phi_split[cut:, cut:].copy(), dz=joint.dz)
    return left, right, h_int


def join_hamiltonians(left: QuadraticHamiltonian, right: QuadraticHamiltonian,
                      eta_interface: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS
                      ) -> tuple[QuadraticHamiltonian, csr_array]:
    """Couple two lattices through a single interface bond.

    ``eta_interface`` is the geometric-mean density of the boundary pixels;
    the bond strength is (hbar^2 / m dz) eta, matching what ``discretize``
    of the glued profile would produce.
    """
    if abs(left.dz - right.dz) > 1e-12 * left.dz:
        raise ValueError("cutoff mismatch: joined parts must share dz")
    n = left.n_pixels + right.n_pixels
    h_rho = np.concatenate((left.h_rho, right.h_rho))
    h_phi = np.zeros((n, n))
    h_phi[:left.n_pixels, :left.n_pixels] = left.h_phi
    h_phi[left.n_pixels:, left.n_pixels:] = right.h_phi
    stiff = constants.hbar_j_ms**2 / (constants.mass_internal * left.dz)
    h_int = _bond_matrix(n, left.n_pixels, stiff * eta_interface)
    joint = QuadraticHamiltonian(h_rho=h_rho, h_phi=h_phi + h_int.toarray(),
                                 dz=left.dz)
    return joint, h_int
