"""Physical constants and the internal unit system.

All public interfaces speak experiment units: lengths in micrometres,
times in milliseconds, temperatures in nanokelvin, tunnel couplings in
hertz.  Internally every matrix is expressed in the mixed system
(micrometre, millisecond, joule), which keeps Hamiltonian entries and
energies at sane float magnitudes without per-call unit juggling:

* energies                    J
* lengths                     um
* times                       ms
* frequencies                 rad/ms
* density fluctuations        atoms/um
* interaction strength g      J*um
* mass                        J*ms^2/um^2
"""

from __future__ import annotations

from dataclasses import dataclass

# CODATA values, SI.
HBAR_SI = 1.054571817e-34  # J*s
KB_SI = 1.380649e-23  # J/K
MASS_RB87_SI = 1.44316060e-25  # kg

# Unit conversion factors into the internal (um, ms, J) system.
_S_TO_MS = 1.0e3
_KG_TO_INTERNAL = 1.0e-6  # kg = J*s^2/m^2 -> J*ms^2/um^2
_NK_TO_K = 1.0e-9
_HZ_TO_PER_MS = 1.0e-3


@dataclass(frozen=True)
class PhysicalConstants:
    """Fundamental constants in SI; the defaults describe a Rb-87 gas."""

    hbar: float = HBAR_SI  # J*s
    k_B: float = KB_SI  # J/K
    atom_mass: float = MASS_RB87_SI  # kg

    def __post_init__(self) -> None:
        if self.hbar <= 0 or self.k_B <= 0 or self.atom_mass <= 0:
            raise ValueError("physical constants must be strictly positive")

    # Internal-unit views used throughout the numerical core.
    @property
    def hbar_j_ms(self) -> float:
        """hbar in J*ms."""
        return self.hbar * _S_TO_MS

    @property
    def mass_internal(self) -> float:
        """Atom mass in J*ms^2/um^2."""
        return self.atom_mass * _KG_TO_INTERNAL

    def kb_j_per_nk(self) -> float:
        """Boltzmann constant in J/nK."""
        return self.k_B * _NK_TO_K

    def thermal_energy(self, temperature_nk: float) -> float:
        """k_B*T in J for a temperature given in nK."""
        return self.kb_j_per_nk() * temperature_nk


DEFAULT_CONSTANTS = PhysicalConstants()


def tunnel_coupling_per_ms(j_hz: float) -> float:
    """Convert a phase-locking coupling from Hz to 1/ms."""
    return j_hz * _HZ_TO_PER_MS


def sound_speed_um_ms(g_jum: float, density_per_um: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Speed of sound c = sqrt(g*rho0/m) in um/ms."""
    return (g_jum * density_per_um / constants.mass_internal) ** 0.5


def interaction_from_sound_speed(c_um_ms: float, density_per_um: float,
                                 constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Interaction strength g = m*c^2/rho0 in J*um."""
    if c_um_ms <= 0 or density_per_um <= 0:
        raise ValueError("speed of sound and density must be positive")
    return constants.mass_internal * c_um_ms**2 / density_per_um


def healing_length_um(c_um_ms: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Healing length xi_h = hbar/(m*c) in um."""
    return constants.hbar_j_ms / (constants.mass_internal * c_um_ms)
