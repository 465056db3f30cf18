"""Deterministic Gaussian simulator of thermal machines on 1D quasi-condensates.

Covariance-matrix phonon dynamics under time-dependent quadratic
Hamiltonians, composable valve/piston primitives, and full refrigeration
protocols with entropy and energy diagnostics.
"""

__version__ = "0.1.0"

from .gaussian import (GaussianState, InvariantViolation, NormalModeDecomposition,
                       QuadraticHamiltonian, TemperatureFit, evolve, free_energy,
                       mutual_information, normal_modes, reduced_state,
                       relative_entropy, relative_entropy_to_thermal,
                       symplectic_eigenvalues, symplectic_form, temperature_fit,
                       thermal_state, total_energy, von_neumann_entropy)
from .lattice import (CouplingSpec, DensityProfile, build_profile, discretize,
                      glue_profiles, join_hamiltonians, split_hamiltonian)
from .oracles import (HomogeneousSpec, dispersion, evaporative_scaling,
                      sudden_merge_energy_density, zero_mode_gap)
from .protocols import (MachineLayout, OttoConfig, RunRecord, SubsystemSpec,
                        ValveConfig, cooling_report, run_anomalous, run_merge,
                        run_otto, run_piston_bath, run_piston_stroke)
from .qtp import (MergeConfig, TrajectoryFrame, compress, decorrelate,
                  energy_density, idle, ramp_valve, rescale_representation,
                  zero_mode_diffusion)
from .units import DEFAULT_CONSTANTS, PhysicalConstants
