import warnings

import numpy as np
import pytest

from phonon_machines.lattice import CouplingSpec, build_profile, discretize


@pytest.fixture(autouse=True)
def _silence_healing_warning():
    # dz = 0.5 um deliberately sits above the healing length at the default
    # sound speed; the warning is asserted explicitly in test_lattice.
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="pixel size")
        warnings.filterwarnings("ignore", message="target pixel size")
        yield


@pytest.fixture(scope="session")
def homogeneous_box():
    """Standard homogeneous box: L=50 um, rho=100/um, c=2 um/ms, J=0.01 Hz."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        profile = build_profile("homogeneous", 50.0, 100.0, dz_um=0.5)
        coupling = CouplingSpec(sound_speed_um_ms=2.0,
                                reference_density_per_um=100.0, j_hz=0.01)
        ham = discretize(profile, coupling)
    return profile, coupling, ham


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
