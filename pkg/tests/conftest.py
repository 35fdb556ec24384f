import math
import pathlib

import numpy as np
import pytest

from ionlayers.equilibrium import load_crystal
from ionlayers.normalmodes import mode_metrics, modes_for_state, stiffness_matrix
from ionlayers.trapmodel import BE9, TrapConfig, derive_parameters

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# effective ODF lattice wavelength at theta = 1 deg for 313 nm beams
LAMBDA_ODF_1DEG = 2 * math.pi / (
    2.0 * (2 * math.pi / 313e-9) * math.sin(math.radians(1.0))
)

BASE_TRAP = dict(b_z=4.4588, omega_z=2 * math.pi * 1.62e6, delta_wall=0.00183)


def make_trap(omega_r_hz, c4=0.0, n_ions=200, **overrides):
    settings = dict(BASE_TRAP)
    settings.update(overrides)
    return TrapConfig(
        omega_r=2 * math.pi * omega_r_hz, c4=c4, n_ions=n_ions, **settings
    )


@pytest.fixture(scope="session")
def bilayer():
    return load_crystal(FIXTURES / "bilayer_n200.json")


@pytest.fixture(scope="session")
def monolayer():
    return load_crystal(FIXTURES / "monolayer_n200.json")


@pytest.fixture(scope="session")
def bilayer_modes(bilayer):
    """(k_matrix, modes, metrics) for the bilayer fixture; one solve per session."""
    k_matrix = stiffness_matrix(bilayer)
    modes = modes_for_state(bilayer)
    return k_matrix, modes, mode_metrics(modes, k_matrix)


@pytest.fixture(scope="session")
def monolayer_modes(monolayer):
    k_matrix = stiffness_matrix(monolayer)
    modes = modes_for_state(monolayer)
    return k_matrix, modes, mode_metrics(modes, k_matrix)


@pytest.fixture(scope="session")
def small_crystal():
    """A converged N=6 crystal for cheap mode tests.

    The wall is stiffer than the production value so the azimuthal mode is
    not pathologically soft (a 17 Hz mode leaves no double-precision room
    for 1/omega^2-normalized residuals).
    """
    from ionlayers.equilibrium import OptimizerConfig, basin_hop

    trap = make_trap(210e3, c4=0.5, n_ions=6, delta_wall=0.02)
    return basin_hop(trap, OptimizerConfig(n_steps=8, t_start=0.03), seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture(scope="session")
def be9_derived():
    trap = make_trap(210e3)
    return derive_parameters(trap, BE9)
