"""Layered ion crystals in Penning traps: equilibria, modes, spin couplings."""

from . import constants, errors
from .equilibrium import (
    CrystalState,
    EnsembleResult,
    OptimizerConfig,
    ZHistogram,
    basin_hop,
    classify_layers,
    entropy,
    equilibrate_ensemble,
    gradient,
    hessian,
    load_crystal,
    local_minimize,
    potential_energy,
    save_crystal,
    with_layers,
    z_histogram,
)
from .normalmodes import (
    ModeMetrics,
    ModeSet,
    SpecialModes,
    commutation_sum_check,
    identify_special_modes,
    mode_metrics,
    modes_for_state,
    quantize_modes,
    solve_modes,
    stiffness_matrix,
)
from .odf import (
    CouplingMatrix,
    ExchangeModel,
    OdfConfig,
    PhaseData,
    dm_decomposition,
    exchange_couplings,
    ising_couplings,
    j_rel,
    odf_phases,
    solve_theta_for_phase,
    spin_motion_alpha,
    tipping_exact,
    tipping_meanfield,
    two_tone_couplings,
)
from .thermal import ThermalSpec, lamb_dicke, mode_occupation, z_variance
from .trapmodel import (
    BE9,
    DerivedParams,
    IonSpecies,
    TrapConfig,
    c4_from_electrode_voltage,
    derive_parameters,
    electrode_voltage_from_c4,
    load_trap_config,
    species_by_name,
)

__version__ = "0.1.0"
