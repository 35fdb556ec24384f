import math

import numpy as np
import pytest

from ionlayers import constants as const
from ionlayers.errors import ConfigError
from ionlayers.normalmodes import BRANCH_DRUMHEAD, BRANCH_EXB, modes_for_state
from ionlayers.odf import OdfConfig
from ionlayers.thermal import (
    ThermalSpec,
    lamb_dicke,
    mode_occupation,
    thermal_to_csv,
    z_variance,
)


def test_occupation_limits():
    assert mode_occupation(1e-6, 2 * math.pi * 1e8) == 0.0  # hw >> kT, no overflow
    w = 2 * math.pi * 1e6
    high_t = mode_occupation(1.0, w)
    assert high_t == pytest.approx(const.K_B * 1.0 / (const.HBAR * w), rel=1e-3)
    with pytest.raises(ConfigError):
        mode_occupation(-1.0, w)


def test_occupation_reference_points(bilayer, bilayer_modes):
    """The axial center-of-mass occupation at the two benchmark temperatures."""
    from ionlayers.normalmodes import identify_special_modes

    _, modes, _ = bilayer_modes
    special = identify_special_modes(modes, bilayer)
    w_cm = modes.frequencies[special.cm_index]
    assert 4.0 <= mode_occupation(450e-6, w_cm) <= 7.0  # quoted ~5
    assert 0.25 <= mode_occupation(50e-6, w_cm) <= 0.35  # quoted ~0.3


def test_thermal_spec_validation():
    with pytest.raises(ConfigError):
        ThermalSpec()
    with pytest.raises(ConfigError):
        ThermalSpec(temperature=1e-6, nbar=np.zeros(3))
    with pytest.raises(ConfigError):
        ThermalSpec.from_occupations([-1.0])


def test_single_ion_variance_exact():
    """One axial mode: <z^2> = hbar/(2 m w) (2 nbar + 1)."""
    from ionlayers.equilibrium import CrystalState
    from ionlayers.normalmodes import mode_metrics, stiffness_matrix, solve_modes
    from ionlayers.trapmodel import BE9, derive_parameters

    from conftest import make_trap

    trap = make_trap(180e3, n_ions=1, delta_wall=0.0)
    d = derive_parameters(trap, BE9)
    state = CrystalState(
        positions=np.zeros(3), energy=0.0, trap=trap, derived=d, species=BE9,
        meta={"grad_inf_norm_scaled": 0.0},
    )
    k = stiffness_matrix(state)
    modes = solve_modes(k, trap, BE9)
    met = mode_metrics(modes, k)
    t = 450e-6
    nbar = mode_occupation(t, trap.omega_z)
    expected = const.HBAR / (2 * BE9.mass * trap.omega_z) * (2 * nbar + 1)
    # restrict to the axial mode: in-plane modes carry no z motion anyway
    zv = z_variance(modes, met, ThermalSpec.from_temperature(t))
    assert zv[0] == pytest.approx(expected, rel=1e-9)


def test_zero_temperature_limit(bilayer_modes):
    k, modes, met = bilayer_modes
    zero_point = z_variance(modes, met, ThermalSpec.from_occupations(np.zeros(600)))
    cold = z_variance(modes, met, ThermalSpec.from_temperature(1e-12))
    np.testing.assert_allclose(cold, zero_point, rtol=1e-12)


def test_variance_monotonic_in_temperature(bilayer_modes):
    _, modes, met = bilayer_modes
    temps = (50e-6, 150e-6, 450e-6, 1.3e-3)
    variances = [
        z_variance(modes, met, ThermalSpec.from_temperature(t)) for t in temps
    ]
    for cold, warm in zip(variances, variances[1:]):
        assert np.all(warm >= cold)


def test_explicit_occupations_match_temperature(bilayer_modes):
    _, modes, met = bilayer_modes
    t = 450e-6
    nbar = mode_occupation(t, modes.frequencies)
    a = z_variance(modes, met, ThermalSpec.from_temperature(t))
    b = z_variance(modes, met, ThermalSpec.from_occupations(nbar))
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_classical_limit_matches_equipartition(bilayer_modes):
    """Independent oracle: at high temperature the configurational
    covariance is k T K^{-1}, magnetic field notwithstanding."""
    k, modes, met = bilayer_modes
    t = 0.05  # classical for every branch
    zv = z_variance(modes, met, ThermalSpec.from_temperature(t))
    reference = const.K_B * t * np.diag(np.linalg.inv(k))[2::3]
    assert np.max(np.abs(zv - reference) / reference) < 1e-6


def test_branch_split_variance(bilayer_modes):
    _, modes, met = bilayer_modes
    spec = ThermalSpec.from_temperature(450e-6)
    total = z_variance(modes, met, spec)
    parts = sum(
        z_variance(modes, met, spec, mode_subset=modes.branch_indices(b))
        for b in ("ExB", "Drumhead", "Cyclotron")
    )
    np.testing.assert_allclose(parts, total, rtol=1e-10)


def test_low_frequency_branch_dominates_worst_ion(bilayer_modes):
    """The in-plane branch, not the axial one, sets the extreme axial
    excursions at Doppler temperatures (it owes its z motion to the
    layered structure)."""
    _, modes, met = bilayer_modes
    spec = ThermalSpec.from_temperature(450e-6)
    exb = z_variance(modes, met, spec, mode_subset=modes.branch_indices(BRANCH_EXB))
    drum = z_variance(
        modes, met, spec, mode_subset=modes.branch_indices(BRANCH_DRUMHEAD)
    )
    worst = int(np.argmax(exb + drum))
    assert exb[worst] > drum[worst]


def test_lamb_dicke_scaling(bilayer_modes):
    _, modes, met = bilayer_modes
    zv = z_variance(modes, met, ThermalSpec.from_temperature(450e-6))
    odf = OdfConfig(wavelength=313e-9, theta=math.radians(1.0), f0=1e-23, mu_r=1.0)
    eta = lamb_dicke(zv, odf)
    np.testing.assert_allclose(eta, odf.delta_k * np.sqrt(zv), rtol=1e-14)
    smaller = OdfConfig(
        wavelength=313e-9, theta=math.radians(0.01), f0=1e-23, mu_r=1.0
    )
    assert lamb_dicke(zv, smaller).max() < 0.012 * eta.max()


def test_csv_export(tmp_path, bilayer_modes):
    _, modes, met = bilayer_modes
    zv = z_variance(modes, met, ThermalSpec.from_temperature(50e-6))
    odf = OdfConfig(wavelength=313e-9, theta=math.radians(1.0), f0=1e-23, mu_r=1.0)
    eta = lamb_dicke(zv, odf)
    path = tmp_path / "thermal.csv"
    thermal_to_csv(zv, eta, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "ion_index,z_rms_nm,eta"
    assert len(rows) == modes.n_ions + 1
