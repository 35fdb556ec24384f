import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionlayers.errors import BetaZero, ConfigError, RadialUnconfined, RotationOutOfRange
from ionlayers.trapmodel import (
    BE9,
    TrapConfig,
    c4_from_electrode_voltage,
    derive_parameters,
    electrode_voltage_from_c4,
    parse_flat_config,
    species_by_name,
    trap_from_mapping,
)

from conftest import make_trap


def test_cyclotron_frequency_be9():
    params = derive_parameters(make_trap(200e3), BE9)
    assert abs(params.omega_c / (2 * math.pi) - 7.5973e6) < 0.0005e6


def test_beta_c_n200():
    params = derive_parameters(make_trap(200e3, n_ions=200), BE9)
    assert abs(params.beta_c - 0.047) < 0.001


@pytest.mark.parametrize(
    "omega_r_hz,expected",
    [(180e3, 0.186), (200e3, 1.355), (210e3, 1.938), (220e3, 2.518)],
)
def test_beta_ratio_reference_points(omega_r_hz, expected):
    params = derive_parameters(make_trap(omega_r_hz), BE9)
    assert abs(params.beta_ratio - expected) < 0.01


def test_omega_c_prime_vanishes_at_half_cyclotron():
    omega_c = derive_parameters(make_trap(200e3), BE9).omega_c
    trap = TrapConfig(
        b_z=4.4588, omega_z=2 * math.pi * 1.62e6, omega_r=omega_c / 2, n_ions=200
    )
    assert derive_parameters(trap, BE9).omega_c_prime == pytest.approx(0.0, abs=1e-6)


def test_derived_fields_consistent():
    trap = make_trap(210e3, n_ions=200)
    p = derive_parameters(trap, BE9)
    assert p.omega_c == pytest.approx(BE9.charge * trap.b_z / BE9.mass, rel=1e-14)
    assert p.omega_c_prime == pytest.approx(p.omega_c - 2 * trap.omega_r, rel=1e-14)
    assert p.beta == pytest.approx(p.omega_perp**2 / trap.omega_z**2, rel=1e-14)
    assert p.r_p0 == pytest.approx((3 * math.pi * 200 / 4) ** (1 / 3) * p.a0, rel=1e-14)
    assert p.e0 == pytest.approx(0.5 * BE9.mass * p.l0**2 * trap.omega_z**2, rel=1e-14)
    # purity: identical on re-derivation
    assert derive_parameters(trap, BE9) == p


def test_rotation_out_of_range():
    omega_c = derive_parameters(make_trap(200e3), BE9).omega_c
    with pytest.raises(RotationOutOfRange):
        derive_parameters(
            TrapConfig(b_z=4.4588, omega_z=1e6, omega_r=1.5 * omega_c, n_ions=10), BE9
        )


def test_radially_unconfined():
    with pytest.raises(RadialUnconfined):
        derive_parameters(make_trap(80e3), BE9)  # too slow to confine at 1.62 MHz


def test_config_invariants():
    with pytest.raises(ConfigError):
        TrapConfig(b_z=-1.0, omega_z=1e6, omega_r=1e5)
    with pytest.raises(ConfigError):
        TrapConfig(b_z=1.0, omega_z=1e6, omega_r=1e5, delta_wall=-0.1)
    with pytest.raises(ConfigError):
        TrapConfig(b_z=1.0, omega_z=1e6, omega_r=1e5, n_ions=0)


def test_from_axial_voltage():
    trap = make_trap(200e3)
    v_z = BE9.mass * trap.omega_z**2 / (2 * BE9.charge)
    built = TrapConfig.from_axial_voltage(
        v_z, BE9, b_z=4.4588, omega_r=trap.omega_r, n_ions=200
    )
    assert built.omega_z == pytest.approx(trap.omega_z, rel=1e-14)


def test_c4_zero_voltage_and_d_scaling():
    trap = make_trap(210e3)
    assert c4_from_electrode_voltage(0.0, 0.01, trap, BE9) == 0.0
    c1 = c4_from_electrode_voltage(5.0, 0.01, trap, BE9)
    c2 = c4_from_electrode_voltage(5.0, 0.02, trap, BE9)
    assert c2 == pytest.approx(c1 / 16.0, rel=1e-12)


def _omega_r_for_beta(beta, omega_z, omega_c):
    # solve omega_r (omega_c - omega_r) = (beta + 1/2) omega_z^2, lower root
    c = (beta + 0.5) * omega_z**2
    return (omega_c - math.sqrt(omega_c**2 - 4 * c)) / 2


def test_c4_superlinear_in_n_at_fixed_beta_ratio():
    omega_z = 2 * math.pi * 1.62e6
    omega_c = BE9.charge * 4.4588 / BE9.mass
    ratio = 1.9
    traps = {}
    for n in (200, 1000):
        beta = ratio * 0.665 / math.sqrt(n)
        traps[n] = TrapConfig(
            b_z=4.4588, omega_z=omega_z,
            omega_r=_omega_r_for_beta(beta, omega_z, omega_c), n_ions=n,
        )
    c_200 = c4_from_electrode_voltage(5.0, 0.01, traps[200], BE9)
    c_1000 = c4_from_electrode_voltage(5.0, 0.01, traps[1000], BE9)
    assert c_1000 / c_200 == pytest.approx(5.0**1.5, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(v4=st.floats(min_value=1e-3, max_value=1e3), d=st.floats(min_value=1e-3, max_value=1.0))
def test_c4_voltage_roundtrip(v4, d):
    trap = make_trap(210e3)
    c4 = c4_from_electrode_voltage(v4, d, trap, BE9)
    back = electrode_voltage_from_c4(c4, d, trap, BE9)
    assert abs(back - v4) <= 1e-12 * abs(v4)


def test_beta_zero_guard():
    # tune omega_r so that omega_perp^2 is essentially zero: beta ~ 0
    omega_z = 2 * math.pi * 1.62e6
    omega_c = BE9.charge * 4.4588 / BE9.mass
    omega_r = _omega_r_for_beta(1e-17, omega_z, omega_c)
    trap = TrapConfig(b_z=4.4588, omega_z=omega_z, omega_r=omega_r, n_ions=200)
    try:
        c4_from_electrode_voltage(1.0, 0.01, trap, BE9)
    except (BetaZero, RadialUnconfined):
        pass  # either guard is acceptable at the degenerate point


def test_beta_ratio_monotonic_in_omega_r():
    omega_c = derive_parameters(make_trap(200e3), BE9).omega_c
    grid_hz = np.linspace(178e3, omega_c / (2 * 2 * math.pi) * 0.999, 40)
    ratios = [derive_parameters(make_trap(f), BE9).beta_ratio for f in grid_hz]
    assert np.all(np.diff(ratios) > 0)


def test_parse_flat_config():
    text = """
    # a comment
    bz_tesla = 4.4588
    omega_z_hz = 1.62e6   # inline comment
    omega_r_hz = 210e3
    delta_wall = 0.00183
    c4 = 1.63
    n_ions = 200
    species = 9Be+
    """
    trap, species = trap_from_mapping(parse_flat_config(text))
    assert species is BE9
    assert trap.omega_z == pytest.approx(2 * math.pi * 1.62e6)
    assert trap.omega_r == pytest.approx(2 * math.pi * 210e3)
    assert trap.n_ions == 200


def test_parse_flat_config_errors():
    with pytest.raises(ConfigError):
        parse_flat_config("not a key value line")
    with pytest.raises(ConfigError):
        trap_from_mapping({"bz_tesla": "4.4588"})  # missing keys
    with pytest.raises(ConfigError):
        species_by_name("unobtainium")
