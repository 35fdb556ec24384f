import math

import numpy as np
import pytest

from ionlayers import constants as const
from ionlayers.equilibrium import CrystalState
from ionlayers.errors import NotBilayer, UnstableEquilibrium
from ionlayers.normalmodes import (
    BRANCH_CYCLOTRON,
    BRANCH_DRUMHEAD,
    BRANCH_EXB,
    commutation_sum_check,
    eigenvectors_to_json,
    identify_special_modes,
    lorentz_matrix,
    mode_metrics,
    mode_table_to_csv,
    modes_for_state,
    quantize_modes,
    solve_modes,
    stiffness_matrix,
)
from ionlayers.equilibrium import hessian
from ionlayers.trapmodel import BE9, TrapConfig, derive_parameters

from conftest import make_trap
from oracles import integrate_linearized_eom


def _single_ion_state(delta_wall=0.0):
    trap = make_trap(180e3, n_ions=1, delta_wall=delta_wall)
    d = derive_parameters(trap, BE9)
    return CrystalState(
        positions=np.zeros(3), energy=0.0, trap=trap, derived=d, species=BE9,
        meta={"grad_inf_norm_scaled": 0.0},
    )


def _single_ion_analytic(trap):
    d = derive_parameters(trap, BE9)
    wcp, wp2 = d.omega_c_prime, d.omega_perp**2
    root = math.sqrt(wcp**2 + 4 * wp2)
    return (root - wcp) / 2, trap.omega_z, (root + wcp) / 2


class TestSingleIon:
    def test_frequencies_match_analytic(self):
        state = _single_ion_state()
        modes = modes_for_state(state)
        expected = _single_ion_analytic(state.trap)
        np.testing.assert_allclose(modes.frequencies, expected, rtol=1e-10)

    def test_metrics(self):
        state = _single_ion_state()
        k = stiffness_matrix(state)
        modes = solve_modes(k, state.trap, state.species)
        met = mode_metrics(modes, k)
        # axial mode: pure z, equal energy split, real eigenvector
        np.testing.assert_allclose(met.f_z, [0.0, 1.0, 0.0], atol=1e-12)
        assert met.r_ratio[1] == pytest.approx(1.0, abs=1e-12)
        assert met.r_ratio[0] > 1e2 and met.r_ratio[2] < 1e-2
        np.testing.assert_allclose(met.complexity, [1.0, 0.0, 1.0], atol=1e-9)

    def test_quantization_reduces_to_harmonic_form(self):
        state = _single_ion_state()
        k = stiffness_matrix(state)
        modes = solve_modes(k, state.trap, state.species)
        met = mode_metrics(modes, k)
        l0, c_n = quantize_modes(modes, met)
        expected = math.sqrt(const.HBAR / (2 * BE9.mass * state.trap.omega_z))
        assert l0[1] == pytest.approx(expected, rel=1e-12)
        np.testing.assert_allclose(c_n, l0, rtol=1e-12)

    def test_commutation_sum_exact(self):
        state = _single_ion_state()
        k = stiffness_matrix(state)
        modes = solve_modes(k, state.trap, state.species)
        met = mode_metrics(modes, k)
        res = commutation_sum_check(modes, met, k)
        assert np.max(np.abs(res)) < 1e-12


def test_stiffness_equals_potential_curvature(bilayer):
    k = stiffness_matrix(bilayer)
    h = hessian(bilayer.positions, bilayer.trap, bilayer.species)
    assert np.array_equal(k, h)
    assert np.array_equal(k, k.T)


def test_stiffness_warns_off_equilibrium(rng, bilayer):
    bad = CrystalState(
        positions=bilayer.positions * 1.01,
        energy=0.0,
        trap=bilayer.trap,
        derived=bilayer.derived,
        species=bilayer.species,
        meta={"grad_inf_norm_scaled": 1.0},
    )
    with pytest.warns(UserWarning, match="gradient norm"):
        stiffness_matrix(bad)


def test_lorentz_matrix_structure():
    trap = make_trap(210e3, n_ions=2)
    l_mat = lorentz_matrix(trap, BE9, 2)
    wcp = derive_parameters(trap, BE9).omega_c_prime
    v = np.array([1.0, 0, 0, 0, 0, 0])
    out = l_mat @ v
    assert out[1] == pytest.approx(-wcp)
    assert np.all(l_mat[2::3, :] == 0)
    assert np.array_equal(l_mat, -l_mat.T)


def test_unstable_configuration_raises(rng):
    trap = make_trap(210e3, c4=1.0, n_ions=4)
    d = derive_parameters(trap, BE9)
    positions = rng.uniform(-3, 3, 12) * d.l0
    k = hessian(positions, trap, BE9)
    with pytest.raises(UnstableEquilibrium) as info:
        solve_modes(k, trap, BE9)
    assert info.value.offenders


class TestSmallCrystal:
    def test_eigen_residuals(self, small_crystal):
        modes = modes_for_state(small_crystal)
        assert np.max(modes.residuals) < 1e-8

    def test_plus_minus_pairing(self, small_crystal):
        assert modes_for_state(small_crystal).n_modes == 18

    def test_phase_convention(self, small_crystal):
        modes = modes_for_state(small_crystal)
        for n in range(modes.n_modes):
            u = modes.eigenvectors[:, n]
            pivot = u[np.argmax(np.abs(u))]
            assert abs(pivot.imag) < 1e-12 * abs(pivot)
            assert pivot.real > 0

    def test_eigenmode_matches_integrated_motion(self, small_crystal):
        """Criterion 7d: linearized EOM integration oracle, one mode per branch."""
        state = small_crystal
        k = stiffness_matrix(state)
        modes = solve_modes(k, state.trap, state.species)
        l_mat = lorentz_matrix(state.trap, state.species, state.n_ions)
        for idx in (2, 8, 14):
            u = modes.eigenvectors[:, idx]
            w = modes.frequencies[idx]
            _, trajectory, reference = integrate_linearized_eom(
                k, l_mat, state.species.mass, u, w, n_periods=10
            )
            err = np.max(np.abs(trajectory[: k.shape[0]] - reference[: k.shape[0]]))
            assert err < 1e-6


class TestMonolayer:
    def test_stiffness_block_diagonal(self, monolayer, monolayer_modes):
        k, _, _ = monolayer_modes
        n = monolayer.n_ions
        blocks = k.reshape(n, 3, n, 3)
        scale = np.abs(k).max()
        assert np.abs(blocks[:, 0, :, 2]).max() <= 1e-12 * scale
        assert np.abs(blocks[:, 1, :, 2]).max() <= 1e-12 * scale

    def test_drumhead_purely_axial(self, monolayer_modes):
        _, modes, met = monolayer_modes
        drum = modes.branch_indices(BRANCH_DRUMHEAD)
        xy = modes.eigenvectors.reshape(-1, 3, modes.n_modes)[:, :2, drum]
        assert np.abs(xy).max() < 1e-10
        assert np.all(met.f_z[drum] > 1.0 - 1e-12)
        assert np.abs(met.r_ratio[drum] - 1.0).max() < 1e-6
        assert met.complexity[drum].max() < 1e-6

    def test_cm_is_top_drumhead_with_uniform_pattern(self, monolayer, monolayer_modes):
        _, modes, _ = monolayer_modes
        special = identify_special_modes(modes, monolayer, want_breathing=False)
        assert special.cm_index == special.top_drumhead_index
        assert modes.frequencies[special.cm_index] == pytest.approx(
            monolayer.trap.omega_z, rel=1e-9
        )
        uz = modes.z_components()[:, special.cm_index]
        assert np.std(np.abs(uz)) / np.mean(np.abs(uz)) < 1e-6

    def test_breathing_requires_layers(self, monolayer, monolayer_modes):
        _, modes, _ = monolayer_modes
        with pytest.raises(NotBilayer):
            identify_special_modes(modes, monolayer)


class TestBilayer:
    def test_branch_structure(self, bilayer_modes):
        _, modes, _ = bilayer_modes
        assert modes.n_modes == 600
        for branch in (BRANCH_EXB, BRANCH_DRUMHEAD, BRANCH_CYCLOTRON):
            assert modes.branch_indices(branch).size == 200

    def test_special_modes(self, bilayer, bilayer_modes):
        _, modes, _ = bilayer_modes
        special = identify_special_modes(modes, bilayer)
        assert special.breathing_index == special.top_drumhead_index
        assert special.cm_index != special.top_drumhead_index

    def test_chiral_drumhead_exists(self, bilayer_modes):
        _, modes, met = bilayer_modes
        drum = modes.branch_indices(BRANCH_DRUMHEAD)
        assert met.complexity[drum].max() > 0.7

    def test_commutation_sum(self, bilayer_modes):
        k, modes, met = bilayer_modes
        res = commutation_sum_check(modes, met, k)
        assert np.max(np.abs(res)) < 1e-6

    def test_commutation_negative_control(self, bilayer_modes):
        """Dropping a mode must leave a hole the size of its energy share."""
        k, modes, met = bilayer_modes
        u = modes.eigenvectors
        m = modes.species.mass
        ku_conj = k @ np.conj(u)
        numer = (m * modes.frequencies[None, :] ** 2 * np.abs(u) ** 2
                 + np.real(u * ku_conj))
        denom = m * modes.frequencies**2 * (1.0 + met.r_ratio)
        terms = numer / denom[None, :]
        dropped = terms.sum(axis=1) - terms[:, 300]
        assert np.max(np.abs(dropped - 1.0)) > 1e-4

    def test_cm_zero_point_near_harmonic_value(self, bilayer, bilayer_modes):
        _, modes, met = bilayer_modes
        special = identify_special_modes(modes, bilayer)
        w = modes.frequencies[special.cm_index]
        harmonic = math.sqrt(const.HBAR / (2 * BE9.mass * w))
        assert met.l0[special.cm_index] == pytest.approx(harmonic, rel=0.01)


def test_cyclotron_branch_approaches_wc_prime():
    """With a much larger field the top branch pins to the effective
    cyclotron frequency, within O(omega_z^2 / omega_c')."""
    from ionlayers.equilibrium import OptimizerConfig, basin_hop

    trap = make_trap(210e3, n_ions=6, delta_wall=0.02, b_z=5 * 4.4588)
    state = basin_hop(trap, OptimizerConfig(n_steps=8, t_start=0.03), seed=11)
    d = derive_parameters(trap, BE9)
    modes = modes_for_state(state)
    cyc = modes.frequencies[modes.branch_indices(BRANCH_CYCLOTRON)]
    bound = 3.0 * trap.omega_z**2 / d.omega_c_prime
    assert np.max(np.abs(cyc - d.omega_c_prime)) < bound


def test_exports(tmp_path, small_crystal):
    state = small_crystal
    k = stiffness_matrix(state)
    modes = solve_modes(k, state.trap, state.species)
    met = mode_metrics(modes, k)
    csv_path = tmp_path / "modes.csv"
    mode_table_to_csv(modes, met, csv_path)
    rows = csv_path.read_text().strip().splitlines()
    assert rows[0] == "index,freq_hz,branch,f_z,R,I,l0_nm"
    assert len(rows) == modes.n_modes + 1
    json_path = tmp_path / "vecs.json"
    eigenvectors_to_json(modes, json_path)
    import json

    payload = json.loads(json_path.read_text())
    assert payload["meta"]["ordering"].startswith("x1,y1,z1")
    vec = np.array(payload["eigenvectors"][0])
    rebuilt = vec[:, 0] + 1j * vec[:, 1]
    np.testing.assert_allclose(rebuilt, modes.eigenvectors[:, 0], atol=1e-12)
