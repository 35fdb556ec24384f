"""Optical-dipole-force geometry and effective spin models.

A pair of beams crossing at +-theta to the crystal plane forms a traveling
1D lattice along z with difference wavevector dk = 2 k sin(theta).  Every
ion picks up a static lattice phase phi_j = -dk z_j; the mean interlayer
phase difference Phi is the control knob for interlayer couplings.

Couplings are accumulated phases: CouplingMatrix.values holds the
dimensionless spin-spin phase Theta_jk collected over the interaction
time; divide by tau (``rate_values``) for the conventional rad/s rates.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import constants as const
from .equilibrium import CrystalState
from .errors import (
    ConfigError,
    DetuningMismatch,
    ExchangeResonance,
    NoSolutionInWindow,
    NotBilayer,
    ResonantMode,
)
from .normalmodes import BRANCH_DRUMHEAD, BRANCH_EXB, ModeMetrics, ModeSet, SpecialModes

DELTA_MIN = 2 * math.pi * 10.0  # resonance guard on 1/detuning formulas, rad/s
RWA_RATIO_WARN = 1e-2

_EXB_CAVEAT = (
    "including low-frequency in-plane modes in coupling sums: the secular "
    "approximation behind these closed forms degrades for them"
)


@dataclass(frozen=True)
class OdfConfig:
    """Lattice geometry and drive strengths (SI: m, rad, N, rad/s)."""

    wavelength: float
    theta: float
    f0: float
    mu_r: float
    f1: float = 0.0
    mu_r1: float | None = None
    phi0: float = 0.0  # relative phase between the two lattices
    b0: float = 0.0  # transverse-field Rabi frequency

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ConfigError("wavelength must be positive")
        if not 0.0 < self.theta < math.pi / 2:
            raise ConfigError("theta must lie in (0, pi/2)")
        if self.f0 < 0 or self.f1 < 0:
            raise ConfigError("force magnitudes must be >= 0")

    @property
    def k_odf(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def delta_k(self) -> float:
        return 2.0 * self.k_odf * math.sin(self.theta)

    @property
    def lattice_wavelength(self) -> float:
        """Effective wavelength of the interference lattice, 2 pi / dk."""
        return 2 * math.pi / self.delta_k

    def with_theta(self, theta: float) -> "OdfConfig":
        from dataclasses import replace

        return replace(self, theta=theta)


@dataclass(frozen=True)
class PhaseData:
    """Per-ion lattice phases and the mean interlayer phase difference."""

    phi: np.ndarray  # (N,) rad
    delta_k: float
    _interlayer: float | None = None

    @property
    def interlayer_phase(self) -> float:
        """Phi = -dk (z_u - z_l) mod 2pi.  Needs layer labels."""
        if self._interlayer is None:
            raise NotBilayer("interlayer phase needs a layered crystal")
        return self._interlayer

    @property
    def has_interlayer_phase(self) -> bool:
        return self._interlayer is not None

    def pair_differences(self) -> np.ndarray:
        """(N, N) matrix of phase differences phi_j - phi_k."""
        return self.phi[:, None] - self.phi[None, :]


def odf_phases(state: CrystalState, odf: OdfConfig) -> PhaseData:
    """Lattice phase of every ion; interlayer phase when layers are labeled."""
    dk = odf.delta_k
    phi = -dk * state.z
    interlayer = None
    if state.layer_labels is not None:
        labels = np.asarray(state.layer_labels)
        z_u = float(np.mean(state.z[labels == "U"]))
        z_l = float(np.mean(state.z[labels == "L"]))
        interlayer = (-dk * (z_u - z_l)) % (2 * math.pi)
    return PhaseData(phi=phi, delta_k=dk, _interlayer=interlayer)


def pair_phase_histogram(phases: PhaseData, n_bins: int = 90):
    """Histogram of wrapped pairwise phase differences over all j < k pairs.

    Returns (edges, counts) with edges spanning [-pi, pi].
    """
    pd = phases.pair_differences()
    iu = np.triu_indices(pd.shape[0], k=1)
    wrapped = np.angle(np.exp(1j * pd[iu]))
    return np.histogram(wrapped, bins=n_bins, range=(-math.pi, math.pi))


def solve_theta_for_phase(
    target_phi: float,
    state: CrystalState,
    odf: OdfConfig,
    theta_window: tuple,
) -> float:
    """Smallest lattice angle in the window realizing Phi = target (mod 2pi).

    Enumerates the arcsin branches of dk(theta) (z_u - z_l) = 2 pi n - target
    directly; residual is verified below 1e-9 rad.
    """
    if state.layer_labels is None:
        raise NotBilayer("need layer labels to target an interlayer phase")
    labels = np.asarray(state.layer_labels)
    z_u = float(np.mean(state.z[labels == "U"]))
    z_l = float(np.mean(state.z[labels == "L"]))
    dz = z_u - z_l
    if dz <= 0:
        raise NotBilayer("upper layer must sit above the lower layer")
    lo, hi = theta_window
    target = target_phi % (2 * math.pi)
    two_k_dz = 2.0 * odf.k_odf * dz
    solutions = []
    n_max = int(math.floor((two_k_dz * math.sin(hi) + target) / (2 * math.pi))) + 1
    for n in range(0, n_max + 1):
        s = (2 * math.pi * n - target) / two_k_dz
        if not 0.0 < s <= 1.0:
            continue
        theta = math.asin(s)
        if lo <= theta <= hi:
            solutions.append(theta)
    if not solutions:
        raise NoSolutionInWindow(
            f"no theta in [{math.degrees(lo):.3f}, {math.degrees(hi):.3f}] deg "
            f"gives interlayer phase {math.degrees(target_phi):.3f} deg"
        )
    theta = min(solutions)
    achieved = (-2.0 * odf.k_odf * math.sin(theta) * dz) % (2 * math.pi)
    residual = abs(np.angle(np.exp(1j * (achieved - target))))
    if residual > 1e-9:
        raise NoSolutionInWindow(f"phase residual {residual:.2e} rad at theta = {theta}")
    return theta


# --- spin-motion and spin-spin couplings --------------------------------------


def _mode_subset(modes: ModeSet, mode_subset, allow_low_frequency):
    if mode_subset is None:
        subset = modes.branch_indices(BRANCH_DRUMHEAD)
    else:
        subset = np.atleast_1d(np.asarray(mode_subset, dtype=int))
        exb = set(modes.branch_indices(BRANCH_EXB).tolist())
        picked_exb = [int(i) for i in subset if int(i) in exb]
        if picked_exb:
            if not allow_low_frequency:
                raise ConfigError(
                    f"modes {picked_exb} belong to the low-frequency in-plane "
                    "branch; pass allow_low_frequency=True to include them "
                    f"({_EXB_CAVEAT})"
                )
            warnings.warn(_EXB_CAVEAT, stacklevel=3)
    return subset


def _detunings(modes: ModeSet, subset, mu_r):
    delta = mu_r - modes.frequencies[subset]
    too_close = np.abs(delta) < DELTA_MIN
    if np.any(too_close):
        bad = [int(i) for i in np.asarray(subset)[too_close]]
        raise ResonantMode(
            f"drive within {DELTA_MIN / (2 * math.pi):.0f} Hz of modes {bad}"
        )
    return delta


@dataclass(frozen=True)
class SpinMotionAlpha:
    """Coherent displacement amplitudes alpha_nj at time t."""

    alpha: np.ndarray  # (n_subset, N) complex
    mode_indices: np.ndarray
    rwa_ratio: float  # max |delta_n| / (mu_r + omega_n); small is good

    @property
    def rwa_ok(self) -> bool:
        return self.rwa_ratio < RWA_RATIO_WARN


def spin_motion_alpha(
    modes: ModeSet,
    metrics: ModeMetrics,
    phases: PhaseData,
    odf: OdfConfig,
    t: float,
    mode_subset=None,
    allow_low_frequency: bool = False,
) -> SpinMotionAlpha:
    """alpha_nj = F0 c_n u_nj^z* e^{-i phi_j} (e^{-i t delta_n} - 1) / (2 hbar delta_n)."""
    subset = _mode_subset(modes, mode_subset, allow_low_frequency)
    delta = _detunings(modes, subset, odf.mu_r)
    uz = modes.z_components()[:, subset]  # (N, n_subset)
    c_n = metrics.c_n[subset]
    pref = odf.f0 * c_n / (2.0 * const.HBAR * delta)  # (n_subset,)
    time_factor = np.exp(-1j * t * delta) - 1.0
    alpha = (
        pref[:, None]
        * np.conj(uz).T
        * np.exp(-1j * phases.phi)[None, :]
        * time_factor[:, None]
    )
    rwa_ratio = float(np.max(np.abs(delta) / (odf.mu_r + modes.frequencies[subset])))
    return SpinMotionAlpha(alpha=alpha, mode_indices=np.asarray(subset), rwa_ratio=rwa_ratio)


@dataclass(frozen=True)
class CouplingMatrix:
    """Pairwise spin-spin phases (Ising, real) or exchange rates (complex).

    ``values`` has an exactly zero diagonal.  Layer labels, when present,
    provide block views keyed "uu", "dd", "ud", "du".
    """

    values: np.ndarray
    layer_labels: tuple | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def n_ions(self) -> int:
        return self.values.shape[0]

    @property
    def tau(self) -> float | None:
        return self.provenance.get("tau")

    @property
    def rate_values(self) -> np.ndarray:
        """values / tau: conventional coupling rates (rad/s)."""
        tau = self.tau
        if tau is None:
            raise ConfigError("no interaction time recorded for this matrix")
        return self.values / tau

    def _mask(self, which: str) -> np.ndarray:
        if self.layer_labels is None:
            raise NotBilayer("no layer labels attached to this coupling matrix")
        labels = np.asarray(self.layer_labels)
        return {"u": labels == "U", "d": labels == "L", "s": labels == "S"}[which]

    def block(self, rows: str, cols: str) -> np.ndarray:
        """Submatrix for layer pair, e.g. block('u', 'd') for interlayer."""
        return self.values[np.ix_(self._mask(rows), self._mask(cols))]

    def block_norm(self, rows: str, cols: str) -> float:
        return float(np.linalg.norm(self.block(rows, cols)))

    def symmetrized(self) -> np.ndarray:
        return 0.5 * (self.values + self.values.T)


def _pair_geometry_matrices(modes, phases, subset):
    """Per-mode normalized cross amplitudes and relative phases.

    W_n = u^z (u^z)^dagger has magnitude U_{n,jk} <u|u> and angle
    phi_{n,jk}; D_{n,jk} = (phi_k - phi_j) - phi_{n,jk}.
    """
    uz = modes.z_components()[:, subset]
    dphi_kj = phases.phi[None, :] - phases.phi[:, None]
    return uz, dphi_kj


def ising_couplings(
    modes: ModeSet,
    metrics: ModeMetrics,
    phases: PhaseData,
    odf: OdfConfig,
    t: float,
    mode_subset=None,
    secular_only: bool = False,
    allow_low_frequency: bool = False,
    layer_labels=None,
    force: float | None = None,
    mu_r: float | None = None,
) -> CouplingMatrix:
    """Accumulated spin-spin phases Theta_jk(t) from the lattice drive.

    Per mode, the Magnus phase is

        F^2 c_n^2 U_jk / (4 hbar^2 delta_n^2)
            * [delta_n t cos D - sin(delta_n t + D) + sin D],

    whose secular first term alone is exact at decoupling times
    delta_n t = 2 pi p (``secular_only`` selects it).  The matrix diagonal
    is zeroed: self-phases are global.
    """
    subset = _mode_subset(modes, mode_subset, allow_low_frequency)
    f = odf.f0 if force is None else force
    mu = odf.mu_r if mu_r is None else mu_r
    delta = _detunings(modes, subset, mu)
    uz, dphi_kj = _pair_geometry_matrices(modes, phases, subset)
    n = modes.n_ions
    theta = np.zeros((n, n))
    hbar2 = const.HBAR**2
    for i, (d_n, c_n) in enumerate(zip(delta, metrics.c_n[subset])):
        w = np.outer(uz[:, i], np.conj(uz[:, i]))
        u_mag = np.abs(w)
        d_mat = dphi_kj - np.angle(w)
        pref = f * f * c_n * c_n * u_mag / (4.0 * hbar2 * d_n * d_n)
        if secular_only:
            theta += pref * (d_n * t) * np.cos(d_mat)
        else:
            theta += pref * (
                d_n * t * np.cos(d_mat) - np.sin(d_n * t + d_mat) + np.sin(d_mat)
            )
    np.fill_diagonal(theta, 0.0)
    return CouplingMatrix(
        values=theta,
        layer_labels=layer_labels,
        provenance={
            "kind": "ising",
            "tau": t,
            "mode_indices": np.asarray(subset).tolist(),
            "detunings": delta.tolist(),
            "force": f,
            "mu_r": mu,
        },
    )


def two_tone_couplings(
    modes: ModeSet,
    metrics: ModeMetrics,
    phases: PhaseData,
    odf: OdfConfig,
    tau: float,
    special: SpecialModes | None = None,
    mode_subset0=None,
    mode_subset1=None,
    layer_labels=None,
) -> CouplingMatrix:
    """Spin-spin phases with two lattice tones at a shared decoupling time.

    Tone 0 (f0, mu_r) addresses the center-of-mass mode and tone 1
    (f1, mu_r1) the breathing mode by default.  Detunings must match in
    magnitude so both tones decouple together; coinciding tones are merged
    by amplitude addition (one lattice of field |F0 + F1 e^{i phi0}|).
    """
    if odf.f1 > 0 and odf.mu_r1 is None:
        raise ConfigError("second tone force given without mu_r1")
    if mode_subset0 is None:
        if special is None:
            raise ConfigError("need SpecialModes (or explicit subsets) for two tones")
        mode_subset0 = [special.cm_index]
    if odf.f1 == 0.0:
        return ising_couplings(
            modes, metrics, phases, odf, tau,
            mode_subset=mode_subset0, secular_only=True, layer_labels=layer_labels,
        )
    if abs(odf.mu_r1 - odf.mu_r) < DELTA_MIN:
        # one lattice: amplitudes add before the force is squared
        f_eff = math.sqrt(
            odf.f0**2 + odf.f1**2 + 2 * odf.f0 * odf.f1 * math.cos(odf.phi0)
        )
        return ising_couplings(
            modes, metrics, phases, odf, tau,
            mode_subset=mode_subset0, secular_only=True,
            layer_labels=layer_labels, force=f_eff,
        )
    if mode_subset1 is None:
        if special is None or special.breathing_index is None:
            raise ConfigError("need breathing mode index for the second tone")
        mode_subset1 = [special.breathing_index]
    delta0 = _detunings(modes, np.atleast_1d(mode_subset0), odf.mu_r)
    delta1 = _detunings(modes, np.atleast_1d(mode_subset1), odf.mu_r1)
    d0 = float(np.min(np.abs(delta0)))
    d1 = float(np.min(np.abs(delta1)))
    if abs(d0 - d1) > DELTA_MIN:
        raise DetuningMismatch(
            f"|delta0| = 2pi x {d0 / (2 * math.pi):.4g} Hz but |delta1| = "
            f"2pi x {d1 / (2 * math.pi):.4g} Hz; tones must decouple together"
        )
    part0 = ising_couplings(
        modes, metrics, phases, odf, tau,
        mode_subset=mode_subset0, secular_only=True, layer_labels=layer_labels,
    )
    part1 = ising_couplings(
        modes, metrics, phases, odf, tau,
        mode_subset=mode_subset1, secular_only=True, layer_labels=layer_labels,
        force=odf.f1, mu_r=odf.mu_r1,
    )
    big_delta = abs(odf.mu_r - odf.mu_r1)
    provenance = {
        "kind": "ising-two-tone",
        "tau": tau,
        "tone0": part0.provenance,
        "tone1": part1.provenance,
        # neglected Magnus cross terms are O(1/(delta Delta)) against the
        # retained O(tau/delta): report their relative scale
        "cross_term_ratio": float(1.0 / (big_delta * tau)),
    }
    return CouplingMatrix(
        values=part0.values + part1.values,
        layer_labels=layer_labels,
        provenance=provenance,
    )


def j_rel(coupling: CouplingMatrix, layer_labels=None) -> float:
    """Interlayer-to-intralayer strength: 2 |J_ud|_F / (|J_uu|_F + |J_dd|_F).

    Scaffold rows and columns are excluded by construction of the blocks.
    """
    mat = coupling
    if layer_labels is not None:
        mat = CouplingMatrix(values=coupling.values, layer_labels=tuple(layer_labels))
    inter = mat.block_norm("u", "d")
    intra = mat.block_norm("u", "u") + mat.block_norm("d", "d")
    return 2.0 * inter / intra


# --- tipping protocol -----------------------------------------------------------


@dataclass(frozen=True)
class TippingResult:
    theta_grid: np.ndarray  # initialization angles, rad
    p_mean: np.ndarray  # mean over ions of P(up)
    p_per_ion: np.ndarray  # (n_theta, N)


def tipping_exact(coupling: CouplingMatrix, theta_grid) -> TippingResult:
    """Closed-form spin-up fraction after rotate / evolve / rotate.

    P_j = (1 + S_j sin theta) / 2 with
    S_j = Im prod_{k != j} [cos(4 Th_kj) + i sin(4 Th_kj) cos theta],
    Th the symmetrized accumulated phases.
    """
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    th = coupling.symmetrized()
    n = th.shape[0]
    cos4 = np.cos(4.0 * th)
    sin4 = np.sin(4.0 * th)
    p = np.empty((theta_grid.size, n))
    for i, angle in enumerate(theta_grid):
        factors = cos4 + 1j * sin4 * math.cos(angle)
        factors[np.arange(n), np.arange(n)] = 1.0
        s_j = np.prod(factors, axis=1).imag
        p[i] = 0.5 * (1.0 + s_j * math.sin(angle))
    return TippingResult(theta_grid=theta_grid, p_mean=p.mean(axis=1), p_per_ion=p)


def tipping_meanfield(coupling: CouplingMatrix, theta_grid) -> TippingResult:
    """Mean-field limit: each spin precesses in the field of the others.

    P_j = [1 + sin(tau B_j cos theta) sin theta] / 2 with
    tau B_j = 2 sum_k (Theta_kj + Theta_jk).
    """
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    tau_b = 2.0 * (coupling.values.sum(axis=0) + coupling.values.sum(axis=1))
    p = 0.5 * (
        1.0
        + np.sin(tau_b[None, :] * np.cos(theta_grid)[:, None])
        * np.sin(theta_grid)[:, None]
    )
    return TippingResult(theta_grid=theta_grid, p_mean=p.mean(axis=1), p_per_ion=p)


# --- transverse-field spin exchange ----------------------------------------------


@dataclass(frozen=True)
class ExchangeModel:
    """Flip-flop model: field terms H_j, exchange J_ff, pair terms J_pp."""

    h_field: np.ndarray  # (N,) rad/s
    j_ff: CouplingMatrix  # complex rates, rad/s
    j_pp: CouplingMatrix  # real rates, rad/s (reported, not propagated)
    validity: dict

    @property
    def xy_matrix(self) -> np.ndarray:
        return self.j_ff.values.real / 2.0

    @property
    def dm_matrix(self) -> np.ndarray:
        return self.j_ff.values.imag / 2.0


def exchange_couplings(
    modes: ModeSet,
    metrics: ModeMetrics,
    phases: PhaseData,
    odf: OdfConfig,
    b0: float | None = None,
    nbar_per_mode=None,
    mode_subset=None,
    allow_low_frequency: bool = False,
    layer_labels=None,
) -> ExchangeModel:
    """Exchange coefficients under a resonant transverse field.

        J_jk = sum_n F^2 c_n^2 U_jk / (2 hbar^2 (delta_n^2 - B0^2))
               * [delta_n cos(D_jk) - i B0 sin(D_jk)],

    Hermitian by the antisymmetry of D.  Field terms H_j pick up a
    (2 nbar + 1) factor per thermally occupied mode; J is
    temperature-independent.  Pair-production terms J_pp are computed for
    diagnostics but never folded into dynamics (they oscillate at 2 B0).
    """
    b0 = odf.b0 if b0 is None else b0
    subset = _mode_subset(modes, mode_subset, allow_low_frequency)
    delta = _detunings(modes, subset, odf.mu_r)
    if np.any(np.abs(np.abs(delta) - abs(b0)) < DELTA_MIN):
        raise ExchangeResonance(
            "transverse field resonant with a drive detuning (|delta_n| = B0)"
        )
    if nbar_per_mode is None:
        nbar = np.zeros(len(subset))
    else:
        nbar = np.asarray(nbar_per_mode, dtype=float)
        if nbar.shape == (modes.n_modes,):
            nbar = nbar[subset]
        elif nbar.shape != (len(subset),):
            raise ConfigError("nbar_per_mode must cover all modes or the subset")
    uz, dphi_kj = _pair_geometry_matrices(modes, phases, subset)
    n = modes.n_ions
    j_real = np.zeros((n, n))
    j_imag = np.zeros((n, n))
    j_pp = np.zeros((n, n))
    h_field = np.zeros(n)
    hbar2 = const.HBAR**2
    for i, (d_n, c_n) in enumerate(zip(delta, metrics.c_n[subset])):
        w = np.outer(uz[:, i], np.conj(uz[:, i]))
        u_mag = np.abs(w)
        d_mat = dphi_kj - np.angle(w)
        denom = d_n * d_n - b0 * b0
        base = odf.f0**2 * c_n * c_n * u_mag / (2.0 * hbar2 * denom)
        j_real += base * d_n * np.cos(d_mat)
        j_imag += -base * b0 * np.sin(d_mat)
        j_pp += 0.5 * base * d_n * np.cos(d_mat)
        h_field += np.real(np.diag(w)) * (
            odf.f0**2 * c_n * c_n * b0 * (2.0 * nbar[i] + 1.0) / (2.0 * hbar2 * denom)
        )
    j_ff = j_real + 1j * j_imag
    np.fill_diagonal(j_ff, 0.0)
    np.fill_diagonal(j_pp, 0.0)
    prov = {
        "kind": "exchange",
        "mode_indices": np.asarray(subset).tolist(),
        "detunings": delta.tolist(),
        "b0": b0,
        "force": odf.f0,
        "mu_r": odf.mu_r,
    }
    labels = layer_labels
    j_ff_mat = CouplingMatrix(values=j_ff, layer_labels=labels, provenance=prov)
    j_pp_mat = CouplingMatrix(
        values=j_pp, layer_labels=labels, provenance={**prov, "kind": "pair-production"}
    )
    validity = _exchange_validity(j_ff_mat, j_pp_mat, delta, b0, n)
    return ExchangeModel(h_field=h_field, j_ff=j_ff_mat, j_pp=j_pp_mat, validity=validity)


def _exchange_validity(j_ff, j_pp, delta, b0, n):
    off = ~np.eye(n, dtype=bool)
    if j_ff.layer_labels is not None:
        labels = np.asarray(j_ff.layer_labels)
        in_layer = labels != "S"
        off = off & np.outer(in_layer, in_layer)
    # scale of the strong couplings (the visible cloud in a scatter of all
    # pairs), not the bulk median: adiabaticity is set by the worst pairs
    j_typ = float(np.percentile(np.abs(j_ff.values[off]), 95.0))
    j_pp_typ = float(np.percentile(np.abs(j_pp.values[off]), 95.0))
    gap = float(np.min(np.abs(np.abs(delta) - abs(b0))))
    ratio = gap / (n * j_typ) if j_typ > 0 else math.inf
    out = {
        "j_typical": j_typ,
        "adiabaticity_ratio": ratio,
        "adiabaticity_ok": ratio >= 10.0,
        "njpp_over_2b0": (n * j_pp_typ / (2.0 * abs(b0))) if b0 else math.inf,
    }
    if not out["adiabaticity_ok"]:
        warnings.warn(
            f"(|delta|-B0)/(N J) = {ratio:.2f} < 10: modes will be "
            "partially excited; exchange picture is approximate",
            stacklevel=3,
        )
    return out


def dm_decomposition(exchange: ExchangeModel):
    """Split the flip-flop couplings into XY and z-axis DM matrices.

    For k < j the pair term is (J_r/2)(x x + y y) + (J_i/2)(x y - y x);
    returns (J_r / 2, J_i / 2).
    """
    return exchange.xy_matrix, exchange.dm_matrix


# --- exports ---------------------------------------------------------------------


def coupling_to_json_dict(coupling: CouplingMatrix) -> dict:
    prov = {
        k: v for k, v in coupling.provenance.items()
        if isinstance(v, (int, float, str, list, dict, type(None)))
    }
    return {
        "meta": prov,
        "real": np.real(coupling.values).tolist(),
        "imag": np.imag(coupling.values).tolist(),
    }


def save_coupling(coupling: CouplingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(coupling_to_json_dict(coupling), fh)
        fh.write("\n")


def coupling_to_csv(coupling: CouplingMatrix, path, rates: bool = False) -> None:
    """Matrix dump, one row per line; complex entries as re+imj."""
    values = coupling.rate_values if rates else coupling.values
    with open(path, "w", encoding="utf-8") as fh:
        for row in values:
            if np.iscomplexobj(values):
                fh.write(",".join(f"{v.real:.9g}{v.imag:+.9g}j" for v in row))
            else:
                fh.write(",".join(f"{v:.9g}" for v in row))
            fh.write("\n")


def tipping_to_csv(result: TippingResult, path) -> None:
    """CSV export: theta_deg, p_up_mean, p_up_min, p_up_max."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theta_deg,p_up_mean,p_up_min,p_up_max\n")
        for i, angle in enumerate(result.theta_grid):
            row = result.p_per_ion[i]
            fh.write(
                f"{math.degrees(angle):.9g},{result.p_mean[i]:.12g},"
                f"{row.min():.12g},{row.max():.12g}\n"
            )
