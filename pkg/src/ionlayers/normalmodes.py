"""Normal modes of rotating-frame ion crystals.

The small-amplitude dynamics is m dv/dt = -K dr + m L v with K the
curvature (stiffness) matrix of the total potential energy and L the
velocity coupling from the axial magnetic field.  Modes are found from the
6N phase-space linearization and normalized so <u|u> = 1 on the position
part; velocity parts are implied, u_v = -i omega u_r.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import constants as const
from .equilibrium import CrystalState, hessian
from .errors import NotBilayer, UnstableEquilibrium
from .trapmodel import IonSpecies, TrapConfig, derive_parameters

BRANCH_EXB = "ExB"
BRANCH_DRUMHEAD = "Drumhead"
BRANCH_CYCLOTRON = "Cyclotron"

TOL_STABILITY = 1e-6  # relative imaginary part allowed on eigenfrequencies
DEGENERACY_RTOL = 1e-9  # frequency ties treated as one degenerate cluster
GRAD_WARN_SCALED = 1e-6


def stiffness_matrix(state: CrystalState, trap: TrapConfig | None = None,
                     species: IonSpecies | None = None) -> np.ndarray:
    """Stiffness matrix K (J/m^2): the Hessian of the potential energy.

    This is the matrix entering both the linearized equations of motion and
    the potential-energy quadratic form; for a single ion the zz entry is
    m omega_z^2.  Warns when the state is not converged to an equilibrium.
    """
    trap = trap if trap is not None else state.trap
    species = species if species is not None else state.species
    gnorm = state.meta.get("grad_inf_norm_scaled")
    if gnorm is not None and gnorm > GRAD_WARN_SCALED:
        warnings.warn(
            f"state gradient norm {gnorm:.2e} (scaled) exceeds {GRAD_WARN_SCALED:g}; "
            "mode frequencies may be unreliable",
            stacklevel=2,
        )
    return hessian(state.positions, trap, species)


def lorentz_matrix(trap: TrapConfig, species: IonSpecies, n_ions: int) -> np.ndarray:
    """Real velocity-coupling matrix: (L v)_x = wc' v_y, (L v)_y = -wc' v_x."""
    wc_prime = derive_parameters(trap, species).omega_c_prime
    block = np.array([[0.0, wc_prime, 0.0], [-wc_prime, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return np.kron(np.eye(n_ions), block)


@dataclass(frozen=True)
class ModeSet:
    """3N positive-frequency normal modes, ascending in frequency."""

    frequencies: np.ndarray  # (3N,) rad/s
    eigenvectors: np.ndarray  # (3N, 3N) complex; column n is u_n (positions)
    branches: tuple  # per-mode branch label
    trap: TrapConfig
    species: IonSpecies
    residuals: np.ndarray  # relative eigenpair residuals

    @property
    def n_modes(self) -> int:
        return self.frequencies.size

    @property
    def n_ions(self) -> int:
        return self.eigenvectors.shape[0] // 3

    def velocity_parts(self) -> np.ndarray:
        return -1j * self.frequencies[None, :] * self.eigenvectors

    def branch_indices(self, branch: str) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.branches) if b == branch])

    def z_components(self) -> np.ndarray:
        """(N, 3N) z-displacement amplitudes u_nj^z."""
        return self.eigenvectors[2::3, :]


def _xy_rotation_generator(n_ions: int) -> np.ndarray:
    block = np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex)
    return np.kron(np.eye(n_ions), block)


def _fix_phase(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u)))
    pivot = u[k]
    if pivot == 0:
        return u
    return u * (np.conj(pivot) / abs(pivot))


def _resolve_degeneracies(freqs: np.ndarray, vecs: np.ndarray, gen: np.ndarray):
    """Orthonormalize frequency-tied clusters and split them along the
    in-plane rotation generator so chiral partners are solver-independent."""
    out = vecs.copy()
    scale = max(freqs[-1], 1.0)
    start = 0
    while start < freqs.size:
        stop = start + 1
        while stop < freqs.size and freqs[stop] - freqs[stop - 1] <= DEGENERACY_RTOL * scale:
            stop += 1
        if stop - start > 1:
            block, _ = np.linalg.qr(out[:, start:stop])
            j_block = block.conj().T @ gen @ block
            _, rot = np.linalg.eigh(0.5 * (j_block + j_block.conj().T))
            out[:, start:stop] = block @ rot
        start = stop
    return out


def _refine_eigenpair(k_matrix, l_mat, m, w, u, target=1e-12, max_iter=3):
    """Newton-polish a (w, u) pair of the quadratic pencil Q(w) = K + i m w L - m w^2.

    The companion-form eigensolve leaves low-frequency pairs with residuals
    set by the 10^7-to-1 frequency span of the pencil; a bordered Newton
    step restores them to near machine precision.
    """
    n3 = u.size
    bordered = np.zeros((n3 + 1, n3 + 1), dtype=complex)
    rhs = np.zeros(n3 + 1, dtype=complex)
    for _ in range(max_iter):
        r = k_matrix @ u + 1j * m * w * (l_mat @ u) - m * w * w * u
        if np.linalg.norm(r) / (m * w * w) < target:
            break
        bordered[:n3, :n3] = k_matrix + 1j * m * w * l_mat
        bordered[np.arange(n3), np.arange(n3)] -= m * w * w
        bordered[:n3, n3] = (1j * m * (l_mat @ u) - 2.0 * m * w * u)
        bordered[n3, :n3] = np.conj(u)
        rhs[:n3] = -r
        try:
            with warnings.catch_warnings():
                # the bordered matrix is near-singular by construction
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                sol = scipy.linalg.solve(bordered, rhs)
        except scipy.linalg.LinAlgError:
            break
        u = u + sol[:n3]
        w = w + sol[n3].real
        u = u / np.linalg.norm(u)
    return w, u


def solve_modes(k_matrix: np.ndarray, trap: TrapConfig, species: IonSpecies,
                refine: bool = True) -> ModeSet:
    """Solve m w^2 u = K u + i m w L u via the 6N first-order linearization.

    Returns the 3N modes with w > 0 sorted ascending, eigenvectors
    unit-normalized with the largest component rotated real-positive, and
    branch labels assigned by index thirds (cross-checked against the
    axial fraction of each branch).
    """
    n3 = k_matrix.shape[0]
    n_ions = n3 // 3
    m = species.mass
    l_mat = lorentz_matrix(trap, species, n_ions)
    a = np.zeros((2 * n3, 2 * n3))
    a[:n3, n3:] = np.eye(n3)
    a[n3:, :n3] = -k_matrix / m
    a[n3:, n3:] = l_mat
    eigvals, eigvecs = scipy.linalg.eig(a)

    # modes evolve as e^{-i w t}: lambda = -i w, so w > 0 sits at Im < 0
    magnitude = np.abs(eigvals)
    bad = np.abs(eigvals.real) > TOL_STABILITY * np.maximum(magnitude, 1e-300)
    if np.any(bad):
        offenders = [(int(i), complex(eigvals[i])) for i in np.where(bad)[0]]
        raise UnstableEquilibrium(
            f"{len(offenders)} eigenvalues have relative real part beyond "
            f"{TOL_STABILITY:g}; not a stable equilibrium",
            offenders=offenders,
        )
    keep = eigvals.imag < 0
    freqs = -eigvals.imag[keep]
    vecs = eigvecs[:n3, keep]
    if freqs.size != n3:
        raise UnstableEquilibrium(
            f"expected {n3} positive-frequency modes, found {freqs.size}"
        )
    order = np.argsort(freqs, kind="stable")
    freqs = freqs[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)

    if refine:
        for i in range(n3):
            u = vecs[:, i]
            w = freqs[i]
            r = k_matrix @ u + 1j * m * w * (l_mat @ u) - m * w * w * u
            if np.linalg.norm(r) / (m * w * w) > 1e-10:
                freqs[i], vecs[:, i] = _refine_eigenpair(k_matrix, l_mat, m, w, u)
        order = np.argsort(freqs, kind="stable")
        freqs = freqs[order]
        vecs = vecs[:, order]

    vecs = _resolve_degeneracies(freqs, vecs, _xy_rotation_generator(n_ions))
    for col in range(vecs.shape[1]):
        vecs[:, col] = _fix_phase(vecs[:, col])

    residuals = np.empty(n3)
    for i in range(n3):
        u = vecs[:, i]
        w = freqs[i]
        r = k_matrix @ u + 1j * m * w * (l_mat @ u) - m * w * w * u
        residuals[i] = np.linalg.norm(r) / (m * w * w)

    third = n_ions
    branches = ([BRANCH_EXB] * third + [BRANCH_DRUMHEAD] * third
                + [BRANCH_CYCLOTRON] * third)
    modes = ModeSet(
        frequencies=freqs,
        eigenvectors=vecs,
        branches=tuple(branches),
        trap=trap,
        species=species,
        residuals=residuals,
    )
    _crosscheck_branches(modes)
    return modes


def _crosscheck_branches(modes: ModeSet) -> None:
    """Index-third labels should agree with the axial-fraction heuristic."""
    uz = modes.z_components()
    f_z = np.sum(np.abs(uz) ** 2, axis=0)
    n = modes.n_ions
    drum = f_z[n:2 * n]
    inplane = np.concatenate([f_z[:n], f_z[2 * n:]])
    if np.median(drum) < 0.5 or np.median(inplane) > 0.5:
        warnings.warn(
            "branch thirds disagree with axial-fraction heuristic "
            f"(drumhead median f_z = {np.median(drum):.3f}, "
            f"in-plane median f_z = {np.median(inplane):.3f})",
            stacklevel=3,
        )


def modes_for_state(state: CrystalState) -> ModeSet:
    """Stiffness build + eigensolve for an equilibrium state."""
    return solve_modes(stiffness_matrix(state), state.trap, state.species)


@dataclass(frozen=True)
class ModeMetrics:
    """Per-mode diagnostics and quantization scales."""

    f_z: np.ndarray  # axial fraction of the mode, [0, 1]
    r_ratio: np.ndarray  # avg potential / kinetic energy
    complexity: np.ndarray  # 0 (real standing wave) .. 1 (circular)
    l0: np.ndarray  # RMS zero-point length per mode, m
    c_n: np.ndarray  # quantization coefficient, m (= l0 at unit norm)


def mode_metrics(modes: ModeSet, k_matrix: np.ndarray) -> ModeMetrics:
    u = modes.eigenvectors
    norms = np.sum(np.abs(u) ** 2, axis=0)
    f_z = np.sum(np.abs(u[2::3, :]) ** 2, axis=0) / norms
    pot = np.real(np.einsum("an,an->n", np.conj(u), k_matrix @ u))
    m = modes.species.mass
    r_ratio = pot / (m * modes.frequencies**2 * norms)
    self_overlap = np.abs(np.einsum("an,an->n", u, u))
    complexity = (norms - self_overlap) / (norms + self_overlap)
    l0_sq = const.HBAR / (m * modes.frequencies * (1.0 + r_ratio))
    l0 = np.sqrt(l0_sq)
    c_n = l0 / np.sqrt(norms)
    return ModeMetrics(f_z=f_z, r_ratio=r_ratio, complexity=complexity, l0=l0, c_n=c_n)


def quantize_modes(modes: ModeSet, metrics: ModeMetrics, species: IonSpecies | None = None):
    """Per-mode (l0, c_n) zero-point scales (meters)."""
    if species is not None and species.mass != modes.species.mass:
        m = species.mass
        l0 = np.sqrt(const.HBAR / (m * modes.frequencies * (1.0 + metrics.r_ratio)))
        return l0, l0.copy()
    return metrics.l0, metrics.c_n


def commutation_sum_check(modes: ModeSet, metrics: ModeMetrics,
                          k_matrix: np.ndarray) -> np.ndarray:
    """Deviation from the canonical-commutator sum rule, per (ion, axis).

    For each coordinate b the quantization ansatz requires

        sum_n [m w_n^2 |u_nb|^2 + Re(u_nb (K u_n*)_b)]
              / [<u_n|K|u_n> + m w_n^2 <u_n|u_n>]  =  1,

    which is the equipartition identity behind [x_b, p_b] = i hbar.
    Returns the 3N deviations from 1.
    """
    u = modes.eigenvectors
    m = modes.species.mass
    ku_conj = k_matrix @ np.conj(u)
    numer = (m * modes.frequencies[None, :] ** 2 * np.abs(u) ** 2
             + np.real(u * ku_conj))
    norms = np.sum(np.abs(u) ** 2, axis=0)
    denom = m * modes.frequencies**2 * norms * (1.0 + metrics.r_ratio)
    return np.sum(numer / denom[None, :], axis=1) - 1.0


@dataclass(frozen=True)
class SpecialModes:
    """Landmark drumhead modes and their spectral isolation."""

    cm_index: int
    breathing_index: int | None
    top_drumhead_index: int
    cm_gap_hz: float
    breathing_gap_hz: float | None
    cm_to_breathing_hz: float | None


def _nearest_gap(freqs: np.ndarray, idx_in_branch: int) -> float:
    gaps = []
    if idx_in_branch > 0:
        gaps.append(freqs[idx_in_branch] - freqs[idx_in_branch - 1])
    if idx_in_branch < freqs.size - 1:
        gaps.append(freqs[idx_in_branch + 1] - freqs[idx_in_branch])
    return float(min(gaps) / (2 * math.pi))


def identify_special_modes(modes: ModeSet, state: CrystalState,
                           want_breathing: bool = True) -> SpecialModes:
    """Locate the center-of-mass and breathing drumhead modes.

    c.m. maximizes |<1_z | u_n^z>|; breathing maximizes |<s | u_n^z>| with
    s = +1 on the upper layer, -1 on the lower, 0 on scaffold ions.
    Breathing needs layer labels; monolayer states raise NotBilayer unless
    ``want_breathing`` is off.
    """
    drum = modes.branch_indices(BRANCH_DRUMHEAD)
    uz = modes.z_components()[:, drum]
    cm_local = int(np.argmax(np.abs(np.sum(uz, axis=0))))
    cm_index = int(drum[cm_local])
    drum_freqs = modes.frequencies[drum]

    breathing_index = None
    breathing_gap = None
    cm_to_breathing = None
    if want_breathing:
        if state.layer_labels is None:
            raise NotBilayer("state has no layer labels; breathing mode undefined")
        labels = np.asarray(state.layer_labels)
        sign = np.where(labels == "U", 1.0, np.where(labels == "L", -1.0, 0.0))
        breathing_local = int(np.argmax(np.abs(sign @ uz)))
        breathing_index = int(drum[breathing_local])
        breathing_gap = _nearest_gap(drum_freqs, breathing_local)
        cm_to_breathing = float(
            (modes.frequencies[breathing_index] - modes.frequencies[cm_index])
            / (2 * math.pi)
        )
    return SpecialModes(
        cm_index=cm_index,
        breathing_index=breathing_index,
        top_drumhead_index=int(drum[-1]),
        cm_gap_hz=_nearest_gap(drum_freqs, cm_local),
        breathing_gap_hz=breathing_gap,
        cm_to_breathing_hz=cm_to_breathing,
    )


# --- exports -------------------------------------------------------------------


def mode_table_to_csv(modes: ModeSet, metrics: ModeMetrics, path) -> None:
    """CSV export: index, freq_hz, branch, f_z, R, I, l0_nm."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,freq_hz,branch,f_z,R,I,l0_nm\n")
        for i in range(modes.n_modes):
            fh.write(
                f"{i},{modes.frequencies[i] / (2 * math.pi):.9g},{modes.branches[i]},"
                f"{metrics.f_z[i]:.9g},{metrics.r_ratio[i]:.9g},"
                f"{metrics.complexity[i]:.9g},{metrics.l0[i] * 1e9:.9g}\n"
            )


def eigenvectors_to_json(modes: ModeSet, path) -> None:
    """Archive eigenvectors as [re, im] pairs, coordinates x1,y1,z1,..."""
    payload = {
        "meta": {
            "ordering": "x1,y1,z1,...,xN,yN,zN",
            "n_ions": modes.n_ions,
            "species": modes.species.name,
        },
        "frequencies_hz": [w / (2 * math.pi) for w in modes.frequencies.tolist()],
        "branches": list(modes.branches),
        "eigenvectors": [
            [[float(c.real), float(c.imag)] for c in modes.eigenvectors[:, n]]
            for n in range(modes.n_modes)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
