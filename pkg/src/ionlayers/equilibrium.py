"""Crystal equilibria: energy surface, Newton-CG, annealed basin hopping.

Public functions take SI quantities (positions in meters, flattened as
x1, y1, z1, ..., xN, yN, zN) and convert to the scaled unit system
internally.  All randomness is owned by explicit seeds.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kernels
from .errors import CoincidentIons, ConfigError, NonConvergence, NotBilayer
from .trapmodel import (
    BE9,
    DerivedParams,
    IonSpecies,
    TrapConfig,
    derive_parameters,
    species_by_name,
)

EPS_DIST_SCALED = 1e-6  # coincidence guard, units of l0
_LIB_VERSION = "0.1.0"


@dataclass(frozen=True)
class CrystalState:
    """An equilibrium (or candidate) configuration with its provenance."""

    positions: np.ndarray  # (3N,) meters, ordered x1,y1,z1,...
    energy: float  # J
    trap: TrapConfig
    derived: DerivedParams
    species: IonSpecies = BE9
    rng_seed: object = None
    layer_labels: tuple | None = None  # per-ion "U" | "L" | "S"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def n_ions(self) -> int:
        return self.positions.size // 3

    @property
    def positions_3d(self) -> np.ndarray:
        """(N, 3) view of the coordinates in meters."""
        return self.positions.reshape(-1, 3)

    @property
    def z(self) -> np.ndarray:
        return self.positions_3d[:, 2]

    def scaled_positions(self) -> np.ndarray:
        """(N, 3) positions in units of l0."""
        return self.positions_3d / self.derived.l0


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the annealed basin-hopping run and its inner Newton-CG."""

    n_steps: int = 20
    t_start: float = 0.048
    alpha_x: float = 1.0
    alpha_y: float | None = None  # defaults to alpha_x
    alpha_z: float | None = None  # defaults to alpha_x * beta
    n_runs: int = 50
    keep_lowest: int = 10
    tol_grad: float = 1e-10  # max |gradient component|, scaled units
    max_ncg_iters: int = 1500
    adapt_alpha: bool = True  # 1.2x / 0.8x toward ~0.5 acceptance

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.t_start < 0:
            raise ConfigError("t_start must be >= 0")
        if self.n_runs < 1 or not 1 <= self.keep_lowest <= self.n_runs:
            raise ConfigError("need n_runs >= 1 and 1 <= keep_lowest <= n_runs")


def _scales(trap: TrapConfig, species: IonSpecies):
    d = derive_parameters(trap, species)
    anharm = trap.c4 * d.anharm_scaled
    return d, d.beta, trap.delta_wall, anharm


def _check_distance(min_r2: float):
    if min_r2 < EPS_DIST_SCALED**2:
        raise CoincidentIons(
            f"pair separation {math.sqrt(min_r2):.3e} l0 below guard {EPS_DIST_SCALED:g} l0"
        )


def potential_energy(positions, trap: TrapConfig, species: IonSpecies = BE9) -> float:
    """Total potential energy (J) of the configuration (meters, flattened)."""
    d, beta, delta, anharm = _scales(trap, species)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3) / d.l0
    u, min_r2 = kernels.energy(pos, beta, delta, anharm)
    _check_distance(min_r2)
    return u * d.e0


def gradient(positions, trap: TrapConfig, species: IonSpecies = BE9) -> np.ndarray:
    """Analytic gradient of the potential energy, J/m, flattened (3N,)."""
    d, beta, delta, anharm = _scales(trap, species)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3) / d.l0
    g, min_r2 = kernels.gradient(pos, beta, delta, anharm)
    _check_distance(min_r2)
    return g.reshape(-1) * (d.e0 / d.l0)


def hessian(positions, trap: TrapConfig, species: IonSpecies = BE9) -> np.ndarray:
    """Analytic Hessian of the potential energy, J/m^2, (3N, 3N)."""
    d, beta, delta, anharm = _scales(trap, species)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3) / d.l0
    h, min_r2 = kernels.hessian(pos, beta, delta, anharm)
    _check_distance(min_r2)
    return h * (d.e0 / d.l0**2)


# --- Newton-CG local minimizer (scaled units) --------------------------------


def _escaping(pos, beta, delta, anharm) -> bool:
    """True when an ion sits beyond the quartic escape saddle.

    The quartic term z^4 - 3 z^2 rho^2 + 3/8 rho^4 is negative along cones
    z ~ rho, so the model trap is only confining near the center; once the
    single-ion external potential goes negative the outward force wins and
    a minimizer would run away to -inf.  Such configurations are rejected
    as +inf (no bound crystal lives out there).
    """
    if anharm == 0.0:
        return False
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    rho2 = x * x + y * y
    v = (
        z * z + beta * rho2 + delta * (x * x - y * y)
        + anharm * (z**4 - 3.0 * z * z * rho2 + 0.375 * rho2 * rho2)
    )
    return bool(np.any(v < 0.0))


def _safe_energy(pos, beta, delta, anharm):
    u, min_r2 = kernels.energy(pos, beta, delta, anharm)
    if min_r2 < EPS_DIST_SCALED**2 or not math.isfinite(u):
        return math.inf
    if _escaping(pos, beta, delta, anharm):
        return math.inf
    return u


def _truncated_cg(h, g_flat, gnorm, max_cg):
    """Approximately solve h p = -g, stopping on negative curvature."""
    b = -g_flat
    p = np.zeros_like(b)
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    tol = min(0.5, math.sqrt(gnorm)) * math.sqrt(rr)
    for i in range(max_cg):
        hd = h @ d
        dhd = float(d @ hd)
        if dhd <= 1e-14 * float(d @ d):
            return b if i == 0 else p
        alpha = rr / dhd
        p += alpha * d
        r -= alpha * hd
        rr_new = float(r @ r)
        if math.sqrt(rr_new) <= tol:
            break
        d = r + (rr_new / rr) * d
        rr = rr_new
    return p


def _lbfgs_warmup(pos, beta, delta, anharm):
    """First-order declustering pass: cheap gradients, no Hessians.

    Random starting clouds are far from quadratic; running L-BFGS until the
    gradient is merely small hands Newton-CG a start it can finish off in a
    handful of quadratically convergent steps.
    """
    from scipy.optimize import minimize

    shape = pos.shape

    def fun(x):
        p = x.reshape(shape)
        u = _safe_energy(p, beta, delta, anharm)
        if not math.isfinite(u):
            return 1e300, np.zeros(x.size)
        g, _ = kernels.gradient(p, beta, delta, anharm)
        return u, g.reshape(-1)

    res = minimize(
        fun, pos.reshape(-1), jac=True, method="L-BFGS-B",
        options={"maxiter": 4000, "gtol": 1e-5, "ftol": 1e-13, "maxcor": 25},
    )
    return res.x.reshape(shape)


def _pull_inside(pos, beta, delta, anharm):
    """Shrink escaping ions toward the trap center until all are bound."""
    if anharm == 0.0:
        return pos
    pos = pos.copy()
    for _ in range(200):
        x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
        rho2 = x * x + y * y
        v = (
            z * z + beta * rho2 + delta * (x * x - y * y)
            + anharm * (z**4 - 3.0 * z * z * rho2 + 0.375 * rho2 * rho2)
        )
        out = v < 0.0
        if not np.any(out):
            break
        pos[out] *= 0.8
    return pos


def _ncg_scaled(pos, beta, delta, anharm, tol_grad, max_iters, warmup=True):
    """Newton-CG with Armijo backtracking; falls back to steepest descent.

    Near the minimum the energy decrease per step drops below the rounding
    floor of the total energy, so backtracking also accepts steps on a
    clear gradient-norm decrease (the crystal has a very soft azimuthal
    mode for small wall strengths, which is where this matters).

    Returns (positions, energy, grad_inf_norm, iterations, converged).
    """
    n3 = pos.size
    max_cg = min(n3, 250)
    pos = _pull_inside(pos, beta, delta, anharm)
    u = _safe_energy(pos, beta, delta, anharm)
    if not math.isfinite(u):
        # jitter away from exact coincidences in a deterministic way
        pos = pos + 10 * EPS_DIST_SCALED * np.sin(np.arange(n3, dtype=float)).reshape(pos.shape)
        u = _safe_energy(pos, beta, delta, anharm)
    g, _ = kernels.gradient(pos, beta, delta, anharm)
    gnorm = float(np.max(np.abs(g)))
    if warmup and gnorm > 1e-4:
        pos = _lbfgs_warmup(pos, beta, delta, anharm)
        u = _safe_energy(pos, beta, delta, anharm)
        g, _ = kernels.gradient(pos, beta, delta, anharm)
        gnorm = float(np.max(np.abs(g)))
    it = 0
    while gnorm > tol_grad and it < max_iters:
        it += 1
        h, _ = kernels.hessian(pos, beta, delta, anharm)
        g_flat = g.reshape(-1)
        p = _truncated_cg(h, g_flat, gnorm, max_cg)
        noise = 1e-12 * max(1.0, abs(u))
        moved = False
        new_grad = None
        for direction in (p, -g_flat):
            slope = float(direction @ g_flat)
            if slope >= 0.0:
                continue
            step = 1.0
            for _ in range(60):
                cand = pos + step * direction.reshape(pos.shape)
                u_cand = _safe_energy(cand, beta, delta, anharm)
                if u_cand <= u + 1e-4 * step * slope:
                    pos, u, moved = cand, u_cand, True
                    break
                if abs(step * slope) < noise and u_cand <= u + noise:
                    g_cand, _ = kernels.gradient(cand, beta, delta, anharm)
                    gnorm_cand = float(np.max(np.abs(g_cand)))
                    if gnorm_cand <= 0.9 * gnorm:
                        pos, u, moved = cand, u_cand, True
                        new_grad = (g_cand, gnorm_cand)
                        break
                step *= 0.5
            if moved:
                break
        if not moved:
            break  # stalled below line-search resolution
        if new_grad is None:
            g, _ = kernels.gradient(pos, beta, delta, anharm)
            gnorm = float(np.max(np.abs(g)))
        else:
            g, gnorm = new_grad
    return pos, u, gnorm, it, gnorm <= tol_grad


def _make_state(pos_scaled, u_scaled, gnorm, iters, converged, trap, derived, species,
                seed=None, extra_meta=None) -> CrystalState:
    meta = {
        "grad_inf_norm_scaled": gnorm,
        "ncg_iterations": iters,
        "converged": bool(converged),
        "backend": kernels.BACKEND,
    }
    if extra_meta:
        meta.update(extra_meta)
    return CrystalState(
        positions=(pos_scaled * derived.l0).reshape(-1),
        energy=u_scaled * derived.e0,
        trap=trap,
        derived=derived,
        species=species,
        rng_seed=seed,
        meta=meta,
    )


def local_minimize(
    start_positions,
    trap: TrapConfig,
    config: OptimizerConfig = OptimizerConfig(),
    species: IonSpecies = BE9,
) -> CrystalState:
    """Polish a configuration (meters, flattened) to a local minimum.

    Raises NonConvergence (carrying the best state reached) if the gradient
    tolerance is not met within ``config.max_ncg_iters`` Newton iterations.
    """
    d, beta, delta, anharm = _scales(trap, species)
    pos = np.asarray(start_positions, dtype=float).reshape(-1, 3) / d.l0
    pos, u, gnorm, iters, ok = _ncg_scaled(
        pos, beta, delta, anharm, config.tol_grad, config.max_ncg_iters
    )
    state = _make_state(pos, u, gnorm, iters, ok, trap, d, species)
    if not ok:
        raise NonConvergence(
            f"gradient norm {gnorm:.3e} > tol {config.tol_grad:g} "
            f"after {iters} Newton iterations",
            best=state,
        )
    return state


def basin_hop(
    trap: TrapConfig,
    config: OptimizerConfig = OptimizerConfig(),
    seed=0,
    species: IonSpecies = BE9,
) -> CrystalState:
    """Annealed basin hopping: uniform start, Newton-CG polish, Gaussian
    nudges with per-axis scale alpha*T, Metropolis acceptance, linear
    annealing of T to zero, best-so-far tracking.

    Deterministic in ``seed``.  Raises NonConvergence only if every inner
    Newton-CG call fails to meet the gradient tolerance.
    """
    d, beta, delta, anharm = _scales(trap, species)
    n = trap.n_ions
    rng = np.random.default_rng(seed)
    half_width = n ** (1.0 / 3.0)
    alpha_x = config.alpha_x
    alpha_y = config.alpha_y if config.alpha_y is not None else alpha_x
    alpha_ratio_y = alpha_y / alpha_x
    alpha_ratio_z = (
        config.alpha_z / alpha_x if config.alpha_z is not None else beta
    )

    pos = rng.uniform(-half_width, half_width, size=(n, 3))
    pos, u, gnorm, iters, ok = _ncg_scaled(
        pos, beta, delta, anharm, config.tol_grad, config.max_ncg_iters
    )
    any_ok = ok
    best = (pos, u, gnorm, iters, ok)

    for temp in np.linspace(config.t_start, 0.0, config.n_steps):
        sigma = alpha_x * temp * np.array([1.0, alpha_ratio_y, alpha_ratio_z])
        nudge = rng.standard_normal((n, 3)) * sigma
        new_pos, new_u, new_gnorm, new_iters, new_ok = _ncg_scaled(
            pos + nudge, beta, delta, anharm, config.tol_grad, config.max_ncg_iters
        )
        any_ok = any_ok or new_ok
        uniform_draw = rng.uniform()
        if temp > 0.0:
            accept = new_u <= u or math.exp((u - new_u) / temp) > uniform_draw
        else:
            accept = new_u < u
        if accept:
            pos, u = new_pos, new_u
            if new_u < best[1]:
                best = (new_pos, new_u, new_gnorm, new_iters, new_ok)
        if config.adapt_alpha:
            alpha_x *= 1.2 if accept else 0.8

    state = _make_state(
        best[0], best[1], best[2], best[3], best[4], trap, d, species, seed=_seed_repr(seed)
    )
    if not any_ok:
        raise NonConvergence("every Newton-CG call failed to converge", best=state)
    return state


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return f"{seed.entropy}{list(seed.spawn_key)}"
    return seed


def _ensemble_worker(args):
    trap, config, species_name, child, index = args
    species = species_by_name(species_name)
    state = basin_hop(trap, config, seed=child, species=species)
    return index, state


@dataclass(frozen=True)
class EnsembleResult:
    """All runs of an ensemble, sorted by energy, lowest first."""

    states: list
    kept: list  # bool per state: used for statistics
    seed: object

    @property
    def kept_states(self) -> list:
        return [s for s, k in zip(self.states, self.kept) if k]

    @property
    def best(self) -> CrystalState:
        return self.states[0]

    def energy_spread_kept(self) -> float:
        return float(np.std([s.energy for s in self.kept_states]))


def equilibrate_ensemble(
    trap: TrapConfig,
    config: OptimizerConfig = OptimizerConfig(),
    seed=0,
    species: IonSpecies = BE9,
    jobs: int | None = None,
) -> EnsembleResult:
    """Run ``config.n_runs`` independent seeded basin hops.

    Each run owns an RNG stream derived from (seed, run index), so results
    do not depend on scheduling.  ``jobs`` > 1 runs them in separate
    processes.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(config.n_runs)
    tasks = [
        (trap, config, species.name, child, i) for i, child in enumerate(children)
    ]
    results = [None] * config.n_runs
    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, state in pool.map(_ensemble_worker, tasks):
                results[index] = state
    else:
        for task in tasks:
            index, state = _ensemble_worker(task)
            results[index] = state
    order = sorted(range(config.n_runs), key=lambda i: (results[i].energy, i))
    states = [results[i] for i in order]
    kept = [i < config.keep_lowest for i in range(config.n_runs)]
    return EnsembleResult(states=states, kept=kept, seed=seed)


# --- z-structure diagnostics --------------------------------------------------


@dataclass(frozen=True)
class ZHistogram:
    """Fixed-width histogram of ion z positions (meters)."""

    bin_width: float
    edges: np.ndarray
    counts: np.ndarray
    fractions: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def z_histogram(state: CrystalState, bin_width: float, edge_offset: float = 0.0) -> ZHistogram:
    """Histogram the z coordinates with fixed-width bins from min(z) up.

    ``edge_offset`` shifts the bin-edge lattice; the default places the
    first edge exactly at min(z).  The entropy optimum is sensitive to both
    the bin size and this offset, so they are explicit inputs.
    """
    if bin_width <= 0:
        raise ConfigError("bin_width must be positive")
    z = state.z
    start = float(z.min()) + (edge_offset % bin_width)
    if start > z.min():
        start -= bin_width
    n_bins = max(1, int(math.ceil((float(z.max()) - start) / bin_width + 1e-12)))
    if start + n_bins * bin_width <= z.max():
        n_bins += 1
    edges = start + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(z, bins=edges)
    return ZHistogram(
        bin_width=bin_width,
        edges=edges,
        counts=counts,
        fractions=counts / z.size,
    )


def entropy(hist: ZHistogram) -> float:
    """Shannon entropy of the bin fractions, with 0 ln 0 = 0."""
    f = hist.fractions[hist.fractions > 0]
    return float(-np.sum(f * np.log(f)))


@dataclass(frozen=True)
class LayerSummary:
    counts: tuple  # (n_upper, n_lower, n_scaffold)
    z_u: float  # mean z of the upper layer, m
    z_l: float  # mean z of the lower layer, m


def classify_layers(state: CrystalState, odf_wavelength_hint: float):
    """Partition ions into Upper / Lower / Scaffold by z clustering.

    Sorts z and splits at the two largest gaps exceeding
    ``odf_wavelength_hint / 10``; the outermost segments are the layers and
    everything between is scaffolding.  Raises NotBilayer when fewer than
    two separated clusters exist.
    """
    z = state.z
    if state.n_ions < 2:
        raise NotBilayer("need at least two ions to form layers")
    gap_min = odf_wavelength_hint / 10.0
    order = np.argsort(z)
    z_sorted = z[order]
    gaps = np.diff(z_sorted)
    qualifying = np.where(gaps > gap_min)[0]
    if qualifying.size == 0:
        raise NotBilayer("no z gap exceeds the layer separation threshold")
    if qualifying.size == 1:
        cut_low = cut_high = qualifying[0]
    else:
        top_two = qualifying[np.argsort(gaps[qualifying])][-2:]
        cut_low, cut_high = sorted(top_two)
    labels = np.empty(state.n_ions, dtype="<U1")
    labels[order[: cut_low + 1]] = "L"
    labels[order[cut_high + 1 :]] = "U"
    if cut_high > cut_low:
        labels[order[cut_low + 1 : cut_high + 1]] = "S"
    z_u = float(np.mean(z[labels == "U"]))
    z_l = float(np.mean(z[labels == "L"]))
    summary = LayerSummary(
        counts=(int(np.sum(labels == "U")), int(np.sum(labels == "L")),
                int(np.sum(labels == "S"))),
        z_u=z_u,
        z_l=z_l,
    )
    return tuple(labels), summary


def with_layers(state: CrystalState, odf_wavelength_hint: float) -> CrystalState:
    """Return a copy of ``state`` with layer labels attached."""
    labels, _ = classify_layers(state, odf_wavelength_hint)
    return replace(state, layer_labels=labels)


# --- serialization -------------------------------------------------------------


def state_to_json_dict(state: CrystalState) -> dict:
    pos_um = np.round(state.positions_3d * 1e6, 6)
    meta = {
        "bz_tesla": state.trap.b_z,
        "omega_z_hz": state.trap.omega_z / (2 * math.pi),
        "omega_r_hz": state.trap.omega_r / (2 * math.pi),
        "delta_wall": state.trap.delta_wall,
        "c4": state.trap.c4,
        "n_ions": state.trap.n_ions,
        "species": state.species.name,
        "seed": None if state.rng_seed is None else str(state.rng_seed),
        "units": "um",
        "grad_inf_norm_scaled": state.meta.get("grad_inf_norm_scaled"),
        "library_version": _LIB_VERSION,
    }
    # store the energy of the rounded coordinates so the invariant
    # energy == potential_energy(positions) survives the round trip
    energy = potential_energy((pos_um * 1e-6).reshape(-1), state.trap, state.species)
    out = {"meta": meta, "energy_j": energy, "positions_um": pos_um.tolist()}
    if state.layer_labels is not None:
        out["layers"] = list(state.layer_labels)
    return out


def save_crystal(state: CrystalState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_json_dict(state), fh, indent=1)
        fh.write("\n")


def state_from_json_dict(data: dict) -> CrystalState:
    meta = data["meta"]
    species = species_by_name(meta.get("species", "9Be+"))
    trap = TrapConfig(
        b_z=float(meta["bz_tesla"]),
        omega_z=2 * math.pi * float(meta["omega_z_hz"]),
        omega_r=2 * math.pi * float(meta["omega_r_hz"]),
        delta_wall=float(meta.get("delta_wall", 0.0)),
        c4=float(meta.get("c4", 0.0)),
        n_ions=int(meta["n_ions"]),
    )
    derived = derive_parameters(trap, species)
    positions = (np.asarray(data["positions_um"], dtype=float) * 1e-6).reshape(-1)
    energy = potential_energy(positions, trap, species)
    layers = tuple(data["layers"]) if "layers" in data else None
    return CrystalState(
        positions=positions,
        energy=energy,
        trap=trap,
        derived=derived,
        species=species,
        rng_seed=meta.get("seed"),
        layer_labels=layers,
        meta={
            "stored_energy_j": data["energy_j"],
            "grad_inf_norm_scaled": meta.get("grad_inf_norm_scaled"),
        },
    )


def load_crystal(path) -> CrystalState:
    with open(path, encoding="utf-8") as fh:
        return state_from_json_dict(json.load(fh))


def histogram_to_csv(hist: ZHistogram, path) -> None:
    """CSV export: bin_center_um, count, fraction."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_center_um,count,fraction\n")
        for center, count, frac in zip(hist.centers, hist.counts, hist.fractions):
            fh.write(f"{center * 1e6:.9g},{int(count)},{frac:.12g}\n")
