"""Command-line front end: run orchestration, artifact I/O, static plots.

Subcommands: equilibrate | modes | couplings | tipping | exchange | sweep
| validate.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.  Every run writes a manifest.json last, listing the files it
emitted; all randomness flows from --seed (randomized and printed when
omitted).  ILF_JOBS, when set, overrides --jobs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import constants as const
from . import equilibrium as eq
from . import normalmodes as nm
from . import odf as odfmod
from . import svgplot
from . import thermal as thermalmod
from .errors import ConfigError, IonLayersError, NotBilayer
from .trapmodel import load_trap_config, parse_flat_config

_VERSION = "0.1.0"

# effective lattice wavelength for 313 nm beams at 1 degree: the default
# length hint for layer classification and histogram bins
DEFAULT_LATTICE_WAVELENGTH = 2 * math.pi / (
    2.0 * (2 * math.pi / 313e-9) * math.sin(math.radians(1.0))
)


class _Run:
    """Collects emitted files and wall-clock timings for the manifest."""

    def __init__(self, args, subcommand):
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.config_path = getattr(args, "config", None)
        self.seed = args.seed
        self.reproducible = args.reproducible
        self.files = []
        self.timings = {}
        self._t0 = time.perf_counter()

    @property
    def timestamp(self):
        return None if self.reproducible else "auto"

    def path(self, name):
        self.files.append(name)
        return self.out_dir / name

    def mark(self, stage):
        self.timings[stage] = round(time.perf_counter() - self._t0, 3)

    def write_manifest(self):
        payload = {
            "subcommand": self.subcommand,
            "config": str(self.config_path) if self.config_path else None,
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "files": sorted(self.files),
            "library_version": _VERSION,
        }
        if not self.reproducible:
            payload["timings_s"] = self.timings
        tmp = self.out_dir / "manifest.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, self.out_dir / "manifest.json")


def _resolve_seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**32))
        print(f"seed: {args.seed}")
    return args.seed


def _resolve_jobs(args):
    env = os.environ.get("ILF_JOBS")
    if env:
        try:
            args.jobs = int(env)
        except ValueError:
            raise ConfigError(f"ILF_JOBS must be an integer, got {env!r}") from None
    return args.jobs


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --- ODF configuration files ------------------------------------------------


def _load_odf_mapping(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_flat_config(fh.read())


def _odf_from_mapping(cfg: dict, state, modes, special):
    """Build an OdfConfig; resolves target_phi_deg and mode-anchored detunings.

    Documented keys: wavelength_nm, theta_odf_deg | target_phi_deg,
    theta_window_deg, f0_newton, mode (cm|breathing), detuning_hz, tau_us,
    f1_newton, mode1, detuning1_hz, phi0_deg, b0_hz, n_theta.
    """
    if "wavelength_nm" not in cfg:
        raise ConfigError("odf config needs wavelength_nm (no default wavelength)")
    wavelength = float(cfg["wavelength_nm"]) * 1e-9
    probe = odfmod.OdfConfig(
        wavelength=wavelength, theta=math.radians(1.0), f0=0.0, mu_r=1.0
    )
    if "theta_odf_deg" in cfg:
        theta = math.radians(float(cfg["theta_odf_deg"]))
    elif "target_phi_deg" in cfg:
        window = cfg.get("theta_window_deg", "0.5,1.5")
        lo, hi = (math.radians(float(v)) for v in window.split(","))
        theta = odfmod.solve_theta_for_phase(
            math.radians(float(cfg["target_phi_deg"])), state, probe, (lo, hi)
        )
    else:
        raise ConfigError("odf config needs theta_odf_deg or target_phi_deg")

    def anchor(name):
        if name == "cm":
            return modes.frequencies[special.cm_index]
        if name in ("breathing", "bre"):
            if special.breathing_index is None:
                raise NotBilayer("breathing anchor needs a layered crystal")
            return modes.frequencies[special.breathing_index]
        raise ConfigError(f"unknown anchor mode {name!r} (use cm or breathing)")

    detuning = 2 * math.pi * float(cfg.get("detuning_hz", 1000.0))
    mu_r = anchor(str(cfg.get("mode", "cm"))) + detuning
    mu_r1 = None
    f1 = float(cfg.get("f1_newton", 0.0))
    if f1 > 0:
        detuning1 = 2 * math.pi * float(cfg.get("detuning1_hz", cfg.get("detuning_hz", 1000.0)))
        mu_r1 = anchor(str(cfg.get("mode1", "breathing"))) + detuning1
    odf = odfmod.OdfConfig(
        wavelength=wavelength,
        theta=theta,
        f0=float(cfg.get("f0_newton", 0.0)),
        mu_r=mu_r,
        f1=f1,
        mu_r1=mu_r1,
        phi0=math.radians(float(cfg.get("phi0_deg", 0.0))),
        b0=2 * math.pi * float(cfg.get("b0_hz", 0.0)),
    )
    tau = float(cfg["tau_us"]) * 1e-6 if "tau_us" in cfg else 2 * math.pi / abs(detuning)
    return odf, tau


def _prepare_crystal(path):
    """Load a crystal and make sure it carries layer labels if it can."""
    state = eq.load_crystal(path)
    if state.layer_labels is None:
        try:
            state = eq.with_layers(state, DEFAULT_LATTICE_WAVELENGTH)
        except NotBilayer:
            pass
    return state


def _modes_bundle(state):
    k_matrix = nm.stiffness_matrix(state)
    modes = nm.solve_modes(k_matrix, state.trap, state.species)
    metrics = nm.mode_metrics(modes, k_matrix)
    try:
        special = nm.identify_special_modes(modes, state)
    except NotBilayer:
        special = nm.identify_special_modes(modes, state, want_breathing=False)
    return k_matrix, modes, metrics, special


# --- subcommands -------------------------------------------------------------


def cmd_equilibrate(args):
    run = _Run(args, "equilibrate")
    trap, species = load_trap_config(args.config)
    config = eq.OptimizerConfig(n_runs=args.runs, keep_lowest=args.keep)
    ensemble = eq.equilibrate_ensemble(
        trap, config, seed=args.seed, species=species, jobs=args.jobs
    )
    run.mark("equilibrate")
    best = ensemble.best
    try:
        best = eq.with_layers(best, DEFAULT_LATTICE_WAVELENGTH)
    except NotBilayer:
        pass
    eq.save_crystal(best, run.path("crystal_best.json"))
    for rank, state in enumerate(ensemble.kept_states[1:], start=1):
        eq.save_crystal(state, run.path(f"crystal_kept_{rank:02d}.json"))
    hist = eq.z_histogram(best, args.hist_bin_um * 1e-6)
    eq.histogram_to_csv(hist, run.path("z_histogram.csv"))
    pos = best.positions_3d * 1e6
    _write_text(
        run.path("side_view.svg"),
        svgplot.scatter(pos[:, 0], pos[:, 2], title="side view",
                        xlabel="x (um)", ylabel="z (um)", timestamp=run.timestamp),
    )
    _write_text(
        run.path("top_view.svg"),
        svgplot.scatter(pos[:, 0], pos[:, 1], title="top view", xlabel="x (um)",
                        ylabel="y (um)", equal_aspect=True, timestamp=run.timestamp),
    )
    _write_text(
        run.path("z_histogram.svg"),
        svgplot.histogram(hist.edges * 1e6, hist.counts, title="z histogram",
                          xlabel="z (um)", timestamp=run.timestamp),
    )
    summary = {
        "energy_j": best.energy,
        "entropy_fine_bins": eq.entropy(
            eq.z_histogram(best, args.hist_bin_um * 1e-6 / 10.0)
        ),
        "kept_energy_spread_j": ensemble.energy_spread_kept(),
        "n_runs": args.runs,
    }
    if best.layer_labels is not None:
        _, layer_summary = eq.classify_layers(best, DEFAULT_LATTICE_WAVELENGTH)
        summary["layer_counts_uls"] = layer_summary.counts
        summary["interlayer_separation_um"] = (layer_summary.z_u - layer_summary.z_l) * 1e6
    with open(run.path("summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    run.mark("artifacts")
    run.write_manifest()
    print(f"equilibrate: E = {best.energy:.8e} J, wrote {run.out_dir}")
    return 0


def cmd_modes(args):
    run = _Run(args, "modes")
    state = _prepare_crystal(args.crystal)
    k_matrix, modes, metrics, special = _modes_bundle(state)
    run.mark("solve")
    nm.mode_table_to_csv(modes, metrics, run.path("mode_table.csv"))
    if args.save_eigenvectors:
        nm.eigenvectors_to_json(modes, run.path("eigenvectors.json"))
    freqs_hz = modes.frequencies / (2 * math.pi)
    colors = {"ExB": "seagreen", "Drumhead": "steelblue", "Cyclotron": "firebrick"}
    _write_text(
        run.path("branch_spectrum.svg"),
        svgplot.scatter(
            np.arange(modes.n_modes), freqs_hz / 1e6,
            colors=[colors[b] for b in modes.branches],
            title="mode spectrum", xlabel="mode index", ylabel="frequency (MHz)",
            timestamp=run.timestamp,
        ),
    )
    _write_text(
        run.path("mode_complexity.svg"),
        svgplot.scatter(
            np.arange(modes.n_modes), metrics.complexity,
            colors=[colors[b] for b in modes.branches],
            title="eigenvector complexity", xlabel="mode index", ylabel="I_n",
            timestamp=run.timestamp,
        ),
    )
    pos = state.positions_3d * 1e6
    uz = modes.z_components()
    drum = modes.branch_indices(nm.BRANCH_DRUMHEAD)
    chiral = int(drum[np.argmax(metrics.complexity[drum])])
    picks = {"cm_mode": special.cm_index, "chiral_mode": chiral}
    if special.breathing_index is not None:
        picks["breathing_mode"] = special.breathing_index
    for name, idx in sorted(picks.items()):
        _write_text(
            run.path(f"{name}_{idx}.svg"),
            svgplot.mode_pattern(
                pos, np.abs(uz[:, idx]), np.angle(uz[:, idx]),
                title=f"mode {idx} ({freqs_hz[idx] / 1e3:.1f} kHz)",
                timestamp=run.timestamp,
            ),
        )
    summary = {
        "cm_index": special.cm_index,
        "cm_freq_hz": freqs_hz[special.cm_index],
        "breathing_index": special.breathing_index,
        "cm_gap_hz": special.cm_gap_hz,
        "breathing_gap_hz": special.breathing_gap_hz,
        "cm_to_breathing_hz": special.cm_to_breathing_hz,
        "max_commutation_residual": float(
            np.max(np.abs(nm.commutation_sum_check(modes, metrics, k_matrix)))
        ),
    }
    if special.breathing_index is not None:
        summary["breathing_freq_hz"] = freqs_hz[special.breathing_index]
    with open(run.path("special_modes.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    run.mark("artifacts")
    run.write_manifest()
    print(f"modes: {modes.n_modes} modes, cm at {freqs_hz[special.cm_index] / 1e3:.1f} kHz")
    return 0


def _layer_sorted_order(labels):
    labels = np.asarray(labels)
    return np.concatenate([np.where(labels == key)[0] for key in ("U", "L", "S")])


def cmd_couplings(args):
    run = _Run(args, "couplings")
    state = _prepare_crystal(args.crystal)
    _, modes, metrics, special = _modes_bundle(state)
    cfg = _load_odf_mapping(args.odf_config)
    odf, tau = _odf_from_mapping(cfg, state, modes, special)
    phases = odfmod.odf_phases(state, odf)
    if odf.f1 > 0:
        coupling = odfmod.two_tone_couplings(
            modes, metrics, phases, odf, tau, special=special,
            layer_labels=state.layer_labels,
        )
    else:
        anchor = str(cfg.get("mode", "cm"))
        subset = [special.cm_index if anchor == "cm" else special.breathing_index]
        coupling = odfmod.ising_couplings(
            modes, metrics, phases, odf, tau, mode_subset=subset,
            secular_only=True, layer_labels=state.layer_labels,
        )
    run.mark("couplings")
    odfmod.save_coupling(coupling, run.path("coupling.json"))
    odfmod.coupling_to_csv(coupling, run.path("coupling.csv"))
    display = coupling.values
    if state.layer_labels is not None:
        order = _layer_sorted_order(state.layer_labels)
        display = display[np.ix_(order, order)]
    _write_text(
        run.path("coupling_heatmap.svg"),
        svgplot.heatmap(display, title="spin-spin phases (layer-sorted)",
                        xlabel="ion", ylabel="ion", timestamp=run.timestamp),
    )
    summary = {"tau_s": tau, "interlayer_phase_deg": None}
    if phases.has_interlayer_phase:
        summary["interlayer_phase_deg"] = math.degrees(phases.interlayer_phase)
    if state.layer_labels is not None:
        summary["j_rel"] = odfmod.j_rel(coupling)
    with open(run.path("summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    run.mark("artifacts")
    run.write_manifest()
    print(f"couplings: wrote {run.out_dir}")
    return 0


def cmd_tipping(args):
    run = _Run(args, "tipping")
    state = _prepare_crystal(args.crystal)
    _, modes, metrics, special = _modes_bundle(state)
    cfg = _load_odf_mapping(args.odf_config)
    n_theta = int(cfg.get("n_theta", 181))
    theta_grid = np.linspace(0.0, math.pi, n_theta)
    phis = (
        [float(v) for v in args.phi_deg.split(",")]
        if args.phi_deg
        else [None]
    )
    series = []
    palette = ["steelblue", "seagreen", "firebrick", "darkorange", "purple"]
    for i, phi in enumerate(phis):
        local = dict(cfg)
        if phi is not None:
            local.pop("theta_odf_deg", None)
            local["target_phi_deg"] = str(phi)
        odf, tau = _odf_from_mapping(local, state, modes, special)
        phases = odfmod.odf_phases(state, odf)
        coupling = odfmod.ising_couplings(
            modes, metrics, phases, odf, tau,
            mode_subset=[special.cm_index], secular_only=True,
            layer_labels=state.layer_labels,
        )
        result = odfmod.tipping_exact(coupling, theta_grid)
        tag = "curve" if phi is None else f"phi{int(phi):03d}"
        odfmod.tipping_to_csv(result, run.path(f"tipping_{tag}.csv"))
        label = tag if phi is not None else "tipping"
        series.append((label, np.degrees(theta_grid), result.p_mean,
                       palette[i % len(palette)]))
    run.mark("tipping")
    _write_text(
        run.path("tipping.svg"),
        svgplot.lines(series, title="spin precession", xlabel="theta (deg)",
                      ylabel="P(up)", timestamp=run.timestamp),
    )
    run.mark("artifacts")
    run.write_manifest()
    print(f"tipping: wrote {run.out_dir}")
    return 0


def cmd_exchange(args):
    run = _Run(args, "exchange")
    state = _prepare_crystal(args.crystal)
    if state.layer_labels is None:
        raise NotBilayer("exchange protocol needs a layered crystal")
    _, modes, metrics, special = _modes_bundle(state)
    cfg = dict(_load_odf_mapping(args.odf_config))
    cfg.setdefault("mode", "breathing")
    odf, _ = _odf_from_mapping(cfg, state, modes, special)
    phases = odfmod.odf_phases(state, odf)
    anchor = str(cfg.get("mode", "breathing"))
    subset = [special.breathing_index if anchor in ("breathing", "bre")
              else special.cm_index]
    model = odfmod.exchange_couplings(
        modes, metrics, phases, odf, mode_subset=subset,
        layer_labels=state.layer_labels,
    )
    run.mark("exchange")
    odfmod.save_coupling(model.j_ff, run.path("exchange.json"))
    labels = np.asarray(state.layer_labels)
    blocks = {"intra": [], "inter": [], "other": []}
    n = model.j_ff.n_ions
    rates = model.j_ff.values / (2 * math.pi)  # Hz
    with open(run.path("exchange_scatter.csv"), "w", encoding="utf-8") as fh:
        fh.write("j,k,block,re_hz,im_hz\n")
        for j in range(n):
            for k in range(n):
                if j == k:
                    continue
                if labels[j] == "S" or labels[k] == "S":
                    block = "other"
                elif labels[j] == labels[k]:
                    block = "intra"
                else:
                    block = "inter"
                blocks[block].append((rates[j, k].real, rates[j, k].imag))
                fh.write(f"{j},{k},{block},{rates[j, k].real:.9g},{rates[j, k].imag:.9g}\n")
    run.files.append("exchange_scatter.csv")
    xs, ys, colors = [], [], []
    palette = {"intra": "steelblue", "inter": "firebrick", "other": "gray"}
    for block, pts in blocks.items():
        for re, im in pts:
            xs.append(re)
            ys.append(im)
            colors.append(palette[block])
    _write_text(
        run.path("exchange_plane.svg"),
        svgplot.scatter(xs, ys, colors=colors, sizes=[2.0] * len(xs),
                        title="exchange couplings", xlabel="Re J (Hz)",
                        ylabel="Im J (Hz)", timestamp=run.timestamp),
    )
    with open(run.path("validity.json"), "w", encoding="utf-8") as fh:
        json.dump(model.validity, fh, indent=1)
        fh.write("\n")
    run.mark("artifacts")
    run.write_manifest()
    print(f"exchange: J_typ = {model.validity['j_typical'] / (2 * math.pi):.2f} Hz")
    return 0


def cmd_sweep(args):
    run = _Run(args, "sweep")
    grid = np.linspace(args.sweep_from, args.sweep_to, args.points)
    if args.param in ("c4", "omega_r"):
        return _sweep_equilibrium(args, run, grid)
    if args.param == "f1_ratio":
        return _sweep_f1_ratio(args, run, grid)
    raise ConfigError(f"unknown sweep parameter {args.param!r}")


def _sweep_equilibrium(args, run, grid):
    from dataclasses import replace

    trap, species = load_trap_config(args.config)
    config = eq.OptimizerConfig(n_runs=args.runs, keep_lowest=args.keep)
    bin_width = args.hist_bin_um * 1e-6 / 10.0  # entropy bins: 10x finer
    rows = []
    children = np.random.SeedSequence(args.seed).spawn(grid.size)
    for i, value in enumerate(grid):
        if args.param == "c4":
            trap_i = replace(trap, c4=float(value))
        else:
            trap_i = replace(trap, omega_r=2 * math.pi * float(value))
        ensemble = eq.equilibrate_ensemble(
            trap_i, config, seed=children[i], species=species, jobs=args.jobs
        )
        entropies = [eq.entropy(eq.z_histogram(s, bin_width)) for s in ensemble.kept_states]
        best = ensemble.best
        eq.save_crystal(best, run.path(f"crystal_{i:03d}.json"))
        rows.append(
            (float(value), float(np.mean(entropies)), float(np.std(entropies)),
             best.energy)
        )
        run.mark(f"point_{i:03d}")
    with open(run.path("sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(f"{args.param},entropy_mean,entropy_std,best_energy_j\n")
        for row in rows:
            fh.write(f"{row[0]:.9g},{row[1]:.9g},{row[2]:.9g},{row[3]:.9g}\n")
    _write_text(
        run.path("sweep.svg"),
        svgplot.lines(
            [("entropy", [r[0] for r in rows], [r[1] for r in rows], "steelblue")],
            title=f"entropy vs {args.param}", xlabel=args.param,
            ylabel="entropy", timestamp=run.timestamp,
        ),
    )
    run.write_manifest()
    best_point = min(rows, key=lambda r: r[1])
    print(f"sweep: entropy minimum at {args.param} = {best_point[0]:.4g}")
    return 0


def _sweep_f1_ratio(args, run, grid):
    if not args.crystal or not args.odf_config:
        raise ConfigError("f1_ratio sweep needs --crystal and --odf-config")
    state = _prepare_crystal(args.crystal)
    if state.layer_labels is None:
        raise NotBilayer("f1_ratio sweep needs a layered crystal")
    _, modes, metrics, special = _modes_bundle(state)
    cfg = dict(_load_odf_mapping(args.odf_config))
    rows = []
    for ratio in grid:
        row = [float(ratio)]
        for sign in (+1, -1):
            local = dict(cfg)
            local["f1_newton"] = str(math.sqrt(max(ratio, 0.0)) * float(cfg["f0_newton"]))
            base_det = float(cfg.get("detuning_hz", 1000.0))
            local["detuning1_hz"] = str(sign * base_det)
            local["mode1"] = "breathing"
            odf, tau = _odf_from_mapping(local, state, modes, special)
            phases = odfmod.odf_phases(state, odf)
            coupling = odfmod.two_tone_couplings(
                modes, metrics, phases, odf, tau, special=special,
                layer_labels=state.layer_labels,
            )
            row.append(odfmod.j_rel(coupling))
        rows.append(row)
    with open(run.path("jrel_sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("f1sq_over_f0sq,jrel_plus,jrel_minus\n")
        for row in rows:
            fh.write(f"{row[0]:.9g},{row[1]:.9g},{row[2]:.9g}\n")
    _write_text(
        run.path("jrel_sweep.svg"),
        svgplot.lines(
            [
                ("same-sign detunings", [r[0] for r in rows], [r[1] for r in rows], "steelblue"),
                ("opposite detunings", [r[0] for r in rows], [r[2] for r in rows], "darkorange"),
            ],
            title="interlayer / intralayer coupling", xlabel="F1^2 / F0^2",
            ylabel="J_rel", logy=True, timestamp=run.timestamp,
        ),
    )
    run.write_manifest()
    print(f"sweep: wrote {run.out_dir}")
    return 0


def cmd_validate(args):
    state = eq.load_crystal(args.crystal)
    failures = []

    def check(name, ok, detail=""):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")
        if not ok:
            failures.append(name)

    stored = state.meta.get("stored_energy_j")
    if stored:
        check(
            "energy matches stored value",
            abs(state.energy - stored) <= 1e-10 * abs(stored),
            f"recomputed {state.energy:.10e} vs stored {stored:.10e}",
        )
    rng = np.random.default_rng(0)
    # check the analytic gradient off equilibrium, where it is O(1)
    probe = state.positions + rng.uniform(-0.05, 0.05, state.positions.size) * state.derived.l0
    g_probe = eq.gradient(probe, state.trap, state.species)
    h = 1e-5 * state.derived.l0  # balances fd truncation against energy rounding
    idx = rng.choice(probe.size, size=min(12, probe.size), replace=False)
    deviations, magnitudes = [], []
    for i in idx:
        shift = np.zeros_like(probe)
        shift[i] = h
        fd = (
            eq.potential_energy(probe + shift, state.trap, state.species)
            - eq.potential_energy(probe - shift, state.trap, state.species)
        ) / (2 * h)
        deviations.append(abs(fd - g_probe[i]))
        magnitudes.append(abs(fd))
    fd_err = max(deviations) / max(magnitudes)
    check("gradient matches finite differences", fd_err < 1e-6,
          f"max relative error {fd_err:.2e}")
    g = eq.gradient(state.positions, state.trap, state.species)
    gscale = state.derived.e0 / state.derived.l0
    check("gradient norm small (equilibrium)", np.max(np.abs(g)) / gscale < 1e-6,
          f"{np.max(np.abs(g)) / gscale:.2e} scaled")
    k_matrix = nm.stiffness_matrix(state)
    check("stiffness symmetric", np.array_equal(k_matrix, k_matrix.T))
    modes = nm.solve_modes(k_matrix, state.trap, state.species)
    metrics = nm.mode_metrics(modes, k_matrix)
    check("eigenpair residuals < 1e-8", float(np.max(modes.residuals)) < 1e-8,
          f"max {np.max(modes.residuals):.2e}")
    residuals = nm.commutation_sum_check(modes, metrics, k_matrix)
    check("commutation sum rule < 1e-6", float(np.max(np.abs(residuals))) < 1e-6,
          f"max {np.max(np.abs(residuals)):.2e}")
    if state.layer_labels is not None:
        special = nm.identify_special_modes(modes, state)
        odf = odfmod.OdfConfig(
            wavelength=313e-9, theta=math.radians(1.0), f0=1e-23,
            mu_r=modes.frequencies[special.breathing_index] + 2 * math.pi * 8e3,
            b0=2 * math.pi * 4e3,
        )
        phases = odfmod.odf_phases(state, odf)
        model = odfmod.exchange_couplings(
            modes, metrics, phases, odf,
            mode_subset=[special.breathing_index], layer_labels=state.layer_labels,
        )
        herm = float(np.max(np.abs(model.j_ff.values - model.j_ff.values.conj().T)))
        scale = float(np.max(np.abs(model.j_ff.values))) or 1.0
        check("exchange couplings Hermitian", herm / scale < 1e-10,
              f"max deviation {herm:.2e}")
    if failures:
        raise IonLayersError(f"validation failed: {', '.join(failures)}")
    return 0


# --- argument parsing ----------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ionlayers",
        description="Layered ion crystals in Penning traps: equilibria, "
        "normal modes, and light-mediated spin couplings.",
    )
    parser.add_argument("--version", action="version", version=_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        if needs_out:
            p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--reproducible", action="store_true",
                       help="suppress timestamps for byte-identical output")

    p = sub.add_parser("equilibrate", help="basin-hop an equilibrium ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--keep", type=int, default=10)
    p.add_argument("--hist-bin-um", type=float,
                   default=DEFAULT_LATTICE_WAVELENGTH * 1e6 / 20.0)
    common(p)
    p.set_defaults(func=cmd_equilibrate)

    p = sub.add_parser("modes", help="normal modes of a crystal file")
    p.add_argument("--crystal", required=True)
    p.add_argument("--save-eigenvectors", action="store_true")
    common(p)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("couplings", help="spin-spin coupling matrix")
    p.add_argument("--crystal", required=True)
    p.add_argument("--odf-config", required=True)
    common(p)
    p.set_defaults(func=cmd_couplings)

    p = sub.add_parser("tipping", help="spin precession curves")
    p.add_argument("--crystal", required=True)
    p.add_argument("--odf-config", required=True)
    p.add_argument("--phi-deg", default=None,
                   help="comma list of interlayer phases, one curve each")
    common(p)
    p.set_defaults(func=cmd_tipping)

    p = sub.add_parser("exchange", help="transverse-field exchange couplings")
    p.add_argument("--crystal", required=True)
    p.add_argument("--odf-config", required=True)
    common(p)
    p.set_defaults(func=cmd_exchange)

    p = sub.add_parser("sweep", help="parameter sweeps with aggregate CSV")
    p.add_argument("--param", required=True, choices=["c4", "omega_r", "f1_ratio"])
    p.add_argument("--from", dest="sweep_from", type=float, required=True)
    p.add_argument("--to", dest="sweep_to", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--crystal", default=None)
    p.add_argument("--odf-config", default=None)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--keep", type=int, default=10)
    p.add_argument("--hist-bin-um", type=float,
                   default=DEFAULT_LATTICE_WAVELENGTH * 1e6 / 20.0)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run invariant checks on a crystal file")
    p.add_argument("--crystal", required=True)
    common(p, needs_out=False)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _resolve_jobs(args)
        _resolve_seed(args)
        if args.command == "sweep" and args.param in ("c4", "omega_r") and not args.config:
            raise ConfigError(f"--param {args.param} needs --config")
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error ({args.command}): {exc}", file=sys.stderr)
        return 2
    except IonLayersError as exc:
        print(f"numerical failure ({args.command}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
