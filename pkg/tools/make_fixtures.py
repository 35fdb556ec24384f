#!/usr/bin/env python3
"""Regenerate the crystal fixtures under tests/fixtures/.

Each fixture is the lowest-energy member of a seeded basin-hopping
ensemble, with layer labels attached where the crystal is layered.
"""

import argparse
import math
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from ionlayers.equilibrium import (  # noqa: E402
    OptimizerConfig,
    classify_layers,
    equilibrate_ensemble,
    save_crystal,
    with_layers,
)
from ionlayers.trapmodel import TrapConfig  # noqa: E402

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# effective ODF lattice wavelength at theta = 1 deg, 313 nm Raman light
LAMBDA_ODF_1DEG = 2 * math.pi / (2 * (2 * math.pi / 313e-9) * math.sin(math.radians(1.0)))

BASE = dict(b_z=4.4588, omega_z=2 * math.pi * 1.62e6, delta_wall=0.00183)

TARGETS = {
    "bilayer_n200": dict(
        trap=TrapConfig(omega_r=2 * math.pi * 210e3, c4=1.63, n_ions=200, **BASE),
        runs=50, keep=10, seed=20260810, layered=True,
    ),
    "monolayer_n200": dict(
        trap=TrapConfig(omega_r=2 * math.pi * 180e3, c4=0.0, n_ions=200, **BASE),
        runs=12, keep=4, seed=20260810, layered=False,
    ),
    "trilayer_n500": dict(
        trap=TrapConfig(omega_r=2 * math.pi * 215e3, c4=1.659, n_ions=500, **BASE),
        runs=6, keep=2, seed=20260810, layered=False,
    ),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="*", default=None,
                        help="fixture names (default: bilayer_n200 monolayer_n200)")
    parser.add_argument("--jobs", type=int, default=None)
    args = parser.parse_args()
    names = args.names or ["bilayer_n200", "monolayer_n200"]

    FIXTURES.mkdir(parents=True, exist_ok=True)
    for name in names:
        spec = TARGETS[name]
        cfg = OptimizerConfig(n_runs=spec["runs"], keep_lowest=spec["keep"])
        ens = equilibrate_ensemble(spec["trap"], cfg, seed=spec["seed"], jobs=args.jobs)
        best = ens.best
        if spec["layered"]:
            best = with_layers(best, LAMBDA_ODF_1DEG)
            _, summary = classify_layers(best, LAMBDA_ODF_1DEG)
            print(f"{name}: counts (U,L,S) = {summary.counts}, "
                  f"separation = {(summary.z_u - summary.z_l) * 1e6:.2f} um")
        out = FIXTURES / f"{name}.json"
        save_crystal(best, out)
        energies = [s.energy for s in ens.states]
        print(f"{name}: E_best = {best.energy:.8e} J, "
              f"spread(kept) = {ens.energy_spread_kept():.2e}, wrote {out}")


if __name__ == "__main__":
    main()
