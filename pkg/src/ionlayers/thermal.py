"""Thermal occupations, axial position variance, and lattice confinement.

The axial RMS excursion of each ion against the ODF lattice wavelength
(the eta_j parameter) decides whether the linearized spin-motion coupling
holds; low-frequency in-plane modes dominate it at laser-cooling
temperatures because of their huge occupations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as const
from .errors import ConfigError
from .normalmodes import ModeMetrics, ModeSet
from .odf import OdfConfig

_EXP_CUTOFF = 700.0  # exp overflow guard


@dataclass(frozen=True)
class ThermalSpec:
    """Either a global temperature or explicit per-mode occupations."""

    temperature: float | None = None  # K
    nbar: np.ndarray | None = None  # per-mode mean occupations

    def __post_init__(self):
        if (self.temperature is None) == (self.nbar is None):
            raise ConfigError("give exactly one of temperature or nbar")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.nbar is not None and np.any(np.asarray(self.nbar) < 0):
            raise ConfigError("occupations must be >= 0")

    @classmethod
    def from_temperature(cls, temperature: float) -> "ThermalSpec":
        return cls(temperature=temperature)

    @classmethod
    def from_occupations(cls, nbar) -> "ThermalSpec":
        return cls(nbar=np.asarray(nbar, dtype=float))

    def occupations(self, frequencies: np.ndarray) -> np.ndarray:
        if self.nbar is not None:
            nbar = np.asarray(self.nbar, dtype=float)
            if nbar.shape != frequencies.shape:
                raise ConfigError("nbar length must match the mode count")
            return nbar
        return mode_occupation(self.temperature, frequencies)


def mode_occupation(temperature: float, omega) -> np.ndarray | float:
    """Bose-Einstein occupation 1/(exp(hbar w / kT) - 1), overflow-safe."""
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    x = const.HBAR * np.asarray(omega, dtype=float) / (const.K_B * temperature)
    out = np.where(x < _EXP_CUTOFF, 1.0 / np.expm1(np.minimum(x, _EXP_CUTOFF)), 0.0)
    if np.ndim(omega) == 0:
        return float(out)
    return out


def z_variance(
    modes: ModeSet,
    metrics: ModeMetrics,
    thermal: ThermalSpec,
    mode_subset=None,
) -> np.ndarray:
    """Per-ion <z_j^2> = sum_n c_n^2 |u_nj^z|^2 (2 nbar_n + 1), meters^2.

    All 3N modes contribute by default; ``mode_subset`` restricts the sum
    for branch-by-branch diagnosis.
    """
    subset = np.arange(modes.n_modes) if mode_subset is None else np.asarray(mode_subset)
    nbar = thermal.occupations(modes.frequencies)[subset]
    uz = modes.z_components()[:, subset]
    weights = metrics.c_n[subset] ** 2 * (2.0 * nbar + 1.0)
    return np.abs(uz) ** 2 @ weights


def lamb_dicke(z_var: np.ndarray, odf: OdfConfig) -> np.ndarray:
    """Confinement parameters eta_j = dk sqrt(<z_j^2>)."""
    return odf.delta_k * np.sqrt(np.asarray(z_var, dtype=float))


def thermal_to_csv(z_var, eta, path) -> None:
    """CSV export: ion_index, z_rms_nm, eta."""
    z_rms_nm = np.sqrt(np.asarray(z_var)) * 1e9
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ion_index,z_rms_nm,eta\n")
        for i, (z, e) in enumerate(zip(z_rms_nm, np.asarray(eta))):
            fh.write(f"{i},{z:.9g},{e:.9g}\n")
