"""Trap settings, derived frequencies and the internal unit system.

All positions are scaled by ``l0``, energies by ``e0`` and frequencies by
``omega_z`` inside the numerical routines; SI units appear only at API
boundaries.  Frequencies named ``*_hz`` in config files are ordinary
frequencies (nu) and are converted to angular frequencies internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import constants as const
from .errors import BetaZero, ConfigError, RadialUnconfined, RotationOutOfRange

BETA_C_COEFF = 0.665  # one-to-two plane transition: beta_c = 0.665 / sqrt(N)


@dataclass(frozen=True)
class IonSpecies:
    """A single trapped ion species (positive, single charge state)."""

    name: str
    mass: float  # kg
    charge: float  # C

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError(f"ion mass must be positive, got {self.mass}")
        if self.charge <= 0:
            raise ConfigError(f"ion charge must be positive, got {self.charge}")


BE9 = IonSpecies(
    name="9Be+",
    mass=const.BE9_MASS_U * const.ATOMIC_MASS,
    charge=const.ELEMENTARY_CHARGE,
)

_SPECIES_ALIASES = {"9be+": BE9, "be9+": BE9, "be9": BE9, "be+": BE9}


def species_by_name(name: str) -> IonSpecies:
    try:
        return _SPECIES_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown ion species {name!r}") from None


@dataclass(frozen=True)
class TrapConfig:
    """Trap settings in SI units (angular frequencies in rad/s)."""

    b_z: float  # axial magnetic field, T
    omega_z: float  # axial trap frequency, rad/s
    omega_r: float  # crystal rotation frequency, rad/s
    delta_wall: float = 0.0  # dimensionless rotating-wall strength
    c4: float = 0.0  # dimensionless quartic (anharmonic) strength
    n_ions: int = 1

    def __post_init__(self):
        if self.b_z <= 0:
            raise ConfigError(f"b_z must be positive, got {self.b_z}")
        if self.omega_z <= 0:
            raise ConfigError(f"omega_z must be positive, got {self.omega_z}")
        if self.delta_wall < 0:
            raise ConfigError(f"delta_wall must be >= 0, got {self.delta_wall}")
        if self.n_ions < 1:
            raise ConfigError(f"n_ions must be >= 1, got {self.n_ions}")

    @classmethod
    def from_axial_voltage(cls, v_z, species, **kwargs):
        """Build from the quadrupole voltage amplitude V_z (V/m^2).

        The axial frequency follows from omega_z = sqrt(2 e V_z / m); the
        canonical stored quantity is omega_z.
        """
        omega_z = math.sqrt(2.0 * species.charge * v_z / species.mass)
        return cls(omega_z=omega_z, **kwargs)


@dataclass(frozen=True)
class DerivedParams:
    """Frequencies and length/energy scales derived from a TrapConfig."""

    omega_c: float  # bare cyclotron frequency, rad/s
    omega_c_prime: float  # effective cyclotron frequency in the rotating frame
    omega_perp: float  # radial trapping frequency, rad/s
    beta: float  # omega_perp^2 / omega_z^2
    beta_c: float  # critical beta for the one-to-two plane transition
    beta_ratio: float  # beta / beta_c
    a0: float  # Coulomb/radial-trapping balance length, m
    r_p0: float  # harmonic-trap plasma radius, m
    l0: float  # internal length scale, m
    e0: float  # internal energy scale, J

    @property
    def anharm_scaled(self) -> float:
        """Dimensionless quartic prefactor per unit C4: beta * (l0 / r_p0)^2."""
        return self.beta * (self.l0 / self.r_p0) ** 2


def derive_parameters(trap: TrapConfig, species: IonSpecies) -> DerivedParams:
    """Compute every derived quantity for a trap + species combination.

    Pure and deterministic.  Raises RotationOutOfRange when omega_r is not
    inside (0, omega_c) and RadialUnconfined when the rotating-frame radial
    potential is not confining.
    """
    m = species.mass
    q = species.charge
    omega_c = q * trap.b_z / m
    if not 0.0 < trap.omega_r < omega_c:
        raise RotationOutOfRange(
            f"omega_r = {trap.omega_r:.6g} rad/s outside (0, omega_c = {omega_c:.6g})"
        )
    omega_c_prime = omega_c - 2.0 * trap.omega_r
    omega_perp_sq = trap.omega_r * (omega_c - trap.omega_r) - 0.5 * trap.omega_z**2
    if omega_perp_sq <= 0.0:
        raise RadialUnconfined(
            "no radial confinement: omega_r (omega_c - omega_r) <= omega_z^2 / 2"
        )
    omega_perp = math.sqrt(omega_perp_sq)
    beta = omega_perp_sq / trap.omega_z**2
    beta_c = BETA_C_COEFF / math.sqrt(trap.n_ions)
    ke_q2 = const.K_E * q * q
    a0 = (ke_q2 / (m * omega_perp_sq)) ** (1.0 / 3.0)
    r_p0 = (3.0 * math.pi * trap.n_ions / 4.0) ** (1.0 / 3.0) * a0
    l0 = (2.0 * ke_q2 / (m * trap.omega_z**2)) ** (1.0 / 3.0)
    e0 = 0.5 * m * l0**2 * trap.omega_z**2
    return DerivedParams(
        omega_c=omega_c,
        omega_c_prime=omega_c_prime,
        omega_perp=omega_perp,
        beta=beta,
        beta_c=beta_c,
        beta_ratio=beta / beta_c,
        a0=a0,
        r_p0=r_p0,
        l0=l0,
        e0=e0,
    )


def c4_from_electrode_voltage(
    v4: float, d: float, trap: TrapConfig, species: IonSpecies
) -> float:
    """Dimensionless C4 produced by a quartic multipole voltage V4.

    Obtained by matching the quartic trap term against the fourth-order
    multipole expansion of a cylindrical electrode stack with length scale d:
    C4 = 2 e V4 r_p0^2 / (m omega_z^2 beta d^4).  The proportionality
    constant is fixed by this coefficient matching; treat it as subject to
    per-trap calibration.
    """
    if d <= 0:
        raise ConfigError(f"electrode length scale d must be positive, got {d}")
    p = derive_parameters(trap, species)
    if p.beta == 0.0:
        raise BetaZero("C4 <-> V4 relation undefined at beta = 0")
    return (
        2.0 * species.charge * v4 * p.r_p0**2
        / (species.mass * trap.omega_z**2 * p.beta * d**4)
    )


def electrode_voltage_from_c4(
    c4: float, d: float, trap: TrapConfig, species: IonSpecies
) -> float:
    """Inverse of :func:`c4_from_electrode_voltage`: V4 required for a C4."""
    if d <= 0:
        raise ConfigError(f"electrode length scale d must be positive, got {d}")
    p = derive_parameters(trap, species)
    if p.beta == 0.0:
        raise BetaZero("C4 <-> V4 relation undefined at beta = 0")
    return (
        c4 * species.mass * trap.omega_z**2 * p.beta * d**4
        / (2.0 * species.charge * p.r_p0**2)
    )


# --- flat key-value config files -------------------------------------------

_TRAP_KEYS = {"bz_tesla", "omega_z_hz", "omega_r_hz", "delta_wall", "c4", "n_ions", "species"}


def parse_flat_config(text: str) -> dict:
    """Parse a flat ``key = value`` file with ``#`` comments into a dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        out[key] = value
    return out


def trap_from_mapping(cfg: dict) -> tuple[TrapConfig, IonSpecies]:
    """Build (TrapConfig, IonSpecies) from parsed flat-config values.

    Documented keys: bz_tesla, omega_z_hz, omega_r_hz, delta_wall, c4,
    n_ions, species.  Frequencies are given as nu in Hz.
    """
    missing = {"bz_tesla", "omega_z_hz", "omega_r_hz", "n_ions"} - set(cfg)
    if missing:
        raise ConfigError(f"missing trap config keys: {sorted(missing)}")
    species = species_by_name(str(cfg.get("species", "9Be+")))
    try:
        trap = TrapConfig(
            b_z=float(cfg["bz_tesla"]),
            omega_z=2.0 * math.pi * float(cfg["omega_z_hz"]),
            omega_r=2.0 * math.pi * float(cfg["omega_r_hz"]),
            delta_wall=float(cfg.get("delta_wall", 0.0)),
            c4=float(cfg.get("c4", 0.0)),
            n_ions=int(cfg["n_ions"]),
        )
    except ValueError as exc:
        raise ConfigError(f"bad trap config value: {exc}") from None
    return trap, species


def load_trap_config(path) -> tuple[TrapConfig, IonSpecies]:
    with open(path, encoding="utf-8") as fh:
        return trap_from_mapping(parse_flat_config(fh.read()))
