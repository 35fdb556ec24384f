"""Physical constants (2018 CODATA / exact SI values, >= 10 significant digits)."""

import math

ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J/K (exact)
EPSILON_0 = 8.8541878128e-12  # F/m
K_E = 1.0 / (4.0 * math.pi * EPSILON_0)  # Coulomb constant, N m^2 / C^2
ATOMIC_MASS = 1.66053906660e-27  # kg

# 9Be+ mass in atomic mass units (ionic mass; electron deficit is far below
# the precision any derived quantity here is compared at).
BE9_MASS_U = 9.012182
