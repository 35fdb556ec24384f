"""Exception types raised across the library."""


class IonLayersError(Exception):
    """Base class for all library errors."""


class ConfigError(IonLayersError):
    """Malformed or inconsistent configuration input."""


class RadialUnconfined(IonLayersError):
    """Radial trapping frequency squared is non-positive for these settings."""


class RotationOutOfRange(IonLayersError):
    """Rotation frequency outside (0, omega_c)."""


class BetaZero(IonLayersError):
    """Relation undefined at beta = 0."""


class CoincidentIons(IonLayersError):
    """Two ions closer than the coincidence guard distance."""


class NonConvergence(IonLayersError):
    """Local minimization failed to reach the gradient tolerance.

    Carries the best state reached so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotBilayer(IonLayersError):
    """Fewer than two separated z clusters found."""


class UnstableEquilibrium(IonLayersError):
    """Eigenvalues with significant imaginary part detected.

    ``offenders`` lists (mode index in the raw spectrum, eigenvalue).
    """

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class ResonantMode(IonLayersError):
    """ODF difference frequency too close to a normal-mode frequency."""


class NoSolutionInWindow(IonLayersError):
    """No ODF angle in the requested window realizes the target phase."""


class DetuningMismatch(IonLayersError):
    """Two-tone detunings differ in magnitude."""


class ExchangeResonance(IonLayersError):
    """|detuning| equals the transverse field within the resonance guard."""
