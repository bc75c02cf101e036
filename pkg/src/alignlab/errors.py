"""Exception types shared across the package."""


class AlignlabError(Exception):
    """Base class for all package errors."""


class DivisionHazardError(AlignlabError):
    """A denominator fell below the vacuum threshold (default 1e-14).

    Distinguishes genuine vacuum from roundoff: quotients are refused rather
    than silently regularized.
    """


class StepRejectedError(AlignlabError):
    """A time step violated a stability bound.

    Carries the largest admissible step so callers can retry.
    """

    def __init__(self, message: str, admissible_dt: float):
        super().__init__(f"{message} (admissible dt = {admissible_dt:.6g})")
        self.admissible_dt = admissible_dt


class IterationLimitError(AlignlabError):
    """An iterative solver failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual = {residual:.3e})")
        self.residual = residual


class BlowUpError(AlignlabError):
    """Gradient blow-up or NaN detected; carries the last good state."""

    def __init__(self, message: str, time: float, last_state=None):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time
        self.last_state = last_state


class VacuumError(AlignlabError):
    """Density fell below the vacuum threshold during a macroscopic run."""


class MassMismatchError(AlignlabError):
    """Transport distances require equal total masses; never renormalized silently."""

    def __init__(self, mass_a: float, mass_b: float):
        super().__init__(f"total masses differ: {mass_a!r} vs {mass_b!r}")
        self.mass_a = mass_a
        self.mass_b = mass_b


class GridMismatchError(AlignlabError):
    """Operands live on incompatible grids."""


class InvalidGridError(AlignlabError):
    """A grid resolution or layout is unusable for the requested operation."""
