"""Exception types raised across the package."""


class FermihartError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FermihartError):
    """Invalid or inconsistent run configuration."""


class EvenGridSize(ConfigError):
    """Grid sizes must be odd so the dual index set {-l, ..., l} exists."""


class NonPositiveLength(ConfigError):
    """Box side lengths must be positive."""


class LengthMismatch(FermihartError):
    """Vector length does not match the grid."""


class ZeroCharges(ConfigError):
    """floor(zeta * volume) < 1: no background charges to place."""


class TooManyCharges(ConfigError):
    """More background charges requested than grid points."""


class OnBranchCut(FermihartError):
    """Evaluation point lies on the branch cut {iy : |y| >= pi/beta}."""


class InvalidInterval(FermihartError):
    """Spectral interval must satisfy lam_lo < lam_hi."""


class OddPoleCount(FermihartError):
    """Pole count must be a positive multiple of 4 (conjugate +/- quadruplets)."""


class SolverError(FermihartError):
    """Base class for iterative-solver failures."""


class SolverDiverged(SolverError):
    """Shifted solve did not reach the requested tolerance within max_iter."""

    def __init__(self, message, worst_residual=None):
        super().__init__(message)
        self.worst_residual = worst_residual


class Breakdown(SolverError):
    """BiCGSTAB scalar breakdown persisted after one restart."""


class TooLargeForDense(FermihartError):
    """Problem exceeds the configured dense-oracle cutoff."""


class StepTooLarge(FermihartError):
    """Mirror-descent step gamma_t must satisfy 0 < gamma_t <= beta."""


class NoSamplesYet(FermihartError):
    """Tail average queried before any sample was accumulated."""


class DegenerateFilling(FermihartError):
    """Filling factor must lie strictly between 0 and 1."""


class NotConverged(SolverError):
    """SCF did not reach tolerance; carries the best iterate found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
