"""Exception hierarchy shared by all solver modules."""


class SolverError(Exception):
    """Base class for every error raised by this package."""


# -- model / input validation -------------------------------------------------

class HermiticityViolation(SolverError):
    """A supplied harmonic pair breaks V_{-g} = conj(V_g)."""


class GridTooCoarse(SolverError):
    """Basis size too large for the grid resolution."""


class WrongMode(SolverError):
    """Operation called in a mode (Bloch/energy, diagonal/exact) it does not support."""


class SchemaError(SolverError):
    """Config document is malformed or internally inconsistent."""


class UnknownKey(SchemaError):
    """Config document contains a key outside the schema."""


# -- eigenproblems ------------------------------------------------------------

class ConvergenceFailure(SolverError):
    """An eigensolve produced residuals above tolerance."""


class NotNormalized(SolverError):
    """A state expected to be grid-normalized is not."""


class SupportTooSmall(SolverError):
    """Support restriction leaves too few grid points."""


# -- effective operator -------------------------------------------------------

class PoleProximity(SolverError):
    """Evaluation requested closer to a pole than the exclusion half-width."""


class AboveTotalEnergy(SolverError):
    """Fixed-energy operator evaluated above the total energy."""


class IndexMismatch(SolverError):
    """Root does not belong to the requested realisation/level."""


# -- root enumeration / grouping ----------------------------------------------

class ScanTooCoarse(SolverError):
    """Root count keeps changing as the scan grid is refined."""


class PoleWindowLoss(SolverError):
    """A sign change (root) is hidden inside a pole exclusion window."""

    def __init__(self, pole: float, message: str | None = None):
        self.pole = pole
        super().__init__(message or f"root hidden inside exclusion window of pole {pole!r}")


class IncompleteRealisation(SolverError):
    """Root set does not partition into complete realisations (strict mode)."""


# -- metrics ------------------------------------------------------------------

class InvalidCount(SolverError):
    """Realisation count below one."""


class NotDistribution(SolverError):
    """Probability vector is not normalized/nonnegative."""


class EmptyWindow(SolverError):
    """Sampling window contains no admissible points."""


class DegenerateData(SolverError):
    """Point set carries no spatial extent to box-count."""
