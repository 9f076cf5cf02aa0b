"""Exception hierarchy shared by all momaplab modules."""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(LabError):
    """Malformed or out-of-contract input (dimension caps, bad degrees, ...)."""


class DimensionMismatch(InvalidInput):
    """Operands live on incompatible spaces (sizes, grids, hbar)."""


class AdmissibilityError(LabError):
    """State fails an admissibility gate (e.g. non-PSD assembled density)."""


class CflViolation(LabError):
    """Requested time step exceeds the advection stability bound."""


class BoundaryLeakage(LabError):
    """Field mass reached an open boundary beyond the abort threshold."""


class QuadratureError(LabError):
    """Adaptive quadrature failed to converge or path checks disagreed."""


class SchemaError(LabError):
    """Scenario file violates the documented schema."""
