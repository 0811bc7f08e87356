"""Exception types raised by the package."""


class ViscowaveError(Exception):
    pass


class DomainError(ViscowaveError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class RangeError(ViscowaveError, ValueError):
    """Query outside the sampled range of a tabulated kernel."""


class PreconditionError(ViscowaveError, ValueError):
    pass


class UnsupportedKernelError(ViscowaveError, TypeError):
    pass


class ConfigError(ViscowaveError, ValueError):
    """Malformed or structurally invalid configuration."""


class CompatibilityError(ViscowaveError, ValueError):
    """Initial data violate the boundary or interface conditions."""


class InstabilityError(ViscowaveError, ArithmeticError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite field values at step {step}")


class DegenerateDataError(ViscowaveError, ValueError):
    pass


class InsufficientDataError(ViscowaveError, ValueError):
    pass
