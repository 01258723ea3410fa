"""Exception hierarchy shared across the package."""


class VicsekError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(VicsekError, ValueError):
    """A parameter is outside its admissible range."""


class CorruptFieldError(VicsekError):
    """A field contains non-finite values or violates a declared invariant."""


class UndefinedOrderParameterError(VicsekError):
    """Polarization requested for a field with zero mass."""


class DomainWrapError(VicsekError):
    """Kernel cutoff does not fit in the periodic box without self-overlap."""


class IntegrabilityError(VicsekError):
    """Radial profile is not integrable over its cutoff disk."""


class StepRejectedError(VicsekError):
    """A stability bound was violated; carries the largest admissible step."""

    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class PicardFailureError(VicsekError):
    """Fixed-point iteration did not reach tolerance; carries the residuals."""

    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = list(residual_history)


class WindowTooLongError(VicsekError):
    """Requested iteration window exceeds the admissible horizon."""


class CadenceError(VicsekError):
    """Requested rescaling is incompatible with the stored grid/time cadence."""


class ResolutionError(VicsekError):
    """A study is under-resolved for the requested parameters."""


class SchemaError(VicsekError):
    """Run manifest violates the expected schema."""


class GuardrailError(VicsekError):
    """Resource guardrail (memory, grid size) would be exceeded."""


class NumericalAbortError(VicsekError):
    """Non-finite values appeared mid-run; carries a diagnostic dump path."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
