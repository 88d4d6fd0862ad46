"""Exception hierarchy for pidkl.

Validation problems (bad shapes, bad config, bad files) map to CLI exit
code 2; numerical failures (factorization, divergence, non-finite values)
map to exit code 3.
"""


class PidklError(Exception):
    """Base class for all pidkl errors."""


class ValidationError(PidklError):
    """Bad user input: shapes, schemas, config files."""


class NumericalError(PidklError):
    """Numerical breakdown during computation."""


class DimensionMismatch(ValidationError):
    pass


class InvalidSplit(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class FactorizationFailure(NumericalError):
    pass


class UnsupportedPrimitive(NumericalError):
    pass


class NonFiniteIntermediate(NumericalError):
    pass


class NonFiniteGradient(NumericalError):
    pass


class CacheInvalid(PidklError):
    """A cached GP posterior no longer matches the current parameters."""


class TrainingDiverged(NumericalError):
    pass
