"""Exception hierarchy.

Every error raised on bad user input derives from :class:`BIAError`, so the
CLI can map the whole family to exit code 1.
"""


class BIAError(Exception):
    """Base class for all openbia input and configuration errors."""


class DomainError(BIAError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class InputError(BIAError, ValueError):
    """Invalid or missing user-supplied input."""


class SchemaError(BIAError, ValueError):
    """A document or dataset is missing required structure."""


class ParseError(BIAError, ValueError):
    """A field could not be parsed (e.g. a malformed number)."""


class ConsistencyError(BIAError, ValueError):
    """An equation spec contradicts itself."""


class UnknownCovariateError(SchemaError):
    """A covariate name outside the closed vocabulary was used."""


class NotFoundError(BIAError, KeyError):
    """A requested equation, profile, or window does not exist."""

    def __str__(self):
        # KeyError quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else ""


class ConfigurationError(BIAError):
    """A coding policy cannot be honoured with the available equations."""


class NotApplicableError(BIAError):
    """The operation is meaningless for this equation (e.g. no sex term)."""


class SingularityError(BIAError, ValueError):
    """The least-squares design matrix is rank deficient."""

    def __init__(self, message, collinear=()):
        super().__init__(message)
        self.collinear = tuple(collinear)


class RowError(BIAError, ValueError):
    """One or more dataset rows failed parsing or validation.

    ``errors`` holds ``(row_number, message)`` pairs, 1-based over data rows.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"row {row}: {msg}" for row, msg in self.errors]
        super().__init__("; ".join(lines))


class OrderingError(BIAError, ValueError):
    """A history record would break strict timestamp ordering."""


class UndefinedMetricError(BIAError, ValueError):
    """A metric is undefined for the given data (e.g. MAPE with zero reference)."""
