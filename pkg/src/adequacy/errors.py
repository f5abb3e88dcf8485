"""Exception types shared across the package."""


class AdequacyError(Exception):
    """Base class for all package errors."""


class ParseError(AdequacyError):
    """Input file is malformed (bad JSON/CSV, missing sections, wrong types)."""


class ValidationError(AdequacyError):
    """A domain invariant is violated; message names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PartitionError(AdequacyError):
    """A calendar partition does not cover the horizon."""


class NumericalError(AdequacyError):
    """LP/QP solver reported a numerical breakdown."""
