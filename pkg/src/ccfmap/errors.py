"""Exceptions shared across the package."""


class DataError(ValueError):
    """Raised for invalid shapes, value domains, label sets, or file contents.

    Distinct from numeric failures (LinAlgError, FloatingPointError) so
    callers can map the two families to different exit codes.
    """
