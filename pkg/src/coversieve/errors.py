"""Exception hierarchy shared by every module."""


class CoverSieveError(Exception):
    """Base class for all library errors."""


class ValidationError(CoverSieveError, ValueError):
    """Malformed input: bad congruence, invalid schedule, inconsistent graph."""


class ResourceError(CoverSieveError):
    """A configured budget (nodes, enumeration size, sieve cap) was exceeded."""


class DirectionError(CoverSieveError, TypeError):
    """An operation would mix rounding directions in a way that loses bound semantics."""
