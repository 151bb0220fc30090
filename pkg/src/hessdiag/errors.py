"""Exceptions shared by the numeric modules."""


class DomainError(ValueError):
    """A point or quantity lies outside the region where it is defined."""


class ConfigError(ValueError):
    """Invalid instance specification or suite configuration."""


class SolverError(RuntimeError):
    """A numerical solver failed to converge."""
