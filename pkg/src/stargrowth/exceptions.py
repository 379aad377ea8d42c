"""Exception types shared across the package."""


class StarGrowthError(Exception):
    """Base class for all package errors."""


class GridError(StarGrowthError):
    """Invalid grid construction parameters."""


class UnderResolvedBumpError(StarGrowthError):
    """Bump support covers too few grid nodes for the requested scale."""


class DomainViolationError(StarGrowthError):
    """Particle position is outside (or too close to) the domain boundary."""


class DegenerateDomainError(StarGrowthError):
    """Domain normalizer collapsed (y below numerical floor)."""


class ConfigError(StarGrowthError):
    """Invalid or unknown configuration keys/values."""
