"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DecoyPreconditionError(DomainError):
    """Intensities violate 0 < nu < mu <= 1."""


class UndefinedBoundError(DomainError):
    """The decoy QBER bound cannot be evaluated (no decoy detections)."""


class DegenerateFilterError(DomainError):
    """Every filtered amplitude is zero, so the SRM error rate is undefined."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class CalibrationError(RuntimeError):
    """Target observables cannot be reproduced by the channel model."""
