"""Exception types raised by the solver and the case tooling."""


class ShellSphError(Exception):
    """Base class for all package errors."""


class ConfigError(ShellSphError):
    """Bad case configuration or CLI input."""


class IllConditionedSupportError(ShellSphError):
    """A particle's corrected moment matrix is numerically singular."""


class DegenerateNormalError(ShellSphError):
    """Pseudo-normal too close to the rotation-map singularity."""


class InvertedConfigurationError(ShellSphError):
    """det F <= 0 encountered at a Gauss point."""


class DivergedError(ShellSphError):
    """Non-finite state detected during time integration."""


class InsufficientPeaksError(ShellSphError):
    """Probe series does not contain enough oscillation peaks."""


class ProbeDistanceError(ShellSphError):
    """Requested probe point lies farther than one spacing from any particle."""
