"""Exception types raised across the package."""


class SemiclassicalError(Exception):
    """Base class for all package errors."""


class DomainError(SemiclassicalError, ValueError):
    """An argument lies outside the domain of the operation."""


class NonIntegrableProfileError(SemiclassicalError):
    """The profile integral r^3 phi_hat(r)^2 does not converge."""


class CannotNormalizeError(SemiclassicalError):
    """The diffusion coefficient is zero or not finite."""


class UnboundedProfileError(SemiclassicalError):
    """r |phi_hat(r)| keeps growing at the largest scanned radius."""


class InsufficientDecayError(SemiclassicalError):
    """A tail bound could not be pushed below the requested tolerance."""


class SingularConfigurationError(SemiclassicalError, ValueError):
    """A closed form was evaluated at a point where it is infinite."""


class UndefinedEntropyError(SemiclassicalError):
    """The entropy is not defined for measures carrying atoms."""


class ConstraintError(SemiclassicalError, ValueError):
    """A state violates a hard constraint (e.g. the Fermi-Dirac bound)."""


class StiffFailureError(SemiclassicalError):
    """The adaptive step size fell below ``dt_min``.

    The partial trajectory computed so far is attached as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(SemiclassicalError, ValueError):
    """An experiment configuration is invalid."""
