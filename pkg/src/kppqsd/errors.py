"""Exception types shared across the package."""


class KPPQSDError(Exception):
    """Base class for all package errors."""


class DomainError(KPPQSDError, ValueError):
    """Argument outside the open domain where the Laplace exponent is finite."""


class ConvergenceError(KPPQSDError, RuntimeError):
    """A root finder did not converge within its iteration budget."""


class RangeError(KPPQSDError, ValueError):
    """Requested value lies outside the range of a monotone map."""


class NoRoot(KPPQSDError):
    """``psi(theta) - c*theta = -r`` has no solution, i.e. ``r > Gamma(c)``.

    This is the non-existence regime for quasi-stationary distributions and
    traveling waves, so callers usually treat it as a classification result.
    """


class AllAbsorbed(KPPQSDError):
    """Every simulated path was absorbed before the requested time."""


class StabilityError(KPPQSDError, ValueError):
    """Explicit time step violates the monotonicity bound of the scheme."""


class BlowupError(KPPQSDError, RuntimeError):
    """PDE solution left the admissible band [-0.05, 1.05]."""


class InsufficientTrace(KPPQSDError, ValueError):
    """Too few front-position samples to fit a speed."""


class UndefinedInversion(KPPQSDError, ValueError):
    """Generating-function level below the attainable range."""
