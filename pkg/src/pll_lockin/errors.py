"""Exception types raised across the package."""


class PllError(Exception):
    """Base class for all package errors."""


class ParameterError(PllError, ValueError):
    """Invalid model, filter or estimator parameter."""


class PoleError(PllError, ZeroDivisionError):
    """Transfer function evaluated at a pole."""


class CornerError(PllError, ValueError):
    """Derivative requested at a breakpoint of a piecewise-linear characteristic."""


class SymmetryError(PllError, ValueError):
    """Odd-symmetry transformation applied to a non-odd characteristic."""


class IntegrationError(PllError, RuntimeError):
    """The integrator produced a non-finite state."""


class DegenerateError(PllError, ValueError):
    """Saddle with a zero eigenvalue; its manifolds cannot be seeded."""


class SeedError(PllError, RuntimeError):
    """Eigenvector computation for a separatrix seed failed."""


class InterpolationError(PllError, ValueError):
    """Requested abscissa lies outside a traced separatrix branch."""


class ConvergenceError(PllError, RuntimeError):
    """A bisection bracket could not be narrowed to tolerance within budget."""


class ViolationError(PllError, AssertionError):
    """A Lyapunov function check failed along a trajectory."""


class EmptyTableError(PllError, ValueError):
    """Attempt to write a table without rows."""


class ConfigError(PllError, ValueError):
    """Invalid or unknown configuration key."""


class UndecidedError(PllError, RuntimeError):
    """A simulation neither locked nor slipped within its time budget."""
