"""Exception hierarchy shared across the package."""


class RampcError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RampcError, ValueError):
    """Inconsistent or invalid configuration."""


class EmptySetError(RampcError):
    """A polytope or LP feasible region turned out to be empty."""


class UnboundedError(RampcError):
    """A support function or LP objective is unbounded."""


class SolverError(RampcError):
    """A numerical solver failed (iteration cap, breakdown)."""


class AssumptionViolation(EmptySetError):
    """The feasible system set became empty.

    This can only happen if the noise bound or the prior impulse response
    envelope does not hold for the data-generating system.
    """


class FeasibilityLoss(RampcError):
    """The MPC optimisation problem became infeasible at some time step."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class InternalError(RampcError):
    """A post-solve audit failed; indicates a bug rather than bad data."""
