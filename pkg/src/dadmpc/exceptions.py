"""Exception hierarchy shared across the package."""


class DadMpcError(Exception):
    """Base class for all package errors."""


class SolverFailure(DadMpcError):
    """A solver returned NumericalFailure where a certified answer was required."""


class EmptySetError(DadMpcError):
    """An operation required a nonempty polytope."""


class UnboundedSetError(DadMpcError):
    """An operation required a bounded polytope."""


class EmptyRci(DadMpcError):
    """The invariant-set iteration collapsed to the empty set."""


class NoConvergence(DadMpcError):
    """A fixed-point iteration exhausted its iteration budget."""


class FeasibilityFault(DadMpcError):
    """The online controller met an empty FRI set or an infeasible QP.

    ``diagnostics`` carries whatever the controller knew at the time of the
    fault (state, confidence value, rung index, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(DadMpcError):
    """Malformed or inconsistent configuration."""
