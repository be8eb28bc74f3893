"""Exception types raised across the package."""


class DsgError(Exception):
    """Base class for all package errors."""


class DegenerateFeatures(DsgError):
    """All follower feature matrices are identical, so no scale can normalize them."""


class InvalidStrategy(DsgError):
    """A mixed strategy is negative, unnormalized, or puts mass outside the available actions."""


class TerminalState(DsgError):
    """A transition was requested from a state in the last layer."""


class SolverError(DsgError):
    """An LP backend failed for numerical reasons."""


class SamplingExhausted(DsgError):
    """No version-space sample could be produced within the proposal budget."""


class AllInfeasible(DsgError):
    """No (theta, follower action) pair admits a feasible margin-constrained strategy."""


class EpsilonInfeasible(DsgError):
    """No follower action can be induced with the requested margin under the true parameter."""


class NumericalDegeneracy(DsgError):
    """Every follower action was infeasible in a program that must have a feasible action."""


class SizeLimit(DsgError):
    """An enumeration would exceed the configured size limit."""


class SpecError(DsgError):
    """A scenario specification is malformed."""


class ConfigError(DsgError):
    """An experiment configuration is malformed."""


class InvariantViolation(DsgError):
    """A checked runtime invariant (such as the mistake budget) failed."""
