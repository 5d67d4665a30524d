"""Semantic exception hierarchy shared across the package."""


class SysriskError(Exception):
    """Base class for all package-specific errors."""


class InvalidParams(SysriskError):
    """Input violates a documented precondition or type invariant."""


class ZeroBlockMass(SysriskError):
    """A conditioning block carries zero mass under the supplied density."""


class NonConvergence(SysriskError):
    """A fixed-point iteration exhausted its step budget above tolerance."""


class DimensionTooLarge(SysriskError):
    """Exhaustive verification requested beyond its supported dimension."""


class EmptyConditioningEvent(SysriskError):
    """A conditional metric was asked for on an empty scenario subset."""


class InconsistentRho(SysriskError):
    """Two inputs with identical state-wise aggregates produced different risks."""


class UnknownAxiom(SysriskError):
    """An axiom identifier outside the supported set was requested."""
