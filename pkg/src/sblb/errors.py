"""Exception hierarchy shared by every module of the package."""


class SBLBError(Exception):
    """Base class for all package errors."""


class ConfigError(SBLBError, ValueError):
    """A configuration value is outside its admissible range."""


class DomainError(SBLBError, ValueError):
    """Input data lies outside the mechanism's domain (e.g. ||x|| > L)."""


class ContractError(SBLBError, ValueError):
    """A caller broke an operation's precondition (shape, symmetry, state)."""


class InfeasibleError(SBLBError):
    """No privacy-feasible batch length exists for the requested target."""


class AmplificationError(InfeasibleError):
    """Batch too short for shuffling amplification to apply."""


class NumericError(SBLBError, ArithmeticError):
    """A linear-algebra step failed (non positive-definite design matrix)."""


class UndefinedSlopeError(SBLBError, ValueError):
    """Regret slope requested on degenerate (non-positive) regret data."""
