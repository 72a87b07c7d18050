"""Error taxonomy shared by every layer of the toolkit."""


class RetmError(Exception):
    """Base class for all toolkit errors."""


class ContractViolationError(RetmError, ValueError):
    """Raised when a caller breaks an operation's preconditions (shapes, ranges)."""


class InputError(RetmError, ValueError):
    """Raised for unreadable, missing or malformed input files."""


class InfeasibleScenarioError(RetmError, ValueError):
    """Raised when a scenario cannot be simulated (e.g. Sabine absorption above 1)."""


class UndefinedMetricError(RetmError, ValueError):
    """Raised when a metric has no meaning for the given input (silent estimate)."""


class NumericalError(RetmError, RuntimeError):
    """Raised when a numerical routine fails (SVD non-convergence, too many failed bins)."""
