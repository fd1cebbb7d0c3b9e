"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Inputs have inconsistent or unsupported shapes."""


class CausalityError(ValueError):
    """A gain or response map has nonzeros in structurally-zero positions."""


class ContractViolation(ValueError):
    """An argument violates a documented precondition."""


class CorpusError(ValueError):
    """A noise corpus is malformed or too short for the requested window."""


class ConfigError(ValueError):
    """A benchmark configuration file or value is invalid."""


class SolverError(RuntimeError):
    """The LP solver did not return an optimal solution."""


class ConditioningError(RuntimeError):
    """A linear system is too ill-conditioned to solve reliably."""


class InstabilityError(RuntimeError):
    """A simulated state trajectory diverged."""
