class DimensionError(ValueError):
    """Operand lengths do not match the operator shape."""


class CsrFormatError(ValueError):
    """A CSR structure violates the canonical-form invariants."""


class SizeGuardError(MemoryError):
    """A requested materialization exceeds the allocation guard."""


class ConfigError(ValueError):
    """A network or projection description is invalid."""


class MergeError(ConfigError):
    """Projections sharing a synapse state disagree on its parameters."""


class SimulationError(RuntimeError):
    """Raised when a simulation produces non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BenchmarkMismatch(AssertionError):
    """Kernels under comparison disagree, or an asserted ordering failed."""
