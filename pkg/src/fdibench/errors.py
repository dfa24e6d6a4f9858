"""Exception hierarchy shared across the package."""


class FdiBenchError(Exception):
    """Base class for all package errors."""


class CaseParseError(FdiBenchError):
    """Malformed case text; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CaseStructureError(FdiBenchError):
    """A required block is missing from the case text."""


class CaseValidationError(FdiBenchError):
    """Parsed case violates a structural invariant (duplicate bus, zero reactance...)."""


class ModelError(FdiBenchError):
    """Measurement model cannot be built (disconnected network, degenerate state)."""


class ContractError(FdiBenchError):
    """Caller violated an operation precondition (dimension mismatch etc.)."""


class GenerationError(FdiBenchError):
    """Attack/trial generation failed (infeasible support, retry budget exhausted)."""


class InfeasibleAttackError(GenerationError):
    """No nontrivial unobservable attack exists for the requested support."""


class TrainingError(FdiBenchError):
    """A solver failed to reach its convergence criterion."""


class DiagnosticError(FdiBenchError):
    """A diagnostic cannot be computed on the given input."""


class ConfigError(FdiBenchError):
    """Invalid experiment configuration; reported before any work starts."""
