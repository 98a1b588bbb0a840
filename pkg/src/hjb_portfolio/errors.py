"""Exception hierarchy. The CLI maps each family to a stable exit code."""


class ValidationError(ValueError):
    """Invalid input data or configuration (exit code 2)."""


class ParseError(ValidationError):
    """Malformed input file."""


class SolverError(RuntimeError):
    """Numerical failure inside a solver (exit code 3)."""


class QPConvergenceError(SolverError):
    pass


class CFLError(SolverError):
    pass


class PicardError(SolverError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class BlowUpError(SolverError):
    pass


class MissingInputError(FileNotFoundError):
    """A referenced input file or run directory is absent (exit code 4)."""
