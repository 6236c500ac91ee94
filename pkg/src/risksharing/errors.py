"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Objects defined on different (or differently sized) state spaces."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class ValidationError(ValueError):
    """A scenario or input file failed schema/consistency validation."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge.

    Carries a ``diagnostics`` dict (best iterate, residuals, state indices)
    to make failures reportable without re-running.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
