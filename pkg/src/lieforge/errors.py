"""Exception hierarchy. Each class carries the CLI exit code of its error class."""


class LieForgeError(Exception):
    exit_code = 1


class UsageError(LieForgeError):
    exit_code = 2


class InvalidElementError(UsageError):
    pass


class SizeError(UsageError):
    pass


class ChartError(LieForgeError):
    """Log requested outside the principal chart."""

    exit_code = 3

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class RegimeError(LieForgeError):
    exit_code = 3


class StagnationError(RegimeError):
    pass


class SearchError(LieForgeError):
    exit_code = 4

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ReduciblePairError(SearchError):
    pass


class DecompositionError(SearchError):
    pass


class SolverError(SearchError):
    pass


class CorrectionError(LieForgeError):
    exit_code = 5

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class IntegrityError(LieForgeError):
    exit_code = 6


class MigrationRequiredError(IntegrityError):
    pass
