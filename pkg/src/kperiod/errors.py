"""Exception hierarchy shared by the library and the command line."""


class KPeriodError(Exception):
    """Base class for all library errors."""


class ContractViolation(KPeriodError, ValueError):
    """An input violated a numerical precondition (e.g. non-Hermitian matrix)."""


class IntegratorAccuracyError(ContractViolation):
    """The propagator did not converge under step refinement."""


class NotFoundError(KPeriodError):
    """No root bracket was found in the scanned amplitude range."""


class InsufficientDataError(KPeriodError):
    """Too few usable points for a fit."""


class CalibrationError(KPeriodError):
    """Hyperfine calibration could not reach its targets."""

    def __init__(self, message, best_residual=None, best_params=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_params = best_params


class CsvParseError(KPeriodError, ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
