"""Exception types raised across the package."""


class CycleQDError(Exception):
    """Base class for all package errors."""


class IncompatibleParametersError(CycleQDError, ValueError):
    pass


class InvalidCoefficientError(CycleQDError, ValueError):
    pass


class NumericalFailureError(CycleQDError, ArithmeticError):
    def __init__(self, entry: str, message: str = "decomposition did not converge"):
        super().__init__(f"{entry}: {message}")
        self.entry = entry


class UndefinedSimilarityError(CycleQDError, ValueError):
    pass


class DegenerateCrossoverError(CycleQDError, ArithmeticError):
    pass


class InvalidFitnessError(CycleQDError, ValueError):
    pass


class EmptyArchiveError(CycleQDError, LookupError):
    pass


class ConfigurationError(CycleQDError, ValueError):
    pass


class DegenerateBoundsError(ConfigurationError):
    pass


class TrainingFailureError(CycleQDError, RuntimeError):
    pass
