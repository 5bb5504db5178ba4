"""Exception hierarchy shared by all modules.

Every error carries the CLI exit-code class it maps to: validation problems
exit with 2, numerical failures with 3.
"""


class RKError(Exception):
    exit_code = 3


class DegenerateInputError(RKError, ValueError):
    pass


class ContainmentError(RKError, ValueError):
    pass


class RankError(RKError, ValueError):
    pass


class BasisError(RKError, ValueError):
    pass


class RegularityError(RKError, ValueError):
    pass


class ModelError(RKError, ValueError):
    pass


class ConditioningError(RKError, ArithmeticError):
    pass


class ChartError(RKError, ValueError):
    pass


class BlowUpError(RKError, ArithmeticError):
    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class ConvergenceError(RKError, ArithmeticError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class CalibrationError(RKError, ArithmeticError):
    pass


class PrerequisiteError(RKError, ValueError):
    pass


class FamilyError(RKError, ValueError):
    exit_code = 2


class ConfigError(RKError, ValueError):
    exit_code = 2
