"""
Exception hierarchy shared by every module.
"""
from typing import List, Optional


class SketchError(Exception):
    """Base class for all sketchrows failures"""


class CapacityError(SketchError):
    """Dense work would exceed the configured memory cap"""


class ContractViolation(SketchError, ValueError):
    """Caller broke a documented precondition"""


class ParameterError(SketchError, ValueError):
    """A tunable parameter is out of its allowed range"""


class NumericalError(SketchError):
    """A numerical routine failed to converge"""

    def __init__(self, message: str, iterations: Optional[int] = None):
        super().__init__(message)
        self.iterations = iterations


class NotPSDError(NumericalError):
    """Matrix has an eigenvalue below -tol * lambda_max"""


class DegenerateBasisError(SketchError):
    """Gram matrix has numerical rank zero"""


class IterationLimitError(SketchError):
    """Reduction loop failed to reach its row threshold"""

    def __init__(self, message: str, history: List[int]):
        super().__init__(f"{message} (shrink history: {history})")
        self.history = list(history)


class MatrixMarketError(SketchError):
    """Malformed Matrix Market / vector file"""

    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path
