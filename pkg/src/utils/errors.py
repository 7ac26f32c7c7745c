"""
Exception types shared across the toolkit
"""

from typing import Optional


class MmdtError(Exception):
    """Base class for all toolkit errors"""


class ValidationError(MmdtError, ValueError):
    """Input violates a documented precondition"""


class DataParseError(ValidationError):
    """Malformed dataset file"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class UnsupportedFeatureSpaceError(ValidationError):
    """A non-adaptive model was applied to features of another dimensionality"""


class DescentViolationError(MmdtError, RuntimeError):
    """A half-step increased the joint objective beyond the solver slack"""

    def __init__(self, iteration: int, step: str, previous: float, current: float, slack: float):
        self.iteration = iteration
        self.step = step
        self.previous = previous
        self.current = current
        self.slack = slack
        super().__init__(
            f"objective increased at iter={iteration} step={step}: "
            f"{previous:.17g} -> {current:.17g} (allowed slack {slack:.3g}); "
            f"a sub-problem was not solved to its stated tolerance"
        )
