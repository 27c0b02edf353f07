from typing import Optional


class RaimiException(Exception):
    """Base class for every error raised by raimipy"""


class DimensionMismatch(RaimiException):
    """A point does not have the dimension of the surface it was tagged to"""

    pass


class OffSurface(RaimiException):
    """A point does not satisfy the surface's defining constraint"""

    pass


class FiberMismatch(RaimiException):
    """A fiber point of the wrong variant was passed for this surface"""

    pass


class DomainViolation(RaimiException):
    """A fiber point lies outside the base space Y"""

    pass


class InvalidSurfaceSpec(RaimiException):
    pass


class InvalidPartition(RaimiException):
    pass


class RejectionBudgetExceeded(RaimiException):
    def __init__(self, what: str, attempts: int):
        super().__init__(
            "Rejection sampling of {} failed {} consecutive times. Is the set of measure zero or mis-specified?".format(
                what, attempts
            )
        )


class UnboundedFunction(RaimiException):
    def __init__(self, name: str, bound: float, observed: float):
        super().__init__(
            "Test function {} exceeded its declared bound {} (observed {})".format(
                name, bound, observed
            )
        )


class CoverLanguageError(RaimiException):
    """Errors raised while parsing or evaluating set expressions"""


class CoverSyntaxError(CoverLanguageError):
    def __init__(self, message: str, text: str, offset: int):
        self.line = text.count("\n", 0, offset) + 1
        self.column = offset - (text.rfind("\n", 0, offset) + 1) + 1
        self.offset = offset
        super().__init__(f"{message} (line {self.line}, column {self.column})")


class ArityError(CoverLanguageError):
    pass


class DimensionError(CoverLanguageError):
    pass


class ConfigError(RaimiException):
    def __init__(
        self, message: str, section: Optional[str] = None, key: Optional[str] = None
    ):
        self.section = section
        self.key = key
        location = ""
        if section is not None:
            location = f"[{section}]"
            if key is not None:
                location += f" {key}"
            location += ": "
        super().__init__(location + message)


class InvalidCover(RaimiException):
    """The parts of a cover leave a significant mass of the surface uncovered"""

    def __init__(self, uncovered_mean: float, uncovered_std_err: float):
        self.uncovered_mean = uncovered_mean
        self.uncovered_std_err = uncovered_std_err
        super().__init__(
            "Cover does not cover the surface: uncovered mass ≈ {:.4f} (std err {:.4f})".format(
                uncovered_mean, uncovered_std_err
            )
        )
