"""Exception hierarchy. The CLI maps each family onto an exit code."""


class HomofuseError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class UsageError(HomofuseError, ValueError):
    """Bad parameter value or inconsistent configuration."""

    exit_code = 1


class DataError(HomofuseError):
    """Input data is malformed or violates a structural invariant."""

    exit_code = 2


class FormatError(DataError):
    """A file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DegenerateFrameError(DataError):
    """An affine frame or homography is (numerically) singular."""


class ConvergenceError(HomofuseError):
    """An iterative solver stopped before reaching its tolerance."""

    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)
