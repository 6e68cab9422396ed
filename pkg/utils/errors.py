"""Exception hierarchy shared by the library and the command line."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class ConvlabError(Exception):
    """Base class for every error raised on purpose by convlab."""


class ConfigError(ConvlabError, ValueError):
    """
    Invalid model spec, sweep config or command-line value.

    Args:
        message (str): What is wrong
        path (str, optional): File the offending value came from
        line (int, optional): 1-based line number inside ``path``
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class NumericalError(ConvlabError, ArithmeticError):
    """A computation could not produce a trustworthy result."""


class EmptySupportError(NumericalError):
    """A support mask, or the component that should hold s=0, is empty."""


class CurlGateError(NumericalError):
    """The kappa field is too far from a gradient field to integrate along paths."""

    def __init__(self, residual, tolerance):
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(f"curl residual {residual:.3g} exceeds tolerance {tolerance:.3g}")


class ZeroOrderError(NumericalError):
    """A zero of a grid function has no finite order up to the configured maximum."""


class RankError(NumericalError):
    """A loading matrix does not have the rank the factor reduction needs."""


def exit_code_for(exc):
    """
    Map an exception to the process exit code used by the command line.

    Args:
        exc (BaseException): Raised exception

    Returns:
        int: Exit code
    """
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc
