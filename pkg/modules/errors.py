"""
Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI returns for it, and every
instance names the module precondition it tripped.
"""


class TailTreeError(Exception):
    exit_code = 1

    def __init__(self, message: str, condition: str = "unspecified"):
        super().__init__(message)
        self.condition = condition

    def __str__(self) -> str:
        return f"{self.condition}: {super().__str__()}"


class ConfigError(TailTreeError):
    """Malformed model file, topology, or argument."""
    exit_code = 1


class PreconditionError(TailTreeError):
    """A mathematical precondition of an operation does not hold."""
    exit_code = 2


class NumericError(TailTreeError):
    """Quadrature divergence or root-finding failure."""
    exit_code = 3
