"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EcholessError(Exception):
    exit_code = 1


class ConfigError(EcholessError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class SchemaError(ConfigError):
    pass


class BoundsError(ConfigError):
    pass


class PlanError(ConfigError):
    pass


class PartitionError(ConfigError):
    pass


class SplitError(ConfigError):
    pass


class SizeError(ConfigError):
    pass


class UnsupportedOperatorError(ConfigError):
    """Raised when an operation needs a linear operator but got a nonlinear one."""


class MemoryGuardError(EcholessError):
    exit_code = 3

    def __init__(self, estimate_bytes, cap_bytes, what="dense propagation matrix"):
        super().__init__(
            f"{what} needs ~{format_bytes(estimate_bytes)} ({estimate_bytes} bytes), "
            f"cap is {format_bytes(cap_bytes)} ({cap_bytes} bytes)"
        )
        self.estimate_bytes = estimate_bytes
        self.cap_bytes = cap_bytes


class NumericError(EcholessError):
    exit_code = 4


class DegenerateInputError(NumericError):
    pass


class MergeError(EcholessError):
    exit_code = 4


class FormatError(EcholessError):
    exit_code = 5


def format_bytes(n):
    """Decimal (SI) units: 1 TB = 1e12 bytes."""
    n = float(n)
    for unit in ("B", "KB", "MB", "GB", "TB", "PB"):
        if abs(n) < 1000 or unit == "PB":
            return f"{int(n)} B" if unit == "B" else f"{n:.3g} {unit}"
        n /= 1000
