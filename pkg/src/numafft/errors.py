class NumaFFTError(Exception):
    """Base class for all errors raised by numafft."""


class ConfigError(NumaFFTError, ValueError):
    """Invalid convolution configuration, tensor shape or placement/schedule pairing."""


class PlanError(NumaFFTError, ValueError):
    """Tile size or lane width incompatible with the convolution or the FFT."""


class DataError(NumaFFTError, ValueError):
    """Numerical data violates a structural precondition (e.g. Hermitian symmetry)."""


class LedgerError(NumaFFTError, IndexError):
    """An instrumented access fell outside its region."""


class WorkerError(NumaFFTError, RuntimeError):
    """A task raised inside a worker group."""


class FormatError(NumaFFTError, ValueError):
    """Reports cannot be serialized or merged together."""
