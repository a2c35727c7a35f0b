"""
Exception types shared by every subpackage.

Each error carries the process exit code the command-line entry point
reports for it: 1 for usage problems, 2 for format or corruption problems,
3 when a determinism check fails.
"""


class DlicError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


# Quantization

class InvalidQuantizerError(DlicError, ValueError):
    pass


class ShapeError(DlicError, ValueError):
    pass


class DegenerateRangeError(DlicError, ValueError):
    pass


class InvalidArgumentError(DlicError, ValueError):
    pass


class InvalidScaleError(DlicError, ValueError):
    pass


class DegenerateRequantError(DlicError, ValueError):
    pass


class ContractViolationError(DlicError, ValueError):
    pass


class AccumulatorOverflowError(DlicError, OverflowError):
    pass


# Engine / discretization

class IndexOutOfRangeError(DlicError, IndexError):
    pass


class DomainError(DlicError, ValueError):
    pass


# Entropy coding

class ZeroWidthIntervalError(DlicError, ValueError):
    pass


class ZeroProbabilityError(DlicError, ValueError):
    pass


class DecodeUnderrunError(DlicError):
    exit_code = 2


class StreamCorruptionError(DlicError):
    exit_code = 2


# Files

class FormatError(DlicError):
    exit_code = 2


class ChecksumError(FormatError):
    pass


class IngestError(DlicError):
    exit_code = 2


class DeterminismViolationError(DlicError):
    exit_code = 3
