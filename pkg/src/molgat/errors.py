"""Exception types shared across the package."""


class MolgatError(Exception):
    """Base class for package errors."""


class ShapeError(MolgatError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(MolgatError):
    """A computation produced non-finite values or an invalid numeric state."""


class ParseError(MolgatError):
    """A structure file could not be parsed.

    Carries the offending line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class DataError(MolgatError):
    """Input data violates a contract (empty pools, bad labels, rejected samples)."""


class CheckpointError(MolgatError):
    """A checkpoint or cache file is invalid, corrupted, or incompatible."""
