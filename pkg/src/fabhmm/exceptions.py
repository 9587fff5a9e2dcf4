"""Exception types raised by fabhmm."""


class FabHmmError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FabHmmError, ValueError):
    """An observation lies outside the support of the emission model."""


class InstanceTooLargeError(FabHmmError, ValueError):
    """Brute-force enumeration was requested on an instance that is too large."""


class NumericalDegeneracyError(FabHmmError, FloatingPointError):
    """Every hidden state assigns zero probability at some position.

    Attributes
    ----------
    position : int
        Zero-based position inside the sequence.
    sequence : int or None
        Index of the offending sequence, when known.
    """

    def __init__(self, position, sequence=None, detail=""):
        self.position = int(position)
        self.sequence = sequence
        where = f"position t={self.position}"
        if sequence is not None:
            where = f"sequence n={sequence}, " + where
        msg = f"all-zero forward vector at {where}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
