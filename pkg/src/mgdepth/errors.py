"""Exception types shared across the package.

All of these derive from ValueError so callers who do not care about the
distinction can catch one builtin.  The CLI maps each class to a documented
exit code (see cli.py).
"""


class MgdError(ValueError):
    """Base class for all mgdepth errors."""


class MgdFormatError(MgdError):
    """An MGD file is malformed: bad header, bad token, wrong token count."""


class DimensionMismatchError(MgdError):
    """Operands have incompatible shapes, or an index is out of range."""


class NotPositiveDefiniteError(MgdError):
    """A matrix that must be SPD failed its Cholesky factorization."""


class DegenerateInputError(MgdError):
    """Input is structurally valid but numerically unusable.

    Examples: no jointly valid pixels for metric evaluation, a constant
    prediction passed to scale-shift alignment, an empty sample set.
    """
