"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than usual: shape problems must not masquerade as I/O
problems and vice versa.
"""


class ShapeError(ValueError):
    """Array dimensions disagree with what an operation requires."""


class NumericalError(ArithmeticError):
    """A computation produced NaN/Inf or otherwise left the finite domain."""


class DataFormatError(ValueError):
    """A serialized file is malformed (bad magic, truncation, unknown dtype...)."""
