"""Stable processes on the Sierpinski gasket among Poissonian obstacles."""

from ._validation import DomainError, NumericError, ResourceError
from .geometry import Address, FractalConstants, constants

__version__ = "0.1.0"

__all__ = ["Address", "DomainError", "FractalConstants", "NumericError", "ResourceError", "constants", "__version__"]
