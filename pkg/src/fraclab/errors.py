"""Error taxonomy shared by every module.

Four failure classes, mirrored onto CLI exit codes: validation errors
(bad parameter domains) and shape errors exit 2, numeric failures exit 3,
resource refusals exit 4.
"""

__all__ = ["FraclabError", "ValidationError", "ShapeError", "NumericError", "ResourceError"]


class FraclabError(Exception):
    """Base class for every error raised by fraclab."""


class ValidationError(FraclabError, ValueError):
    """A parameter lies outside its documented domain."""


class ShapeError(ValidationError):
    """An array argument has the wrong shape or an inconsistent size."""


class NumericError(FraclabError, ArithmeticError):
    """A numerical procedure failed (factorization breakdown, overflow...)."""


class ResourceError(FraclabError, RuntimeError):
    """The request exceeds a hard resource cap and is refused."""
