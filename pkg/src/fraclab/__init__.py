"""fraclab: numerical potential theory for perturbed fractional Brownian motion.

Simulate fractional Brownian paths with rough deterministic drift, estimate
hitting probabilities of fractal space-time targets, and compare them against
capacity and measure bounds in the natural parabolic geometry.
"""

__version__ = "0.1.0"

from .errors import (
    FraclabError,
    NumericError,
    ResourceError,
    ShapeError,
    ValidationError,
)

__all__ = [
    "FraclabError",
    "ValidationError",
    "ShapeError",
    "NumericError",
    "ResourceError",
    "__version__",
]
