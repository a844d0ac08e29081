"""Kernel backend selection.

The compiled Cython core is used when importable; otherwise the numpy
fallback takes over transparently. ``FRACLAB_BACKEND=python`` forces the
fallback (useful for benchmarking and parity tests); ``FRACLAB_BACKEND=c``
makes a missing extension a hard error instead of a silent fallback.
"""

import os

from . import _pykern

_requested = os.environ.get("FRACLAB_BACKEND", "").strip().lower()

if _requested in ("", "c"):
    try:
        from . import _ckern as _impl

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        _impl = _pykern
        BACKEND = "python"
elif _requested == "python":
    _impl = _pykern
    BACKEND = "python"
else:
    raise ValueError(f"unknown FRACLAB_BACKEND value: {_requested!r}")

energy_sum = _impl.energy_sum
energy_matvec = _impl.energy_matvec
kernel_column = _impl.kernel_column
min_dist_balls = _impl.min_dist_balls
min_dist_boxes = _impl.min_dist_boxes
count_unique_int64 = _impl.count_unique_int64

__all__ = [
    "BACKEND",
    "energy_sum",
    "energy_matvec",
    "kernel_column",
    "min_dist_balls",
    "min_dist_boxes",
    "count_unique_int64",
]
