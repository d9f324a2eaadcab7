"""Numeric kernels: a compiled (Cython) fast path and a NumPy fallback.

The two backends implement the same six operations with matching
floating-point semantics (same expression grouping, same accumulation
order), so results are bit-identical whichever one is active. Selection
happens once at import: the compiled extension is preferred when it built,
otherwise the NumPy implementation takes over. Set FRUITDX_KERNELS=numpy
or FRUITDX_KERNELS=compiled to force a backend; forcing `compiled` raises
if the extension is unavailable.
"""

import os

_requested = os.environ.get("FRUITDX_KERNELS", "").strip().lower()

if _requested == "numpy":
    from fruitdx.kernels import _fallback as _impl

    BACKEND = "numpy"
elif _requested == "compiled":
    from fruitdx.kernels import _core as _impl  # type: ignore[no-redef]

    BACKEND = "compiled"
elif _requested == "":
    try:
        from fruitdx.kernels import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from fruitdx.kernels import _fallback as _impl

        BACKEND = "numpy"
else:
    raise ImportError(f"unknown FRUITDX_KERNELS backend {_requested!r}")

circular_samples = _impl.circular_samples
lloyd = _impl.lloyd
box_blur_masked = _impl.box_blur_masked
component_sizes = _impl.component_sizes
cdh_accumulate = _impl.cdh_accumulate
seh_counts = _impl.seh_counts

__all__ = [
    "BACKEND",
    "circular_samples",
    "lloyd",
    "box_blur_masked",
    "component_sizes",
    "cdh_accumulate",
    "seh_counts",
]
