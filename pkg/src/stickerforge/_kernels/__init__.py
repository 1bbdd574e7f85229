"""Hot-loop kernels: compiled core when available, NumPy fallback otherwise.

Selection happens once at import. ``STICKER_FORGE_KERNELS=python`` forces the
pure-NumPy implementations, ``=c`` requires the compiled extension (import
error if missing), anything else / unset uses the extension when it imports
cleanly. ``BACKEND`` reports which mode is active.

Routing is measurement-driven (see benchmarks/bench_kernels.py): the
composite/resize and maxpool kernels go to the extension, while convolution
always uses the im2col + BLAS matmul path, which beats the direct compiled
loop on the deeper (short-row, many-channel) layers. The direct compiled
convolution stays exported from ``_core`` for parity tests and benchmarks.
"""

import importlib
import os

from . import pure

_requested = os.environ.get("STICKER_FORGE_KERNELS", "auto").strip().lower() or "auto"
if _requested not in ("auto", "c", "python"):
    raise ValueError(
        f"STICKER_FORGE_KERNELS must be 'c', 'python', or unset, got {_requested!r}"
    )

_core = None
if _requested in ("auto", "c"):
    try:
        _core = importlib.import_module(__name__ + "._core")
    except ImportError:
        _core = None
    if _requested == "c" and _core is None:
        raise ImportError("STICKER_FORGE_KERNELS=c but the compiled core is not built")

BACKEND = "c" if _core is not None else "python"

if _core is not None:
    resize_bilinear_rgb8 = _core.resize_bilinear_rgb8
    composite_resize_rgb8 = _core.composite_resize_rgb8
    maxpool2 = _core.maxpool2
else:
    resize_bilinear_rgb8 = pure.resize_bilinear_rgb8
    composite_resize_rgb8 = pure.composite_resize_rgb8
    maxpool2 = pure.maxpool2

conv2d_valid = pure.conv2d_valid
