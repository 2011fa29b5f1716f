"""Interactive deep-image-prior restoration.

Images are ``(H, W, 3)`` float32 arrays in ``[0, 1]``; masks are ``(H, W)``
bool arrays with ``True`` marking known pixels.
"""

from ._core import (
    ImageError,
    OptimizationAborted,
    Service,
    Session,
    SessionStateError,
    default_config,
    dssim,
    evaluate,
    load_triplet,
    lmse,
    make_fixture,
    mse,
    parameter_count,
    read_mask,
    read_png,
    replay,
    ssim,
    truth_guidance_script,
    write_mask,
    write_png,
)

__version__ = "0.1.0"

__all__ = [
    "ImageError",
    "OptimizationAborted",
    "Service",
    "Session",
    "SessionStateError",
    "default_config",
    "dssim",
    "evaluate",
    "load_triplet",
    "lmse",
    "make_fixture",
    "mse",
    "parameter_count",
    "read_mask",
    "read_png",
    "replay",
    "ssim",
    "truth_guidance_script",
    "write_mask",
    "write_png",
]
