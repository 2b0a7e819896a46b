"""usegmix: two-phase segment-pool augmentation for image corpora.

Phase 1 builds per-class pools of consensus segments from unsupervised
prompting over superpixels; Phase 2 synthesizes new images by
probabilistically swapping segments for pool lookalikes and blending the
seams. Hot kernels run through a compiled core when available
(``usegmix._kernels.ACTIVE`` reports which implementation is live).
"""

from ._kernels import ACTIVE as kernel_backend
from .errors import (
    BackendError,
    ConvergenceError,
    DecodeError,
    PoolFormatError,
    UsegmixError,
)
from .raster import (
    AffineTransform2D,
    BBox,
    BitMask,
    ImageRGB,
    Point,
    decode_image,
    decode_mask,
    dilate,
    encode_png,
    erode,
    mask_bbox,
    mask_iou,
    warp_affine,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform2D",
    "BBox",
    "BackendError",
    "BitMask",
    "ConvergenceError",
    "DecodeError",
    "ImageRGB",
    "Point",
    "PoolFormatError",
    "UsegmixError",
    "decode_image",
    "decode_mask",
    "dilate",
    "encode_png",
    "erode",
    "kernel_backend",
    "mask_bbox",
    "mask_iou",
    "warp_affine",
    "__version__",
]
