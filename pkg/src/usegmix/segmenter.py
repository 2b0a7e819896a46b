"""Point-prompted segmentation behind a uniform backend interface.

The builtin backend is a deterministic color flood fill so the whole
pipeline runs hermetically; foundation models plug in over the external
wire protocol and answer the same prompt contract: one nonempty mask per
point, matching the image dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from . import _kernels
from .errors import BackendError
from .raster import BitMask, ImageRGB, Point


@dataclass(frozen=True)
class FloodFillConfig:
    color_tol: int = 25
    connectivity: int = 4
    max_frac: float = 0.9

    def __post_init__(self):
        if not 0 <= self.color_tol <= 255:
            raise ValueError("color_tol must be in [0, 255]")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if not 0 < self.max_frac <= 1.0:
            raise ValueError("max_frac must be in (0, 1]")


@dataclass(frozen=True)
class FloodFillBackend:
    """In-repo deterministic segmenter."""

    config: FloodFillConfig = field(default_factory=FloodFillConfig)
    kind: str = "builtin-floodfill"


@dataclass(frozen=True)
class ExternalBackend:
    """Delegates prompts to a spawned backend process (see backend_protocol)."""

    handle: "object"  # BackendHandle; typed loosely to avoid an import cycle
    kind: str = "external"


SegmenterBackend = Union[FloodFillBackend, ExternalBackend]


def floodfill_segment(img: ImageRGB, p: Point, cfg: FloodFillConfig) -> BitMask:
    """Maximal connected region within per-channel tolerance of the seed color.

    BFS-level truncation applies once the region exceeds max_frac of the
    image, so the result is always seed-containing and connected.
    """
    x, y = int(p.x), int(p.y)
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise ValueError(f"seed point ({p.x}, {p.y}) outside image bounds")
    max_px = max(1, int(cfg.max_frac * img.width * img.height))
    mask = _kernels.flood_fill(img.pixels, y, x, cfg.color_tol, cfg.connectivity, max_px)
    return BitMask(mask.astype(bool))


def segment_at_point(backend: SegmenterBackend, img: ImageRGB, p: Point) -> BitMask:
    """Prompt the backend with a point; returns a nonempty mask containing it.

    External failures surface as BackendError with the backend's
    diagnostics attached; an empty reply mask is treated as a failure.
    """
    if not (0 <= p.x < img.width and 0 <= p.y < img.height):
        raise ValueError(f"prompt point ({p.x}, {p.y}) outside image bounds")
    if isinstance(backend, FloodFillBackend):
        mask = floodfill_segment(img, p, backend.config)
    elif isinstance(backend, ExternalBackend):
        mask = backend.handle.segment(img, p)
    else:
        raise TypeError(f"unknown backend {type(backend).__name__}")
    if mask.is_empty:
        raise BackendError(f"backend returned an empty mask for prompt ({p.x}, {p.y})")
    if not mask.bits[int(p.y), int(p.x)]:
        raise BackendError(f"backend mask does not contain the prompt pixel ({int(p.x)}, {int(p.y)})")
    return mask
