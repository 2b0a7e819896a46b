"""Replacement placement and artifact-free compositing.

A replacement segment is scaled and translated onto the target footprint
(rotation-free similarity fit), pasted, and the artifact region (uncovered
holes plus a boundary band) is repaired by a discrete Poisson solve:
harmonic fill (zero guidance) or seamless cloning (composite gradients
with seam-crossing pairs dropped). An external inpainter can take the
Poisson step's place over the wire protocol; either way pixels outside
the inpaint mask are untouched, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .consensus import AnchorSegment, identity_vector
from .errors import BackendError, ConvergenceError
from .raster import AffineTransform2D, BitMask, ImageRGB, dilate, erode, warp_affine

_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class BlendConfig:
    band_width: int = 3
    solver_tol: float = 1e-8
    solver_max_iters: int | None = None  # None = 10 * unknown count
    mode: str = "seamless-clone"  # or "harmonic-fill"
    fallback_to_builtin: bool = False
    full_union_inpaint: bool = False  # hand external inpainters the whole replaced area

    def __post_init__(self):
        if self.band_width < 1:
            raise ValueError("band_width must be >= 1")
        if self.solver_tol <= 0:
            raise ValueError("solver_tol must be > 0")
        if self.mode not in ("seamless-clone", "harmonic-fill"):
            raise ValueError(f"unknown blend mode {self.mode!r}")


@dataclass(frozen=True)
class BlendPlan:
    target_mask: BitMask
    warped_replacement_mask: BitMask
    warped_replacement_pixels: ImageRGB
    inpaint_mask: BitMask
    transform: AffineTransform2D


def fit_affine(src: BitMask, dst: BitMask) -> AffineTransform2D:
    """Rotation-free similarity aligning src onto dst.

    Isotropic scale is the ratio of sqrt-areas; translation aligns the
    centroids after scaling.
    """
    sv = identity_vector(src)
    dv = identity_vector(dst)
    s = dv.scnt / sv.scnt
    return AffineTransform2D.scale_translate(s, dv.cx - s * sv.cx, dv.cy - s * sv.cy)


def make_blend_plan(
    target_img: ImageRGB,
    target: AnchorSegment,
    repl_img: ImageRGB,
    repl: AnchorSegment,
    cfg: BlendConfig | None = None,
) -> BlendPlan:
    """Warp the replacement onto the target footprint and mark the artifact
    region: uncovered target pixels plus a band around both boundaries."""
    cfg = cfg or BlendConfig()
    w, h = target_img.width, target_img.height
    transform = fit_affine(repl.mask, target.mask)
    warped_mask = warp_affine(repl.mask, transform, w, h)
    if warped_mask.is_empty:
        raise ValueError("warped replacement mask is empty (degenerate transform)")
    warped_pixels = warp_affine(repl_img, transform, w, h)

    union = BitMask(target.mask.bits | warped_mask.bits)
    band = BitMask(dilate(union, cfg.band_width).bits & ~erode(warped_mask, cfg.band_width).bits)
    if cfg.full_union_inpaint:
        base = union.bits
    else:
        base = target.mask.bits & ~warped_mask.bits
    return BlendPlan(
        target_mask=target.mask,
        warped_replacement_mask=warped_mask,
        warped_replacement_pixels=warped_pixels,
        inpaint_mask=BitMask(base | band.bits),
        transform=transform,
    )


def paste(target_img: ImageRGB, plan: BlendPlan) -> ImageRGB:
    """Composite with artifacts: replacement pixels under the warped mask,
    target pixels elsewhere."""
    sel = plan.warped_replacement_mask.bits[:, :, None]
    return ImageRGB(np.where(sel, plan.warped_replacement_pixels.pixels, target_img.pixels))


def _boundary_sums(values: np.ndarray, unknown: np.ndarray) -> np.ndarray:
    """Per-pixel sum of known in-image neighbor values (Dirichlet data)."""
    h, w = values.shape
    known_vals = np.where(unknown, 0.0, values)
    known = ~unknown
    b = np.zeros((h, w))
    b[1:, :] += np.where(known[:-1, :], known_vals[:-1, :], 0.0)
    b[:-1, :] += np.where(known[1:, :], known_vals[1:, :], 0.0)
    b[:, 1:] += np.where(known[:, :-1], known_vals[:, :-1], 0.0)
    b[:, :-1] += np.where(known[:, 1:], known_vals[:, 1:], 0.0)
    return b


def _seam_guidance(values: np.ndarray, same_side: np.ndarray) -> np.ndarray:
    """Accumulated guidance differences sum_q (v_p - v_q), zeroed across
    the seam (pairs on different sides of the pasted region)."""
    h, w = values.shape
    g = np.zeros((h, w))
    for dy, dx in _DIRS:
        ys0, ys1 = max(0, dy), min(h, h + dy)
        yd0, yd1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, dx), min(w, w + dx)
        xd0, xd1 = max(0, -dx), min(w, w - dx)
        diff = values[yd0:yd1, xd0:xd1] - values[ys0:ys1, xs0:xs1]
        keep = same_side[yd0:yd1, xd0:xd1] == same_side[ys0:ys1, xs0:xs1]
        g[yd0:yd1, xd0:xd1] += np.where(keep, diff, 0.0)
    return g


def solve_poisson_region(
    values: np.ndarray,
    unknown: np.ndarray,
    guidance: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int | None = None,
) -> np.ndarray:
    """Solve the discrete Poisson equation over the unknown pixels.

    ``values`` supplies Dirichlet data outside ``unknown``; ``guidance``
    is an optional per-pixel divergence term (zero = harmonic fill).
    Image-border pixels simply use their available neighbors. Returns a
    float array equal to ``values`` outside the mask.
    """
    unknown = unknown.astype(bool)
    n = int(unknown.sum())
    if n == 0:
        return values.astype(np.float64).copy()
    if max_iters is None:
        max_iters = 10 * n
    vals = values.astype(np.float64)
    b = _boundary_sums(vals, unknown)[unknown]
    if guidance is not None:
        b = b + guidance[unknown]
    x0 = vals[unknown]
    x, iters, relres = _kernels.cg_masked_laplacian(
        unknown.astype(np.uint8), np.ascontiguousarray(b), np.ascontiguousarray(x0), tol, max_iters
    )
    if relres > tol:
        raise ConvergenceError(
            f"Poisson solve stalled at relative residual {relres:.3e} after {iters} iterations",
            relres,
            iters,
        )
    out = vals.copy()
    out[unknown] = x
    return out


def poisson_blend(composite: ImageRGB, plan: BlendPlan, cfg: BlendConfig | None = None) -> ImageRGB:
    """Repair the plan's artifact region with the configured Poisson mode.

    Every pixel outside the inpaint mask is copied from the composite
    unchanged.
    """
    cfg = cfg or BlendConfig()
    unknown = plan.inpaint_mask.bits
    if not unknown.any():
        return composite
    out = composite.pixels.copy()
    same_side = plan.warped_replacement_mask.bits
    for ch in range(3):
        vals = composite.pixels[:, :, ch].astype(np.float64)
        guidance = _seam_guidance(vals, same_side) if cfg.mode == "seamless-clone" else None
        solved = solve_poisson_region(vals, unknown, guidance, cfg.solver_tol, cfg.solver_max_iters)
        out[:, :, ch][unknown] = np.clip(np.rint(solved[unknown]), 0, 255).astype(np.uint8)
    return ImageRGB(out)


def inpaint(
    composite: ImageRGB,
    plan: BlendPlan,
    backend=None,
    cfg: BlendConfig | None = None,
    steps: int = 500,
) -> ImageRGB:
    """Dispatch artifact repair to the builtin solver or an external backend.

    External results are masked-merged so pixels outside the inpaint mask
    stay bit-identical to the composite regardless of what the backend
    returned. Backend failures raise unless fallback_to_builtin is set.
    """
    cfg = cfg or BlendConfig()
    if backend is None or backend == "builtin":
        return poisson_blend(composite, plan, cfg)
    try:
        result = backend.inpaint(composite, plan.inpaint_mask, steps)
    except BackendError:
        if cfg.fallback_to_builtin:
            return poisson_blend(composite, plan, cfg)
        raise
    sel = plan.inpaint_mask.bits[:, :, None]
    return ImageRGB(np.where(sel, result.pixels, composite.pixels))
