"""SLIC superpixels: the preliminary oversegmentation that seeds prompting.

Distances are computed in CIELAB with the usual compactness coupling;
centers start on a grid and are nudged to the lowest-gradient pixel in
their 3x3 neighborhood. A post-pass splits stray fragments, absorbs the
small ones into their largest neighbor, and caps the region count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .raster import ImageRGB, Point


@dataclass(frozen=True)
class SlicConfig:
    n_s: int = 30
    compactness: float = 10.0
    max_iters: int = 10
    min_region_frac: float = 0.25

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class SuperpixelMap:
    """Per-pixel region labels in [0, n_regions), each region 4-connected."""

    labels: np.ndarray  # (H, W) int32
    n_regions: int

    def __post_init__(self):
        self.labels.flags.writeable = False

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def region_pixels(self, label: int) -> np.ndarray:
        """Flat row-major indices of the region's pixels."""
        if not 0 <= label < self.n_regions:
            raise ValueError(f"label {label} out of range [0, {self.n_regions})")
        return np.flatnonzero(self.labels.ravel() == label)


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """sRGB uint8 -> CIELAB float64 under D65."""
    c = pixels.astype(np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = lin @ m.T
    white = np.array([0.95047, 1.0, 1.08883])
    t = xyz / white
    delta = 6.0 / 29.0
    ft = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * ft[..., 1] - 16.0
    lab[..., 1] = 500.0 * (ft[..., 0] - ft[..., 1])
    lab[..., 2] = 200.0 * (ft[..., 1] - ft[..., 2])
    return lab


def _init_centers(lab: np.ndarray, n_s: int) -> tuple[np.ndarray, float]:
    """Grid-seeded centers perturbed to the lowest-gradient 3x3 neighbor."""
    h, w, _ = lab.shape
    step = float(np.sqrt(h * w / n_s))
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    while ny * nx < n_s:  # round-off can undershoot the target
        if (ny + 1) * nx * w >= ny * (nx + 1) * h:
            nx += 1
        else:
            ny += 1

    grad = np.zeros((h, w))
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for ch in range(3):
        f = lab[:, :, ch]
        gx[:, 1:-1] = f[:, 2:] - f[:, :-2]
        gy[1:-1, :] = f[2:, :] - f[:-2, :]
        grad += gx * gx + gy * gy

    centers = np.empty((ny * nx, 5), dtype=np.float64)
    k = 0
    for iy in range(ny):
        cy = int((iy + 0.5) * h / ny)
        for ix in range(nx):
            cx = int((ix + 0.5) * w / nx)
            best = (cx, cy)
            best_g = np.inf
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    y, x = cy + dy, cx + dx
                    if 0 <= y < h and 0 <= x < w and grad[y, x] < best_g:
                        best_g = grad[y, x]
                        best = (x, y)
            x, y = best
            centers[k] = (lab[y, x, 0], lab[y, x, 1], lab[y, x, 2], float(x), float(y))
            k += 1
    return centers, step


def _enforce_connectivity(labels: np.ndarray, n_centers: int, cfg: SlicConfig) -> tuple[np.ndarray, int]:
    """Split disconnected fragments, absorb small ones, cap the count.

    Fragments below min_region_frac * (area / n_centers) merge into their
    largest adjacent component; merging continues on the smallest
    components until at most 2 * n_s remain. Components are renumbered by
    first row-major appearance.
    """
    h, w = labels.shape
    comp, n = _kernels.label_components(labels)

    # normalize component ids by scan order so both kernel impls agree
    flat = comp.ravel()
    uniq, first_idx = np.unique(flat, return_index=True)
    rank = np.empty(n, dtype=np.int64)
    rank[uniq[np.argsort(first_idx, kind="stable")]] = np.arange(uniq.size)
    comp = rank[flat].reshape(h, w)

    areas = np.bincount(comp.ravel(), minlength=n).astype(np.int64)

    # adjacency over 4-connected component borders
    adj: list[set[int]] = [set() for _ in range(n)]
    right = comp[:, :-1] != comp[:, 1:]
    down = comp[:-1, :] != comp[1:, :]
    for a, b in zip(comp[:, :-1][right].ravel(), comp[:, 1:][right].ravel()):
        adj[a].add(int(b))
        adj[b].add(int(a))
    for a, b in zip(comp[:-1, :][down].ravel(), comp[1:, :][down].ravel()):
        adj[a].add(int(b))
        adj[b].add(int(a))

    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def merge(small: int, into: int) -> None:
        parent[small] = into
        areas[into] += areas[small]
        adj[into] |= adj[small]

    def merge_target(v: int) -> int | None:
        """Largest current neighbor, ties to the lower id."""
        roots = {find(u) for u in adj[v]} - {v}
        if not roots:
            return None
        return max(sorted(roots), key=lambda r: (areas[r], -r))

    min_size = cfg.min_region_frac * (h * w / n_centers)
    for v in sorted(range(n), key=lambda v: (areas[v], v)):
        if find(v) != v or areas[v] >= min_size:
            continue
        target = merge_target(v)
        if target is not None:
            merge(v, target)

    def live() -> list[int]:
        return [v for v in range(n) if find(v) == v]

    cap = 2 * cfg.n_s
    survivors = live()
    while len(survivors) > cap:
        v = min(survivors, key=lambda v: (areas[v], v))
        target = merge_target(v)
        if target is None:
            break
        merge(v, target)
        survivors = live()

    root = np.array([find(v) for v in range(n)], dtype=np.int64)
    comp = root[comp.ravel()].reshape(h, w)

    # final renumber by first appearance
    uniq, first_idx, inverse = np.unique(comp.ravel(), return_index=True, return_inverse=True)
    remap = np.empty(uniq.size, dtype=np.int32)
    remap[np.argsort(first_idx, kind="stable")] = np.arange(uniq.size, dtype=np.int32)
    final = remap[inverse].reshape(h, w).astype(np.int32)
    return final, int(uniq.size)


def slic(img: ImageRGB, cfg: SlicConfig, seed: int = 0) -> SuperpixelMap:
    """Segment an image into roughly n_s compact superpixels.

    Deterministic for a fixed (image, config): the pipeline threads a seed
    through for interface uniformity, but no step here draws randomness.
    """
    h, w = img.height, img.width
    if h * w < cfg.n_s:
        raise ValueError(f"image area {h * w} is smaller than n_s={cfg.n_s}")
    lab = rgb_to_lab(img.pixels)
    centers, step = _init_centers(lab, cfg.n_s)
    labels = _kernels.slic_iterate(lab, centers, step, cfg.compactness, cfg.max_iters)
    final, n_regions = _enforce_connectivity(labels, centers.shape[0], cfg)
    return SuperpixelMap(final, n_regions)


def sample_point_in_region(spmap: SuperpixelMap, label: int, rng: np.random.Generator) -> Point:
    """Uniform draw of an integer pixel inside the region."""
    pixels = spmap.region_pixels(label)
    if pixels.size == 0:
        raise ValueError(f"region {label} is empty")
    flat = int(pixels[rng.integers(pixels.size)])
    y, x = divmod(flat, spmap.width)
    return Point(float(x), float(y))
