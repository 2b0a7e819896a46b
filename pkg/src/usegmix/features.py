"""Anchor descriptors, external feature ingestion, and PCA reduction.

The builtin descriptor (per-channel intensity histograms plus a gradient
magnitude histogram) keeps the pipeline self-contained; deep features
computed offline enter through a small binary feature file. Either way a
per-class PCA maps raw vectors to the pool dimension.

Feature file format (little-endian): magic "USGF1", u32 record count,
u32 dim, then per record u16 id length, UTF-8 id bytes, dim * f32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PoolFormatError
from .raster import BitMask, ImageRGB, mask_bbox

FEATURE_MAGIC = b"USGF1"
PATCH_SIZE = 224


@dataclass(frozen=True)
class DescriptorConfig:
    bins_per_channel: int = 32
    gradient_bins: int = 16

    def __post_init__(self):
        if self.bins_per_channel < 2 or self.gradient_bins < 2:
            raise ValueError("histogram bins must be >= 2")

    @property
    def dim(self) -> int:
        return 3 * self.bins_per_channel + self.gradient_bins


@dataclass(frozen=True, eq=False)
class PCAModel:
    """Top eigenvectors of the sample covariance, rows orthonormal."""

    mean: np.ndarray  # (d,)
    components: np.ndarray  # (p, d)
    explained_variance: np.ndarray  # (p,) descending

    def __post_init__(self):
        for arr in (self.mean, self.components, self.explained_variance):
            arr.flags.writeable = False

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]


def _resize_bilinear(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Align-corners bilinear resize; endpoints map to endpoints exactly."""
    h, w, _ = pixels.shape
    src = pixels.astype(np.float64)

    def axis_coords(n_src: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_out == 1 or n_src == 1:
            base = np.zeros(n_out, dtype=np.int64)
            return base, base.copy(), np.zeros(n_out)
        pos = np.arange(n_out) * ((n_src - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(np.int64), n_src - 2)
        return lo, lo + 1, pos - lo

    x0, x1, fx = axis_coords(w, out_w)
    y0, y1, fy = axis_coords(h, out_h)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.ascontiguousarray(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def crop_resize(img: ImageRGB, m: BitMask) -> ImageRGB:
    """Crop the mask's bounding box from the image and resize to 224x224.

    The crop keeps everything inside the box; the mask is not applied as
    an alpha cut.
    """
    box = mask_bbox(m)
    crop = img.pixels[box.y0 : box.y1 + 1, box.x0 : box.x1 + 1]
    return ImageRGB(_resize_bilinear(crop, PATCH_SIZE, PATCH_SIZE))


def builtin_descriptor(patch: ImageRGB, cfg: DescriptorConfig | None = None) -> np.ndarray:
    """Histogram descriptor of a 224x224 patch.

    Concatenates L1-normalized per-channel intensity histograms and an
    L1-normalized gradient-magnitude histogram (central differences,
    uniform bins over [0, 255 * sqrt(2)]).
    """
    cfg = cfg or DescriptorConfig()
    if (patch.height, patch.width) != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError(f"descriptor expects a {PATCH_SIZE}x{PATCH_SIZE} patch, got {patch.width}x{patch.height}")
    px = patch.pixels
    n = px.shape[0] * px.shape[1]
    parts = []
    for ch in range(3):
        binned = (px[:, :, ch].astype(np.int64) * cfg.bins_per_channel) // 256
        hist = np.bincount(binned.ravel(), minlength=cfg.bins_per_channel).astype(np.float64)
        parts.append(hist / n)

    gray = px.astype(np.float64).mean(axis=2)
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    gx[:, 1:-1] = gray[:, 2:] - gray[:, :-2]
    gx[:, 0] = gray[:, 1] - gray[:, 0]
    gx[:, -1] = gray[:, -1] - gray[:, -2]
    gy[1:-1, :] = gray[2:, :] - gray[:-2, :]
    gy[0, :] = gray[1, :] - gray[0, :]
    gy[-1, :] = gray[-1, :] - gray[-2, :]
    mag = np.hypot(gx, gy)
    gmax = 255.0 * np.sqrt(2.0)
    binned = np.minimum((mag / gmax * cfg.gradient_bins).astype(np.int64), cfg.gradient_bins - 1)
    hist = np.bincount(binned.ravel(), minlength=cfg.gradient_bins).astype(np.float64)
    parts.append(hist / n)
    return np.concatenate(parts)


def write_features(path: Path | str, records: dict[str, np.ndarray]) -> None:
    """Write a feature file; values are stored as f32."""
    items = list(records.items())
    if items:
        dim = len(items[0][1])
    else:
        dim = 0
    chunks = [FEATURE_MAGIC, struct.pack("<II", len(items), dim)]
    for rid, vec in items:
        if len(vec) != dim:
            raise ValueError(f"record {rid!r} has dim {len(vec)}, expected {dim}")
        rid_b = rid.encode("utf-8")
        chunks.append(struct.pack("<H", len(rid_b)))
        chunks.append(rid_b)
        chunks.append(np.asarray(vec, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def ingest_external_features(path: Path | str) -> dict[str, np.ndarray]:
    """Read a feature file into an id -> float32 vector map, validating
    uniqueness, dimension, and finiteness per record."""
    data = Path(path).read_bytes()
    if data[:5] != FEATURE_MAGIC:
        raise PoolFormatError(f"{path}: bad feature-file magic")
    if len(data) < 13:
        raise PoolFormatError(f"{path}: truncated header")
    count, dim = struct.unpack_from("<II", data, 5)
    off = 13
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        if off + 2 > len(data):
            raise PoolFormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + id_len + 4 * dim > len(data):
            raise PoolFormatError(f"{path}: truncated at record {i}")
        rid = data[off : off + id_len].decode("utf-8")
        off += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
        if rid in out:
            raise PoolFormatError(f"{path}: duplicate feature id {rid!r}")
        if not np.isfinite(vec).all():
            raise PoolFormatError(f"{path}: non-finite value in record {rid!r}")
        out[rid] = vec
    return out


def pca_fit(vectors: list[np.ndarray] | np.ndarray, p: int = 128) -> PCAModel:
    """Fit PCA by eigendecomposition of the sample covariance.

    Keeps p' = min(p, d, n-1) components, eigenvalues descending; each
    component's largest-magnitude entry is flipped positive so fits are
    reproducible.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_fit needs at least 2 vectors of a common dimension")
    n, d = x.shape
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    p_eff = min(p, d, n - 1)
    eigvals = np.clip(eigvals[order][:p_eff], 0.0, None)
    comps = eigvecs[:, order][:, :p_eff].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAModel(mean, comps, eigvals)


def pca_transform(model: PCAModel, v: np.ndarray) -> np.ndarray:
    """Project a vector onto the model's components."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.input_dim,):
        raise ValueError(f"vector dim {v.shape} does not match model dim {model.input_dim}")
    return model.components @ (v - model.mean)
