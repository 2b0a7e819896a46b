"""Consensus over repeated prompts: cluster masks, pick anchors, dedup.

Each superpixel is prompted K times with random interior points; the
resulting masks are summarized by identity vectors (centroid-x,
centroid-y, sqrt(count)) and grouped by single-linkage clustering with an
absolute L2 cutoff. The largest cluster's most frequent mask (frequency
over IoU-equivalence classes) becomes the superpixel's anchor; anchors
are then deduplicated greedily across the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackendError, UsegmixError
from .raster import BitMask, ImageRGB, mask_iou
from .segmenter import SegmenterBackend, segment_at_point
from .superpixel import SuperpixelMap, sample_point_in_region


@dataclass(frozen=True)
class IdentityVector:
    cx: float
    cy: float
    scnt: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.scnt])


@dataclass(frozen=True)
class ConsensusConfig:
    k: int = 15
    cluster_tol: float | None = None  # None = 0.05 * sqrt(W * H)
    freq_iou: float = 0.95
    dedup_iou: float = 0.80
    min_anchor_area_frac: float = 0.0  # optional small-anchor filter, off by default

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("freq_iou", "dedup_iou"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1]")

    def effective_cluster_tol(self, width: int, height: int) -> float:
        if self.cluster_tol is not None:
            return self.cluster_tol
        return 0.05 * float(np.sqrt(width * height))


@dataclass(frozen=True)
class AnchorSegment:
    mask: BitMask
    source_image: str
    class_label: str
    segment_id: str

    def __post_init__(self):
        if self.mask.is_empty:
            raise ValueError(f"anchor {self.segment_id} has an empty mask")


def identity_vector(m: BitMask) -> IdentityVector:
    """Exact centroid and sqrt-count of the set pixels."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        raise ValueError("identity vector of an empty mask is undefined")
    return IdentityVector(float(xs.mean()), float(ys.mean()), float(np.sqrt(ys.size)))


def cluster_masks(masks: list[BitMask], cfg: ConsensusConfig) -> list[list[int]]:
    """Partition mask indices by single-linkage clustering with an L2 cutoff.

    Single linkage with an absolute cutoff equals connected components of
    the "distance <= tol" graph over identity vectors. Clusters are
    ordered by smallest member index, members ascending.
    """
    if not masks:
        raise ValueError("cluster_masks needs at least one mask")
    shape = masks[0].bits.shape
    for m in masks[1:]:
        if m.bits.shape != shape:
            raise ValueError("masks must share dimensions")
    tol = cfg.effective_cluster_tol(shape[1], shape[0])
    vecs = np.array([identity_vector(m).as_array() for m in masks])
    n = len(masks)
    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i in range(n):
        diffs = vecs[i + 1 :] - vecs[i]
        close = np.flatnonzero(np.sqrt((diffs * diffs).sum(axis=1)) <= tol)
        for j in close:
            ri, rj = find(i), find(int(j) + i + 1)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[r] for r in sorted(groups)]


def select_anchor(masks: list[BitMask], cluster: list[int], cfg: ConsensusConfig) -> BitMask:
    """Most frequent mask in a cluster, frequency over IoU-equivalence classes.

    Greedy in index order: a mask joins the first class whose
    representative it matches at freq_iou; the largest class's
    representative wins, ties by larger pixel count then lower index.
    """
    if not cluster:
        raise ValueError("cluster must be nonempty")
    reps: list[int] = []
    members: list[list[int]] = []
    for idx in cluster:
        for ci, rep in enumerate(reps):
            if mask_iou(masks[idx], masks[rep]) >= cfg.freq_iou:
                members[ci].append(idx)
                break
        else:
            reps.append(idx)
            members.append([idx])
    best = max(
        range(len(reps)),
        key=lambda ci: (len(members[ci]), masks[reps[ci]].count, -reps[ci]),
    )
    return masks[reps[best]]


def dedup_anchors(anchors: list[AnchorSegment], dedup_iou: float) -> list[AnchorSegment]:
    """Greedy duplicate removal, scanning in descending mask area."""
    ordered = sorted(anchors, key=lambda a: -a.mask.count)
    kept: list[AnchorSegment] = []
    for cand in ordered:
        if all(mask_iou(cand.mask, k.mask) < dedup_iou for k in kept):
            kept.append(cand)
    return kept


def anchors_for_image(
    img: ImageRGB,
    sp: SuperpixelMap,
    backend: SegmenterBackend,
    cfg: ConsensusConfig,
    rng: np.random.Generator,
    image_id: str = "image",
    class_label: str = "",
) -> list[AnchorSegment]:
    """Run the K-prompt consensus over every superpixel and dedup the anchors.

    Each superpixel consumes an independent child RNG stream, so the
    result is invariant to per-superpixel parallelism. Prompt failures are
    skipped; a superpixel is dropped once half its prompts fail.
    """
    if (sp.height, sp.width) != (img.height, img.width):
        raise ValueError("superpixel map dimensions do not match the image")
    streams = rng.spawn(sp.n_regions)
    candidates: list[tuple[int, BitMask]] = []
    for region in range(sp.n_regions):
        sub = streams[region]
        masks: list[BitMask] = []
        failures = 0
        for _ in range(cfg.k):
            point = sample_point_in_region(sp, region, sub)
            try:
                masks.append(segment_at_point(backend, img, point))
            except (BackendError, UsegmixError):
                failures += 1
                if failures * 2 >= cfg.k:
                    break
        if failures * 2 >= cfg.k or not masks:
            continue
        clusters = cluster_masks(masks, cfg)
        best = max(
            clusters,
            key=lambda cl: (
                len(cl),
                float(np.mean([masks[i].count for i in cl])),
                -cl[0],
            ),
        )
        candidates.append((region, select_anchor(masks, best, cfg)))

    if not candidates:
        raise UsegmixError(f"no anchors: every superpixel of {image_id!r} was skipped")

    min_area = cfg.min_anchor_area_frac * img.width * img.height
    anchors = [
        AnchorSegment(mask, image_id, class_label, f"{image_id}-s{region:03d}")
        for region, mask in candidates
        if mask.count >= min_area
    ]
    if not anchors:
        raise UsegmixError(f"no anchors: all candidates of {image_id!r} fell under the area floor")
    return dedup_anchors(anchors, cfg.dedup_iou)
