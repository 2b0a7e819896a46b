"""Per-class segment pools: construction, persistence, validation.

On disk a pool is a directory: ``manifest.json`` (metadata and entry
records), ``masks/<segment_id>.png`` (grayscale 0/255), ``features.bin``
(feature-file format), and ``pca.bin`` (magic "USGP1", u32 d, u32 p',
mean d*f32, components p'*d f32, eigenvalues p'*f32). Features and the
PCA model are held as float32 end to end so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .consensus import AnchorSegment, ConsensusConfig, anchors_for_image
from .errors import PoolFormatError, UsegmixError
from .features import (
    DescriptorConfig,
    PCAModel,
    builtin_descriptor,
    crop_resize,
    ingest_external_features,
    pca_fit,
    pca_transform,
    write_features,
)
from .raster import ImageRGB, decode_mask, encode_png
from .segmenter import SegmenterBackend
from .superpixel import SlicConfig, slic

PCA_MAGIC = b"USGP1"
MANIFEST_VERSION = 1


@dataclass
class PoolEntry:
    anchor: AnchorSegment
    feature: np.ndarray  # (p',) float32
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 1.0:
            raise ValueError(f"entry {self.anchor.segment_id}: weight must be >= 1")


@dataclass
class SegmentPool:
    class_label: str
    entries: list[PoolEntry]
    pca: PCAModel
    feature_source: str = "builtin"  # or "external"
    source_root: str = ""  # corpus root the relative source paths hang off
    source_paths: dict[str, str] = field(default_factory=dict)  # image id -> relative path

    def __post_init__(self):
        if not self.entries:
            raise ValueError(f"pool {self.class_label!r} must hold at least one entry")
        ids = [e.anchor.segment_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"pool {self.class_label!r} has duplicate segment ids")
        dims = {e.feature.shape for e in self.entries}
        if dims != {(self.pca.output_dim,)}:
            raise ValueError(f"pool {self.class_label!r} has inconsistent feature dims: {dims}")

    @property
    def size(self) -> int:
        return len(self.entries)

    def entry_ids(self) -> list[str]:
        return [e.anchor.segment_id for e in self.entries]

    def entries_from(self, image_id: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.anchor.source_image == image_id]


def build_pool(
    corpus: list[tuple[ImageRGB, str]],
    backend: SegmenterBackend,
    seed: int,
    slic_cfg: SlicConfig | None = None,
    consensus_cfg: ConsensusConfig | None = None,
    descriptor_cfg: DescriptorConfig | None = None,
    pca_dim: int = 128,
    image_ids: list[str] | None = None,
    external_features: Path | str | None = None,
    source_root: str = "",
    source_paths: dict[str, str] | None = None,
) -> dict[str, SegmentPool]:
    """Run Phase 1 over a corpus and assemble one pool per class.

    Anchors come from the K-prompt consensus per image; features are the
    builtin descriptor (or externally computed vectors keyed by segment
    id); PCA is fit per class on that class's raw features. All weights
    start at 1.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    slic_cfg = slic_cfg or SlicConfig()
    consensus_cfg = consensus_cfg or ConsensusConfig()
    descriptor_cfg = descriptor_cfg or DescriptorConfig()
    if image_ids is None:
        image_ids = [f"img{i:04d}" for i in range(len(corpus))]
    if len(image_ids) != len(corpus):
        raise ValueError("image_ids length must match corpus length")

    external = ingest_external_features(external_features) if external_features else None

    per_class: dict[str, list[AnchorSegment]] = {}
    for idx, (img, class_label) in enumerate(corpus):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        sp = slic(img, slic_cfg, seed)
        anchors = anchors_for_image(
            img, sp, backend, consensus_cfg, rng, image_id=image_ids[idx], class_label=class_label
        )
        per_class.setdefault(class_label, []).extend(anchors)

    images_by_id = {image_ids[i]: corpus[i][0] for i in range(len(corpus))}
    classes = sorted({c for _, c in corpus})
    pools: dict[str, SegmentPool] = {}
    for class_label in classes:
        anchors = per_class.get(class_label, [])
        if not anchors:
            raise UsegmixError(f"class {class_label!r} produced zero anchors")
        if external is not None:
            raw = []
            for a in anchors:
                if a.segment_id not in external:
                    raise PoolFormatError(f"external features missing segment {a.segment_id!r}")
                raw.append(external[a.segment_id].astype(np.float64))
            source = "external"
        else:
            raw = [
                builtin_descriptor(crop_resize(images_by_id[a.source_image], a.mask), descriptor_cfg)
                for a in anchors
            ]
            source = "builtin"
        if len(raw) < 2:
            # PCA needs two samples; degenerate single-anchor classes keep
            # the raw feature behind an identity-like 1-component model
            raw = raw + [raw[0] + 1e-6]
        model = pca_fit(np.array(raw), pca_dim)
        model32 = PCAModel(
            model.mean.astype(np.float32).astype(np.float64),
            model.components.astype(np.float32).astype(np.float64),
            model.explained_variance.astype(np.float32).astype(np.float64),
        )
        entries = [
            PoolEntry(a, pca_transform(model32, f).astype(np.float32), 1.0)
            for a, f in zip(anchors, raw)
        ]
        pools[class_label] = SegmentPool(
            class_label,
            entries,
            model32,
            source,
            source_root,
            dict(source_paths or {}),
        )
    return pools


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_pool(pool: SegmentPool, directory: Path | str) -> None:
    """Persist a pool; overwrites are per-file atomic and deterministic."""
    directory = Path(directory)
    masks_dir = directory / "masks"
    try:
        masks_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "version": MANIFEST_VERSION,
            "class_label": pool.class_label,
            "feature_source": pool.feature_source,
            "p": pool.pca.output_dim,
            "source_root": pool.source_root,
            "source_paths": pool.source_paths,
            "entries": [
                {
                    "segment_id": e.anchor.segment_id,
                    "source_image": e.anchor.source_image,
                    "mask": f"masks/{e.anchor.segment_id}.png",
                    "weight": e.weight,
                }
                for e in pool.entries
            ],
        }
        for e in pool.entries:
            _atomic_write(masks_dir / f"{e.anchor.segment_id}.png", encode_png(e.anchor.mask))
        referenced = {f"{e.anchor.segment_id}.png" for e in pool.entries}
        for stale in masks_dir.glob("*.png"):
            if stale.name not in referenced:
                stale.unlink()

        feats = {e.anchor.segment_id: e.feature for e in pool.entries}
        tmp_feat = directory / "features.bin.tmp"
        write_features(tmp_feat, feats)
        os.replace(tmp_feat, directory / "features.bin")

        pca = pool.pca
        blob = b"".join(
            [
                PCA_MAGIC,
                struct.pack("<II", pca.input_dim, pca.output_dim),
                pca.mean.astype("<f4").tobytes(),
                pca.components.astype("<f4").tobytes(),
                pca.explained_variance.astype("<f4").tobytes(),
            ]
        )
        _atomic_write(directory / "pca.bin", blob)
        _atomic_write(
            directory / "manifest.json",
            (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"),
        )
    except OSError as exc:
        raise UsegmixError(f"failed to save pool to {directory}: {exc}") from exc


def _load_pca(path: Path) -> PCAModel:
    data = path.read_bytes()
    if data[:5] != PCA_MAGIC:
        raise PoolFormatError(f"{path}: bad PCA magic")
    d, p = struct.unpack_from("<II", data, 5)
    need = 13 + 4 * (d + p * d + p)
    if len(data) != need:
        raise PoolFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    off = 13
    mean = np.frombuffer(data, dtype="<f4", count=d, offset=off).astype(np.float64)
    off += 4 * d
    comps = np.frombuffer(data, dtype="<f4", count=p * d, offset=off).astype(np.float64).reshape(p, d)
    off += 4 * p * d
    ev = np.frombuffer(data, dtype="<f4", count=p, offset=off).astype(np.float64)
    return PCAModel(mean, comps, ev)


def load_pool(directory: Path | str) -> SegmentPool:
    """Load and re-validate a persisted pool."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise PoolFormatError(f"{manifest_path}: missing manifest")
    manifest = json.loads(manifest_path.read_text("utf-8"))
    if manifest.get("version") != MANIFEST_VERSION:
        raise PoolFormatError(f"{manifest_path}: unsupported version {manifest.get('version')!r}")

    feats = ingest_external_features(directory / "features.bin")
    pca = _load_pca(directory / "pca.bin")
    if pca.output_dim != manifest["p"]:
        raise PoolFormatError(f"{directory}: PCA dim {pca.output_dim} != manifest p {manifest['p']}")

    entries = []
    seen: set[str] = set()
    for rec in manifest["entries"]:
        sid = rec["segment_id"]
        if sid in seen:
            raise PoolFormatError(f"{manifest_path}: duplicate segment_id {sid!r}")
        seen.add(sid)
        mask_path = directory / rec["mask"]
        if not mask_path.is_file():
            raise PoolFormatError(f"{directory}: missing mask file {rec['mask']!r} for {sid!r}")
        mask = decode_mask(mask_path.read_bytes())
        if sid not in feats:
            raise PoolFormatError(f"{directory}: features.bin is missing segment {sid!r}")
        vec = feats[sid]
        if vec.shape != (pca.output_dim,):
            raise PoolFormatError(f"{directory}: feature dim {vec.shape} for {sid!r}, expected ({pca.output_dim},)")
        anchor = AnchorSegment(mask, rec["source_image"], manifest["class_label"], sid)
        entries.append(PoolEntry(anchor, vec, float(rec["weight"])))

    return SegmentPool(
        manifest["class_label"],
        entries,
        pca,
        manifest["feature_source"],
        manifest.get("source_root", ""),
        dict(manifest.get("source_paths", {})),
    )
