"""End-to-end orchestration: corpus indexing and dataset synthesis.

Phase 1 walks a ``<root>/<class>/*.png|jpg`` corpus and writes one pool
directory per class. Phase 2 replaces randomly chosen segments of a
target image with pool-sampled lookalikes until the new-area ratio clears
its floor, then repairs the union artifact region in a single inpaint
pass. All randomness flows from one master seed; each synthetic image
gets an independently derived seed so it can be reproduced in isolation.
"""

from __future__ import annotations

import json
import logging
import re
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blend import BlendConfig, BlendPlan, inpaint, make_blend_plan, paste
from .consensus import ConsensusConfig
from .errors import UsegmixError
from .features import DescriptorConfig
from .pool import SegmentPool, build_pool, load_pool, save_pool
from .raster import BitMask, ImageRGB, decode_image
from .sampler import TargetSelection, penalize, replacement_distribution, sample_replacement
from .segmenter import SegmenterBackend
from .superpixel import SlicConfig

log = logging.getLogger("usegmix")

_CORPUS_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class Phase2Config:
    ratio_min: float = 0.30
    ratio_max: float = 1.00
    max_attempts: int = 10
    per_class_count: int = 600
    inpaint_backend: str = "builtin"  # or "external"
    master_seed: int = 0
    reset_weights_per_image: bool = False

    def __post_init__(self):
        if not 0 < self.ratio_min <= self.ratio_max <= 1:
            raise ValueError("require 0 < ratio_min <= ratio_max <= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class SynthesisRecord:
    output_path: str
    source_image: str
    class_label: str
    replaced_segment_ids: list[str]
    replacement_segment_ids: list[str]
    achieved_ratio: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "output_path": self.output_path,
                "source_image": self.source_image,
                "class_label": self.class_label,
                "replaced_segment_ids": self.replaced_segment_ids,
                "replacement_segment_ids": self.replacement_segment_ids,
                "achieved_ratio": self.achieved_ratio,
                "seed": self.seed,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class CorpusImage:
    image_id: str
    class_label: str
    path: Path


def sanitize_id(raw: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "-", raw)


def scan_corpus(root: Path | str) -> list[CorpusImage]:
    """Enumerate a corpus directory deterministically (sorted by class, stem)."""
    root = Path(root)
    if not root.is_dir():
        raise UsegmixError(f"corpus directory {root} does not exist")
    images: list[CorpusImage] = []
    used: set[str] = set()
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        class_label = sanitize_id(class_dir.name)
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() not in _CORPUS_SUFFIXES:
                continue
            image_id = f"{class_label}__{sanitize_id(path.stem)}"
            n = 2
            while image_id in used:
                image_id = f"{class_label}__{sanitize_id(path.stem)}-{n}"
                n += 1
            used.add(image_id)
            images.append(CorpusImage(image_id, class_label, path))
    if not images:
        raise UsegmixError(f"corpus directory {root} holds no images")
    return images


class CorpusLoader:
    """Decode-on-demand image cache keyed by corpus id."""

    def __init__(self, images: list[CorpusImage]):
        self._by_id = {ci.image_id: ci for ci in images}
        self._cache: dict[str, ImageRGB] = {}

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def get(self, image_id: str) -> ImageRGB:
        if image_id not in self._cache:
            ci = self._by_id[image_id]
            self._cache[image_id] = decode_image(ci.path.read_bytes())
        return self._cache[image_id]


def phase1_index(
    corpus_dir: Path | str,
    out_dir: Path | str,
    backend: SegmenterBackend,
    seed: int,
    slic_cfg: SlicConfig | None = None,
    consensus_cfg: ConsensusConfig | None = None,
    descriptor_cfg: DescriptorConfig | None = None,
    pca_dim: int = 128,
    external_features: Path | str | None = None,
) -> dict[str, Path]:
    """Index a corpus into per-class pool directories. Returns class -> path."""
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    entries = scan_corpus(corpus_dir)
    decoded: list[tuple[ImageRGB, str]] = []
    ids: list[str] = []
    source_paths: dict[str, str] = {}
    for ci in entries:
        try:
            img = decode_image(ci.path.read_bytes())
        except UsegmixError as exc:
            log.warning("skipping unreadable image %s: %s", ci.path, exc)
            continue
        decoded.append((img, ci.class_label))
        ids.append(ci.image_id)
        source_paths[ci.image_id] = ci.path.relative_to(corpus_dir).as_posix()

    pools = build_pool(
        decoded,
        backend,
        seed,
        slic_cfg=slic_cfg,
        consensus_cfg=consensus_cfg,
        descriptor_cfg=descriptor_cfg,
        pca_dim=pca_dim,
        image_ids=ids,
        external_features=external_features,
        source_root=str(corpus_dir),
        source_paths=source_paths,
    )
    written: dict[str, Path] = {}
    for class_label, pool in sorted(pools.items()):
        pool_dir = out_dir / class_label
        save_pool(pool, pool_dir)
        written[class_label] = pool_dir
    return written


def load_pools(pools_dir: Path | str) -> dict[str, SegmentPool]:
    """Load every class pool under a directory."""
    pools_dir = Path(pools_dir)
    pools: dict[str, SegmentPool] = {}
    for child in sorted(p for p in pools_dir.iterdir() if p.is_dir()):
        if (child / "manifest.json").is_file():
            pool = load_pool(child)
            pools[pool.class_label] = pool
    if not pools:
        raise UsegmixError(f"no pools found under {pools_dir}")
    return pools


def new_area_ratio(plans: list[BlendPlan], width: int, height: int) -> float:
    """Fraction of the image covered by replacement and inpainting pixels."""
    if not plans:
        return 0.0
    union = np.zeros((height, width), dtype=bool)
    for plan in plans:
        union |= plan.warped_replacement_mask.bits
        union |= plan.inpaint_mask.bits
    return float(union.sum()) / float(width * height)


@dataclass
class AugmentOutcome:
    composite: ImageRGB
    blended: ImageRGB
    plans: list[BlendPlan]
    changed_mask: BitMask
    record: SynthesisRecord


def _augment_core(
    img: ImageRGB,
    image_id: str,
    targets: list,
    pool: SegmentPool,
    source_images,
    cfg: Phase2Config,
    blend_cfg: BlendConfig,
    rng: np.random.Generator,
    seed: int,
    inpaint_backend=None,
) -> AugmentOutcome:
    if pool.size < 2:
        raise UsegmixError(f"pool {pool.class_label!r} needs at least 2 entries")
    if not targets:
        raise UsegmixError(f"image {image_id!r} has no target segments in pool {pool.class_label!r}")
    if cfg.reset_weights_per_image:
        for e in pool.entries:
            e.weight = 1.0

    remaining = list(targets)
    plans: list[BlendPlan] = []
    replaced: list[str] = []
    replacements: list[str] = []
    composite = img
    ratio = 0.0
    attempts = 0
    while ratio < cfg.ratio_min:
        if not remaining:
            raise UsegmixError(
                f"image {image_id!r}: target segments exhausted at ratio {ratio:.3f} < {cfg.ratio_min}"
            )
        if attempts >= cfg.max_attempts:
            raise UsegmixError(
                f"image {image_id!r}: ratio {ratio:.3f} below {cfg.ratio_min} after {attempts} attempts"
            )
        attempts += 1
        target_entry = remaining.pop(int(rng.integers(len(remaining))))
        target = TargetSelection(target_entry.anchor, target_entry.feature)
        dist = replacement_distribution(target, pool)
        r_idx = sample_replacement(dist, rng)
        penalize(pool, r_idx)
        repl_entry = pool.entries[r_idx]
        if repl_entry.anchor.source_image not in source_images:
            raise UsegmixError(
                f"replacement source image {repl_entry.anchor.source_image!r} is not available"
            )
        repl_img = source_images.get(repl_entry.anchor.source_image)
        plan = make_blend_plan(img, target.segment, repl_img, repl_entry.anchor, blend_cfg)
        composite = paste(composite, plan)
        plans.append(plan)
        replaced.append(target.segment.segment_id)
        replacements.append(repl_entry.anchor.segment_id)
        ratio = new_area_ratio(plans, img.width, img.height)

    if ratio > cfg.ratio_max:
        raise UsegmixError(f"image {image_id!r}: achieved ratio {ratio:.3f} exceeds {cfg.ratio_max}")

    union_warped = np.zeros((img.height, img.width), dtype=bool)
    union_inpaint = np.zeros((img.height, img.width), dtype=bool)
    union_target = np.zeros((img.height, img.width), dtype=bool)
    for plan in plans:
        union_warped |= plan.warped_replacement_mask.bits
        union_inpaint |= plan.inpaint_mask.bits
        union_target |= plan.target_mask.bits
    merged = BlendPlan(
        target_mask=BitMask(union_target),
        warped_replacement_mask=BitMask(union_warped),
        warped_replacement_pixels=composite,
        inpaint_mask=BitMask(union_inpaint),
        transform=plans[0].transform,
    )
    blended = inpaint(composite, merged, inpaint_backend, blend_cfg)
    record = SynthesisRecord(
        output_path="",
        source_image=image_id,
        class_label=pool.class_label,
        replaced_segment_ids=replaced,
        replacement_segment_ids=replacements,
        achieved_ratio=ratio,
        seed=seed,
    )
    return AugmentOutcome(composite, blended, plans, BitMask(union_warped | union_inpaint), record)


def phase2_augment(
    target: tuple[ImageRGB, str],
    image_id: str,
    pools: dict[str, SegmentPool],
    source_images,
    cfg: Phase2Config,
    rng: np.random.Generator,
    blend_cfg: BlendConfig | None = None,
    seed: int = 0,
    inpaint_backend=None,
) -> tuple[ImageRGB, SynthesisRecord]:
    """Synthesize one image by accumulating segment replacements.

    Target segments are this image's own pool entries; replacements are
    drawn by the penalized softmax. Plans accumulate until the new-area
    ratio reaches its floor, then one inpaint pass repairs the union
    artifact region.
    """
    img, class_label = target
    if class_label not in pools:
        raise UsegmixError(f"no pool for class {class_label!r}")
    pool = pools[class_label]
    outcome = _augment_core(
        img,
        image_id,
        [pool.entries[i] for i in pool.entries_from(image_id)],
        pool,
        source_images,
        cfg,
        blend_cfg or BlendConfig(),
        rng,
        seed,
        inpaint_backend,
    )
    return outcome.blended, outcome.record


def derive_seed(master_seed: int, class_label: str, seq: int) -> int:
    """Stable per-output seed so any single image reproduces in isolation."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(class_label.encode("utf-8")), seq])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(
    corpus_dir: Path | str,
    pools: dict[str, SegmentPool],
    out_dir: Path | str,
    cfg: Phase2Config,
    blend_cfg: BlendConfig | None = None,
    inpaint_backend=None,
    classes: list[str] | None = None,
) -> tuple[list[SynthesisRecord], int]:
    """Synthesize per_class_count images per class under out_dir.

    Outputs are ``<class>/<seq>_<source>.png`` plus a ``records.jsonl``
    provenance log. Individual failures are logged and skipped; the
    failure count is returned so callers can enforce a budget.
    """
    from .raster import encode_png

    out_dir = Path(out_dir)
    blend_cfg = blend_cfg or BlendConfig()
    images = scan_corpus(corpus_dir)
    loader = CorpusLoader(images)
    by_class: dict[str, list[CorpusImage]] = {}
    for ci in images:
        by_class.setdefault(ci.class_label, []).append(ci)

    wanted = classes if classes is not None else sorted(pools)
    for c in wanted:
        if c not in pools:
            raise UsegmixError(f"no pool for requested class {c!r}")
        if c not in by_class:
            raise UsegmixError(f"corpus has no images for class {c!r}")

    records: list[SynthesisRecord] = []
    failures = 0
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    with records_path.open("w", encoding="utf-8") as rec_file:
        for class_label in wanted:
            class_dir = out_dir / class_label
            class_dir.mkdir(parents=True, exist_ok=True)
            sources = by_class[class_label]
            for seq in range(cfg.per_class_count):
                src = sources[seq % len(sources)]
                seed = derive_seed(cfg.master_seed, class_label, seq)
                rng = np.random.default_rng(seed)
                try:
                    img = loader.get(src.image_id)
                    blended, record = phase2_augment(
                        (img, class_label),
                        src.image_id,
                        pools,
                        loader,
                        cfg,
                        rng,
                        blend_cfg,
                        seed,
                        inpaint_backend,
                    )
                except UsegmixError as exc:
                    failures += 1
                    log.warning("synthesis failed for %s seq %d: %s", src.image_id, seq, exc)
                    continue
                out_path = class_dir / f"{seq:03d}_{src.image_id}.png"
                out_path.write_bytes(encode_png(blended))
                record.output_path = str(out_path.relative_to(out_dir))
                records.append(record)
                rec_file.write(record.to_json() + "\n")
    return records, failures
