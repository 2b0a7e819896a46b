"""Command-line surface.

Subcommands: ``index`` (Phase 1, corpus -> pools), ``augment`` (Phase 2,
pools -> synthetic dataset), ``pool-stats``, ``preview`` (triptych of
source / composite / blended for one image), ``selfcheck``. Configuration
is a single JSON file with per-module sections; flags override config,
config overrides defaults. ``USEGMIX_BACKEND`` names an external backend
command, ``USEGMIX_SEED`` the master seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend_protocol import spawn_backend
from .blend import BlendConfig
from .consensus import ConsensusConfig
from .errors import UsegmixError
from .features import DescriptorConfig
from .pipeline import (
    Phase2Config,
    _augment_core,
    generate_dataset,
    load_pools,
    phase1_index,
    sanitize_id,
)
from .pool import save_pool
from .raster import ImageRGB, decode_image, encode_png
from .segmenter import ExternalBackend, FloodFillBackend, FloodFillConfig
from .superpixel import SlicConfig

_SECTIONS = {
    "slic": SlicConfig,
    "consensus": ConsensusConfig,
    "descriptor": DescriptorConfig,
    "floodfill": FloodFillConfig,
    "blend": BlendConfig,
    "phase2": Phase2Config,
}
_TOP_KEYS = set(_SECTIONS) | {"backend_cmd", "pca_dim"}


@dataclass
class RunConfig:
    slic: SlicConfig = field(default_factory=SlicConfig)
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    floodfill: FloodFillConfig = field(default_factory=FloodFillConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    phase2: Phase2Config = field(default_factory=Phase2Config)
    backend_cmd: str | None = None
    pca_dim: int = 128

    def to_json(self) -> str:
        doc = {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}
        doc["backend_cmd"] = self.backend_cmd
        doc["pca_dim"] = self.pca_dim
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _build_section(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise UsegmixError(f"unknown config key(s) in {where}: {sorted(unknown)}")
    return cls(**data)


def load_config(path: Path | str | None) -> RunConfig:
    """Parse a config file, rejecting unknown keys at every level."""
    if path is None:
        return RunConfig()
    doc = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(doc, dict):
        raise UsegmixError(f"{path}: config root must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise UsegmixError(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build_section(cls, doc[name], name)
    if "backend_cmd" in doc:
        kwargs["backend_cmd"] = doc["backend_cmd"]
    if "pca_dim" in doc:
        kwargs["pca_dim"] = int(doc["pca_dim"])
    return RunConfig(**kwargs)


def _resolve_seed(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("USEGMIX_SEED")
    if env is not None:
        return int(env)
    return cfg.phase2.master_seed


def _make_segmenter(cfg: RunConfig):
    cmd = os.environ.get("USEGMIX_BACKEND") or cfg.backend_cmd
    if cmd:
        handle = spawn_backend(cmd)
        return ExternalBackend(handle), handle
    return FloodFillBackend(cfg.floodfill), None


def _cmd_index(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    backend, handle = _make_segmenter(cfg)
    try:
        written = phase1_index(
            args.corpus,
            args.out,
            backend,
            seed,
            slic_cfg=cfg.slic,
            consensus_cfg=cfg.consensus,
            descriptor_cfg=cfg.descriptor,
            pca_dim=cfg.pca_dim,
            external_features=args.features,
        )
    finally:
        if handle is not None:
            handle.close()
    for class_label, path in sorted(written.items()):
        print(f"{class_label}: {path}")
    return 0


def _cmd_augment(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    phase2 = dataclasses.replace(cfg.phase2, master_seed=seed)
    if args.count is not None:
        phase2 = dataclasses.replace(phase2, per_class_count=args.count)
    pools = load_pools(args.pools)

    inpaint_backend = None
    handle = None
    if phase2.inpaint_backend == "external":
        cmd = os.environ.get("USEGMIX_BACKEND") or cfg.backend_cmd
        if not cmd:
            raise UsegmixError("inpaint_backend is 'external' but no backend command is configured")
        handle = spawn_backend(cmd)
        inpaint_backend = handle
    try:
        records, failures = generate_dataset(
            args.corpus, pools, args.out, phase2, cfg.blend, inpaint_backend
        )
    finally:
        if handle is not None:
            handle.close()
    for class_label, pool in pools.items():
        save_pool(pool, Path(args.pools) / class_label)  # persist penalty weights
    total = len(records) + failures
    print(f"wrote {len(records)} images ({failures} failures) to {args.out}")
    if total and failures > 0.10 * total:
        print(f"error: failure budget exceeded ({failures}/{total})", file=sys.stderr)
        return 1
    return 0


def _cmd_pool_stats(args) -> int:
    pools = load_pools(args.pools)
    for class_label in sorted(pools):
        pool = pools[class_label]
        weights = [e.weight for e in pool.entries]
        print(
            f"{class_label}: entries={pool.size} dim={pool.pca.output_dim} "
            f"source={pool.feature_source} weight_sum={sum(weights):g}"
        )
    return 0


def _cmd_preview(args) -> int:
    from .consensus import anchors_for_image
    from .features import builtin_descriptor, crop_resize, pca_transform
    from .pipeline import CorpusImage, CorpusLoader
    from .pool import PoolEntry
    from .superpixel import slic

    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    pools = load_pools(args.pools)
    if args.class_label:
        if args.class_label not in pools:
            raise UsegmixError(f"no pool for class {args.class_label!r}")
        class_label = args.class_label
    elif len(pools) == 1:
        class_label = next(iter(pools))
    else:
        raise UsegmixError(f"--class required; pools hold {sorted(pools)}")
    pool = pools[class_label]

    img = decode_image(Path(args.image).read_bytes())
    image_id = f"preview__{sanitize_id(Path(args.image).stem)}"
    backend, handle = _make_segmenter(cfg)
    try:
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        sp = slic(img, cfg.slic, seed)
        anchors = anchors_for_image(
            img, sp, backend, cfg.consensus, rng, image_id=image_id, class_label=class_label
        )
    finally:
        if handle is not None:
            handle.close()
    targets = [
        PoolEntry(
            a,
            pca_transform(pool.pca, builtin_descriptor(crop_resize(img, a.mask), cfg.descriptor)).astype(
                np.float32
            ),
            1.0,
        )
        for a in anchors
    ]

    root = Path(pool.source_root)
    sources = CorpusLoader(
        [CorpusImage(iid, class_label, root / p) for iid, p in pool.source_paths.items()]
    )
    outcome = _augment_core(
        img,
        image_id,
        targets,
        pool,
        sources,
        cfg.phase2,
        cfg.blend,
        np.random.default_rng(np.random.SeedSequence([seed, 1])),
        seed,
    )
    sep = np.full((img.height, 2, 3), 255, dtype=np.uint8)
    strip = np.concatenate(
        [img.pixels, sep, outcome.composite.pixels, sep, outcome.blended.pixels], axis=1
    )
    Path(args.out).write_bytes(encode_png(ImageRGB(strip)))
    print(f"wrote {args.out} (ratio {outcome.record.achieved_ratio:.3f})")
    return 0


def _cmd_selfcheck(_args) -> int:
    from decimal import Decimal, getcontext

    from .blend import solve_poisson_region
    from .raster import BitMask, decode_image as dec

    checks: list[tuple[str, bool]] = []

    # selection-rule fixture against a high-precision softmax
    getcontext().prec = 50
    d = [Decimal(0), Decimal(2).ln()]
    exps = [(-x).exp() for x in d]
    total = sum(exps)
    from .consensus import AnchorSegment
    from .pool import PoolEntry, SegmentPool
    from .features import PCAModel
    from .sampler import TargetSelection, replacement_distribution

    one = BitMask(np.ones((1, 1), dtype=bool))
    model = PCAModel(np.zeros(1), np.eye(1), np.ones(1))
    entries = [
        PoolEntry(AnchorSegment(one, "a", "c", "e0"), np.array([0.0], dtype=np.float32), 1.0),
        PoolEntry(AnchorSegment(one, "a", "c", "e1"), np.array([np.log(2.0)], dtype=np.float32), 1.0),
    ]
    pool = SegmentPool("c", entries, model)
    target = TargetSelection(AnchorSegment(one, "z", "c", "t"), np.array([0.0]))
    probs = replacement_distribution(target, pool).probs
    expect = [float(e / total) for e in exps]
    checks.append(("selection-two-entry", bool(np.allclose(probs, expect, atol=1e-9))))

    # single-unknown harmonic fill is the neighbor average
    vals = np.array([[0, 10.0, 0], [40.0, 0, 20.0], [0, 30.0, 0]])
    unk = np.zeros((3, 3), dtype=bool)
    unk[1, 1] = True
    solved = solve_poisson_region(vals, unk)
    checks.append(("harmonic-stencil", abs(solved[1, 1] - 25.0) < 1e-9))

    # PNG round trip
    rng = np.random.default_rng(7)
    img = ImageRGB(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
    checks.append(("png-roundtrip", dec(encode_png(img)) == img))

    # SLIC totality on a uniform image
    from .superpixel import SlicConfig as SC, slic as run_slic

    uni = ImageRGB(np.full((32, 32, 3), 128, dtype=np.uint8))
    sp = run_slic(uni, SC(n_s=4), 0)
    checks.append(("slic-total", bool((sp.labels >= 0).all() and sp.n_regions >= 1)))

    ok = True
    for name, passed in checks:
        print(f"{'ok' if passed else 'FAIL'} {name}")
        ok = ok and passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usegmix", description="Segment-pool image augmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build per-class segment pools from a corpus")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--features", default=None, help="external feature file to ingest")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("augment", help="synthesize new images from pools")
    p.add_argument("corpus")
    p.add_argument("--pools", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=None, help="override per-class synthesis count")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("pool-stats", help="print pool sizes and sources")
    p.add_argument("pools")
    p.set_defaults(func=_cmd_pool_stats)

    p = sub.add_parser("preview", help="triptych: source / composite / blended")
    p.add_argument("image")
    p.add_argument("--pools", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--class", dest="class_label", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("selfcheck", help="run builtin oracles")
    p.set_defaults(func=_cmd_selfcheck)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsegmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
