"""Cross-component checks: the primary pipeline speaking to the
TypeScript reference backends over the wire protocol.

Skipped cleanly when the backend package has not been built
(``cd backend && npm install && npm run build``).
"""

import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from toys import toy_corpus

from usegmix.backend_protocol import spawn_backend
from usegmix.blend import BlendConfig
from usegmix.pipeline import Phase2Config, _augment_core
from usegmix.pool import build_pool
from usegmix.raster import BitMask, ImageRGB, Point
from usegmix.segmenter import FloodFillBackend

BACKEND_MAIN = Path(__file__).parent.parent / "backend" / "dist" / "src" / "main.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not BACKEND_MAIN.is_file(),
    reason="TypeScript backend not built",
)


def backend_cmd(mode: str) -> list[str]:
    return ["node", str(BACKEND_MAIN), mode]


class TestEchoConformance:
    def test_hello_segment_inpaint_roundtrip(self):
        rng = np.random.default_rng(0)
        img = ImageRGB(rng.integers(0, 256, (10, 12, 3), dtype=np.uint8))
        with spawn_backend(backend_cmd("echo")) as h:
            assert h.name == "echo"
            assert h.capabilities == {"segment", "inpaint"}
            mask = h.segment(img, Point(3, 4))
            assert mask.count == 120
            out = h.inpaint(img, BitMask.full(12, 10), steps=500)
            assert out == img

    def test_malformed_request_keeps_process_alive(self):
        with spawn_backend(backend_cmd("echo")) as h:
            h._proc.stdin.write("not json at all\n")
            h._proc.stdin.flush()
            reply = h._read_reply()
            assert "error" in reply
            # process must still answer real requests
            assert h.request({"op": "hello"})["name"] == "echo"

    def test_meanfill_respects_mask(self):
        rng = np.random.default_rng(1)
        img = ImageRGB(rng.integers(0, 256, (12, 12, 3), dtype=np.uint8))
        bits = np.zeros((12, 12), dtype=bool)
        bits[4:8, 4:8] = True
        with spawn_backend(backend_cmd("meanfill")) as h:
            out = h.inpaint(img, BitMask(bits))
        assert np.array_equal(out.pixels[~bits], img.pixels[~bits])


class TestPipelineWithEchoInpainter:
    def test_output_equals_paste_composite(self):
        corpus, ids = toy_corpus(n_per_class=2, size=96)
        stripes = [(c, i) for c, i in zip(corpus, ids) if c[1] == "stripes"]
        pool = build_pool(
            [c for c, _ in stripes], FloodFillBackend(), 9, image_ids=[i for _, i in stripes]
        )["stripes"]
        sources = {i: c[0] for c, i in stripes}

        class Loader:
            def __contains__(self, k):
                return k in sources

            def get(self, k):
                return sources[k]

        img = stripes[0][0][0]
        with spawn_backend(backend_cmd("echo")) as h:
            outcome = _augment_core(
                img,
                stripes[0][1],
                [pool.entries[i] for i in pool.entries_from(stripes[0][1])],
                pool,
                Loader(),
                Phase2Config(),
                BlendConfig(),
                np.random.default_rng(3),
                3,
                inpaint_backend=h,
            )
        # echo inpainter returns its input, so the blended image must be
        # exactly the paste composite
        assert outcome.blended == outcome.composite

    def test_adapter_without_weights_has_no_capabilities(self):
        with spawn_backend(backend_cmd("adapter")) as h:
            assert h.name == "model-adapter"
            assert h.capabilities == frozenset()
