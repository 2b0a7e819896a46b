import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usegmix.errors import DecodeError
from usegmix.raster import (
    AffineTransform2D,
    BBox,
    BitMask,
    ImageRGB,
    decode_image,
    decode_mask,
    dilate,
    encode_png,
    erode,
    mask_bbox,
    mask_iou,
    warp_affine,
)


def random_image(rng, w=16, h=16):
    return ImageRGB(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def random_mask(rng, w=16, h=16, p=0.4):
    return BitMask(rng.random((h, w)) < p)


class TestCodec:
    def test_decode_1x1_white(self):
        img = ImageRGB(np.full((1, 1, 3), 255, dtype=np.uint8))
        out = decode_image(encode_png(img))
        assert out.width == 1 and out.height == 1
        assert out.pixels[0, 0].tolist() == [255, 255, 255]

    def test_truncated_header_raises_with_offset(self):
        with pytest.raises(DecodeError, match="byte"):
            decode_image(b"\x89PNG\r\n")

    def test_garbage_signature(self):
        with pytest.raises(DecodeError):
            decode_image(b"definitely not an image")

    def test_truncated_chunk(self):
        full = encode_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8)))
        with pytest.raises(DecodeError, match="byte"):
            decode_image(full[:20])

    def test_corrupted_crc(self):
        full = bytearray(encode_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8))))
        full[-2] ^= 0xFF  # inside IEND crc
        with pytest.raises(DecodeError, match="CRC"):
            decode_image(bytes(full))

    def test_roundtrip_2x2(self):
        img = ImageRGB(np.arange(12, dtype=np.uint8).reshape(2, 2, 3) * 20)
        assert decode_image(encode_png(img)) == img

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        img = random_image(rng)
        assert decode_image(encode_png(img)) == img

    def test_mask_roundtrip(self):
        rng = np.random.default_rng(1)
        m = random_mask(rng)
        assert decode_mask(encode_png(m)) == m

    def test_empty_and_full_mask_png(self):
        empty = BitMask.zeros(3, 2)
        full = BitMask.full(3, 2)
        for m, value in ((empty, 0), (full, 255)):
            arr = np.asarray(__import__("PIL.Image", fromlist=["Image"]).open(
                __import__("io").BytesIO(encode_png(m))
            ))
            assert (arr == value).all()

    def test_jpeg_decode_optional(self):
        import io

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(np.full((8, 8, 3), 90, dtype=np.uint8)).save(buf, format="JPEG")
        out = decode_image(buf.getvalue())
        assert (out.width, out.height) == (8, 8)


class TestMaskOps:
    def test_iou_identity(self):
        rng = np.random.default_rng(2)
        m = random_mask(rng)
        assert mask_iou(m, m) == 1.0

    def test_iou_disjoint(self):
        a = BitMask.zeros(4, 4).bits.copy()
        b = a.copy()
        a[0, 0] = True
        b[3, 3] = True
        assert mask_iou(BitMask(a), BitMask(b)) == 0.0

    def test_iou_counted(self):
        a = np.zeros((3, 3), dtype=bool)
        b = np.zeros((3, 3), dtype=bool)
        a[0, 0] = a[1, 0] = True  # {(0,0),(0,1)} as (x,y)
        b[1, 0] = b[2, 0] = True  # {(0,1),(0,2)}
        assert mask_iou(BitMask(a), BitMask(b)) == pytest.approx(1 / 3)

    def test_iou_both_empty(self):
        assert mask_iou(BitMask.zeros(2, 2), BitMask.zeros(2, 2)) == 0.0

    def test_iou_dim_mismatch(self):
        with pytest.raises(ValueError):
            mask_iou(BitMask.zeros(2, 2), BitMask.zeros(3, 2))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_iou_symmetric_bounded(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_mask(rng, 8, 8), random_mask(rng, 8, 8)
        ab, ba = mask_iou(a, b), mask_iou(b, a)
        assert ab == ba
        assert 0.0 <= ab <= 1.0

    def test_bbox_single_pixel(self):
        bits = np.zeros((6, 6), dtype=bool)
        bits[4, 3] = True
        assert mask_bbox(BitMask(bits)) == BBox(3, 4, 3, 4)

    def test_bbox_full(self):
        assert mask_bbox(BitMask.full(7, 5)) == BBox(0, 0, 6, 4)

    def test_bbox_matches_scan_oracle(self):
        rng = np.random.default_rng(3)
        m = random_mask(rng, 12, 9, p=0.1)
        box = mask_bbox(m)
        xs, ys = [], []
        for y in range(m.height):  # brute-force scan oracle
            for x in range(m.width):
                if m.bits[y, x]:
                    xs.append(x)
                    ys.append(y)
        assert (box.x0, box.y0, box.x1, box.y1) == (min(xs), min(ys), max(xs), max(ys))

    def test_bbox_empty_raises(self):
        with pytest.raises(ValueError):
            mask_bbox(BitMask.zeros(3, 3))


class TestMorphology:
    def test_dilate_zero_identity(self):
        rng = np.random.default_rng(4)
        m = random_mask(rng)
        assert dilate(m, 0) == m

    def test_dilate_center_pixel(self):
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        out = dilate(BitMask(bits), 1)
        expect = np.zeros((5, 5), dtype=bool)
        expect[1:4, 1:4] = True
        assert np.array_equal(out.bits, expect)

    def test_dilate_radius2_equals_two_radius1(self):
        rng = np.random.default_rng(5)
        m = random_mask(rng, 20, 14, p=0.15)
        assert dilate(m, 2) == dilate(dilate(m, 1), 1)

    def test_erode_dual(self):
        rng = np.random.default_rng(6)
        m = random_mask(rng, 10, 10)
        assert np.array_equal(erode(m, 1).bits, ~dilate(BitMask(~m.bits), 1).bits)


class TestWarp:
    def test_identity_image(self):
        rng = np.random.default_rng(7)
        img = random_image(rng)
        out = warp_affine(img, AffineTransform2D.identity(), img.width, img.height)
        assert out == img

    def test_identity_mask(self):
        rng = np.random.default_rng(8)
        m = random_mask(rng)
        assert warp_affine(m, AffineTransform2D.identity(), m.width, m.height) == m

    def test_translate_mask(self):
        bits = np.zeros((6, 6), dtype=bool)
        bits[2, 1] = bits[3, 1] = True
        t = AffineTransform2D(1, 0, 1, 0, 1, 0)  # +1 column
        out = warp_affine(BitMask(bits), t, 6, 6)
        expect = np.zeros((6, 6), dtype=bool)
        expect[2, 2] = expect[3, 2] = True
        assert np.array_equal(out.bits, expect)

    def test_uniform_scale_block_area(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[3:5, 3:5] = True
        t = AffineTransform2D(2, 0, -4, 0, 2, -4)  # 2x about pixel (4, 4)
        out = warp_affine(BitMask(bits), t, 8, 8)
        # analytically: the 2x2 block doubles to ~4x4 = 16 px
        assert 12 <= out.count <= 20

    def test_noninvertible_raises(self):
        with pytest.raises(ValueError):
            warp_affine(BitMask.full(4, 4), AffineTransform2D(1, 0, 0, 2, 0, 0), 4, 4)

    def test_out_of_range_black(self):
        img = ImageRGB(np.full((4, 4, 3), 200, dtype=np.uint8))
        t = AffineTransform2D(1, 0, 100, 0, 1, 100)  # far translation
        out = warp_affine(img, t, 4, 4)
        assert (out.pixels == 0).all()


class TestTransform:
    def test_inverse_composes_to_identity(self):
        t = AffineTransform2D(1.5, 0.2, 3.0, -0.1, 0.8, -2.0)
        inv = t.inverse()
        x, y = t.apply(2.0, 5.0)
        assert inv.apply(x, y) == pytest.approx((2.0, 5.0))

    def test_singular_inverse_raises(self):
        with pytest.raises(ValueError):
            AffineTransform2D(1, 2, 0, 2, 4, 0).inverse()
