import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from archeval.errors import ImageFormatError, ImageReadError
from archeval.imaging import (GrayImage, PreprocessConfig, RasterImage, load_image, preprocess, quality_gate,
                              resize_bilinear, to_grayscale)


def rgb(w, h, value=(0, 0, 0)):
    return RasterImage(np.broadcast_to(np.array(value, np.uint8), (h, w, 3)))


class TestLoadImage:
    def test_rgb_png_round_trip(self, tmp_path):
        arr = np.random.default_rng(0).integers(0, 256, (400, 400, 3), dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / "a.png")
        img = load_image(tmp_path / "a.png")
        assert (img.width, img.height, img.channels) == (400, 400, 3)
        assert np.array_equal(img.pixels, arr)

    def test_gray_png(self, tmp_path):
        Image.new("L", (350, 350), 128).save(tmp_path / "g.png")
        img = load_image(tmp_path / "g.png")
        assert (img.width, img.height, img.channels) == (350, 350, 1)

    def test_jpeg(self, tmp_path):
        Image.new("RGB", (120, 80), (10, 200, 30)).save(tmp_path / "a.jpg")
        img = load_image(tmp_path / "a.jpg")
        assert (img.width, img.height, img.channels) == (120, 80, 3)

    def test_rgba_composited_on_white(self, tmp_path):
        Image.new("RGBA", (20, 20), (0, 0, 0, 0)).save(tmp_path / "t.png")
        img = load_image(tmp_path / "t.png")
        assert img.channels == 3 and img.pixels.min() == 255

    def test_zero_byte_file(self, tmp_path):
        (tmp_path / "empty.png").write_bytes(b"")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "empty.png")

    def test_garbage_bytes(self, tmp_path):
        (tmp_path / "junk.png").write_bytes(b"not an image at all")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "junk.png")

    def test_other_container_rejected(self, tmp_path):
        Image.new("RGB", (20, 20)).save(tmp_path / "a.bmp")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "a.bmp")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageReadError):
            load_image(tmp_path / "nope.png")


class TestRasterInvariants:
    def test_buffer_length(self):
        img = rgb(7, 5)
        assert img.pixels.size == 7 * 5 * 3

    def test_bad_channel_count(self):
        with pytest.raises(ImageFormatError):
            RasterImage(np.zeros((4, 4, 4), np.uint8))

    def test_immutable(self):
        img = rgb(4, 4)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1


class TestQualityGate:
    def test_threshold_accepts(self):
        assert quality_gate(rgb(350, 350)).accepted

    def test_reject_names_short_side(self):
        d = quality_gate(rgb(200, 480))
        assert not d.accepted
        assert "200" in d.reason and "width" in d.reason

    def test_override_accepts_with_warning(self):
        d = quality_gate(rgb(200, 480), PreprocessConfig(gate_override=True))
        assert d.accepted and d.warning and "200" in d.warning

    def test_one_pixel_short(self):
        assert not quality_gate(rgb(349, 1000)).accepted

    @given(st.integers(1, 800), st.integers(1, 800))
    def test_pure_function_of_dimensions(self, w, h):
        d = quality_gate(RasterImage(np.zeros((h, w, 1), np.uint8)))
        assert d.accepted == (min(w, h) >= 350)


class TestGrayscale:
    def test_white(self):
        assert np.all(to_grayscale(rgb(3, 3, (255, 255, 255))).pixels == 1.0)

    def test_black(self):
        assert np.all(to_grayscale(rgb(3, 3, (0, 0, 0))).pixels == 0.0)

    def test_pure_red(self):
        assert to_grayscale(rgb(1, 1, (255, 0, 0))).pixels[0, 0] == pytest.approx(0.299, abs=1e-6)

    def test_single_channel_scaled(self):
        g = to_grayscale(RasterImage(np.array([[0, 51, 255]], np.uint8)))
        np.testing.assert_allclose(g.pixels, [[0.0, 0.2, 1.0]])

    @settings(max_examples=50)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]))))
    def test_bounded(self, px):
        g = to_grayscale(RasterImage(px)).pixels
        assert g.min() >= 0.0 and g.max() <= 1.0


class TestPreprocess:
    def test_working_resolution(self):
        img = RasterImage(np.random.default_rng(1).integers(0, 256, (300, 400, 3), dtype=np.uint8))
        out = preprocess(img)
        assert (out.width, out.height) == (100, 100)

    def test_identity_at_working_size(self):
        px = np.random.default_rng(2).integers(0, 256, (100, 100), dtype=np.uint8)
        out = preprocess(RasterImage(px), PreprocessConfig(denoise_sigma=0))
        np.testing.assert_allclose(out.pixels, px / 255.0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 255), st.integers(16, 500), st.integers(16, 500))
    def test_constant_preserved(self, v, w, h):
        out = preprocess(RasterImage(np.full((h, w), v, np.uint8)))
        np.testing.assert_allclose(out.pixels, v / 255.0, atol=1e-6)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(16, 64), st.integers(16, 64), st.integers(20, 300), st.integers(20, 300))
    def test_output_size_matches_config(self, ww, wh, w, h):
        img = RasterImage(np.zeros((h, w, 3), np.uint8))
        out = preprocess(img, PreprocessConfig(working_width=ww, working_height=wh))
        assert out.pixels.shape == (wh, ww)

    def test_downsampling_averages(self):
        # 2x shrink of a checkerboard of 2x2 blocks should be flat grey
        board = np.kron(np.indices((50, 50)).sum(0) % 2, np.ones((2, 2)))
        out = resize_bilinear(board, 50, 50)
        assert out.std() < 0.3

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            PreprocessConfig(working_width=8)
        with pytest.raises(ValueError):
            PreprocessConfig(denoise_sigma=-1)


def test_gray_image_rejects_out_of_range():
    with pytest.raises(ImageFormatError):
        GrayImage(np.full((4, 4), 1.5))
