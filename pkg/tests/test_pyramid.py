import math

import numpy as np
import pytest

from uzoom import fixtures, imageio, mosaic, pyramid
from uzoom.errors import CorruptStream, MissingTile


class TestDescriptorFormulas:
    def test_one_pixel_image(self, tmp_path):
        img = np.full((1, 1, 3), 0.5, np.float32)
        dzi = pyramid.build_pyramid(img, tmp_path, name="tiny")
        desc = pyramid.read_descriptor(dzi)
        assert desc.max_level == 0
        assert desc.level_dims(0) == (1, 1)
        assert (tmp_path / "tiny_files" / "0" / "0_0.png").exists()

    def test_4096_descriptor(self):
        desc = pyramid.PyramidDescriptor(4096, 4096, 256, 1, "png")
        assert desc.max_level == 12
        assert desc.tile_counts(12) == (16, 16)

    def test_non_square_dims(self):
        desc = pyramid.PyramidDescriptor(1000, 600, 256, 1, "png")
        assert desc.max_level == 10
        w, h = desc.level_dims(10)
        assert (w, h) == (1000, 600)
        w9, h9 = desc.level_dims(9)
        assert (w9, h9) == (500, 300)
        assert desc.level_dims(0) == (1, 1)

    def test_halving_with_ceiling_property(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            w = int(rng.integers(1, 5000))
            h = int(rng.integers(1, 5000))
            desc = pyramid.PyramidDescriptor(w, h, 256, 1, "png")
            assert desc.max_level == max(0, math.ceil(math.log2(max(w, h))))
            pw, ph = desc.level_dims(desc.max_level)
            assert (pw, ph) == (w, h)
            for level in range(desc.max_level - 1, -1, -1):
                cw, ch = desc.level_dims(level)
                assert cw == math.ceil(pw / 2) and ch == math.ceil(ph / 2)
                cols, rows = desc.tile_counts(level)
                assert cols == math.ceil(cw / 256) and rows == math.ceil(ch / 256)
                pw, ph = cw, ch
            assert desc.level_dims(0) == (1, 1)


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    img = fixtures.noise_texture_rgb(300, 473, seed=9)
    out = tmp_path_factory.mktemp("pyr")
    dzi = pyramid.build_pyramid(img, out, name="p", tile_size=128, overlap=1)
    return img, dzi


class TestRoundTrip:
    def test_top_level_bit_equal(self, built):
        img, dzi = built
        top = pyramid.reassemble_level(dzi, pyramid.read_descriptor(dzi).max_level)
        assert np.array_equal(top, imageio.from_u8(imageio.to_u8(img)))

    def test_next_level_is_box_downsample(self, built):
        img, dzi = built
        desc = pyramid.read_descriptor(dzi)
        lvl = pyramid.reassemble_level(dzi, desc.max_level - 1)
        oracle = pyramid._box2_rows(
            imageio.from_u8(imageio.to_u8(img)), desc.level_dims(desc.max_level - 1)[0]
        )
        assert np.abs(lvl - oracle).max() <= 1 / 255 + 1e-6

    def test_missing_level(self, built):
        _, dzi = built
        with pytest.raises(MissingTile):
            pyramid.reassemble_level(dzi, 99)

    def test_missing_tile(self, built, tmp_path):
        img, _ = built
        dzi = pyramid.build_pyramid(img[:200, :200], tmp_path, name="q", tile_size=64)
        desc = pyramid.read_descriptor(dzi)
        victim = tmp_path / "q_files" / str(desc.max_level) / "1_1.png"
        victim.unlink()
        with pytest.raises(MissingTile):
            pyramid.reassemble_level(dzi, desc.max_level)


class TestStreamSource:
    def test_build_from_canvas_store(self, tmp_path, rng):
        img = rng.random((130, 97, 3)).astype(np.float32)
        store = mosaic.CanvasStore(tmp_path / "c", 97, 130, 32, "u8")
        for r in range(0, 130, 32):
            store.write_band(img[r : r + 32])
        store.close()
        dzi = pyramid.build_pyramid(tmp_path / "c", tmp_path, name="s", tile_size=64)
        top = pyramid.reassemble_level(dzi, pyramid.read_descriptor(dzi).max_level)
        assert np.array_equal(top, imageio.from_u8(imageio.to_u8(img)))

    def test_descriptor_is_commit_point(self, tmp_path):
        img = np.full((64, 64, 3), 0.5, np.float32)
        dzi = pyramid.build_pyramid(img, tmp_path, name="c")
        desc = pyramid.read_descriptor(dzi)
        for level in range(desc.max_level + 1):
            cols, rows = desc.tile_counts(level)
            for col in range(cols):
                for row in range(rows):
                    assert (
                        tmp_path / "c_files" / str(level) / f"{col}_{row}.png"
                    ).exists()


class TestDescriptorXml:
    def test_exact_layout(self, tmp_path):
        img = np.zeros((10, 20, 3), np.float32)
        dzi = pyramid.build_pyramid(img, tmp_path, name="x", tile_size=256, overlap=1)
        text = dzi.read_text()
        assert 'TileSize="256"' in text
        assert 'Overlap="1"' in text
        assert 'Format="png"' in text
        assert 'xmlns="http://schemas.microsoft.com/deepzoom/2008"' in text
        assert '<Size Width="20" Height="10"/>' in text

    def test_malformed_descriptor(self, tmp_path):
        bad = tmp_path / "bad.dzi"
        bad.write_text("<Image><oops></Image>")
        with pytest.raises(CorruptStream):
            pyramid.read_descriptor(bad)

    def test_jpeg_format(self, tmp_path):
        img = fixtures.noise_texture_rgb(100, 100, seed=1)
        dzi = pyramid.build_pyramid(img, tmp_path, name="j", fmt="jpeg")
        desc = pyramid.read_descriptor(dzi)
        assert desc.fmt == "jpeg"
        top = pyramid.reassemble_level(dzi, desc.max_level)
        assert np.abs(top - img).mean() < 0.05
