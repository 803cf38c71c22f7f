import numpy as np
import pytest

from uzoom import imageio
from uzoom.degrade import resample_to, round_half_up
from uzoom.enhance import (
    BicubicEnhancer,
    EnhanceRequest,
    ExemplarEnhancer,
    IterativeProxyEnhancer,
    build_exemplar_bank,
    _cover_origins,
)
from uzoom.errors import DimensionMismatch, EmptyBank, EmptyManifest

ZOOMS = (2.0, 4.0, 6.93, 8.0, 20.0, 30.0)


@pytest.fixture(scope="module")
def bank(manifest):
    return build_exemplar_bank(manifest, tile=16, stride=8)


def lap_var(img):
    luma = imageio.rgb_to_luma(img)
    lap = (
        -4 * luma[1:-1, 1:-1]
        + luma[:-2, 1:-1]
        + luma[2:, 1:-1]
        + luma[1:-1, :-2]
        + luma[1:-1, 2:]
    )
    return float(lap.var())


class TestRequest:
    def test_validation(self, rng):
        patch = rng.random((8, 8, 3)).astype(np.float32)
        with pytest.raises(ValueError):
            EnhanceRequest(lr_patch=patch, zoom=1.0)
        with pytest.raises(ValueError):
            EnhanceRequest(lr_patch=patch, zoom=2.0, step_index=3, step_count=2)

    def test_output_shape(self, rng):
        patch = rng.random((10, 17, 3)).astype(np.float32)
        req = EnhanceRequest(lr_patch=patch, zoom=6.93)
        assert req.output_shape == (round_half_up(10 * 6.93), round_half_up(17 * 6.93))


class TestDimensionContract:
    @pytest.mark.parametrize("zoom", ZOOMS)
    def test_bicubic_and_exemplar(self, zoom, bank, rng):
        for _ in range(4):
            h = int(rng.integers(4, 40))
            w = int(rng.integers(4, 40))
            patch = rng.random((h, w, 3)).astype(np.float32)
            req = EnhanceRequest(lr_patch=patch, zoom=zoom)
            expected = (round_half_up(h * zoom), round_half_up(w * zoom), 3)
            assert BicubicEnhancer().enhance(req).shape == expected
            assert ExemplarEnhancer(bank).enhance(req).shape == expected


class TestFlatInput:
    def test_all_builtins_flat(self, bank):
        flat = np.full((24, 24, 3), 0.42, dtype=np.float32)
        req = EnhanceRequest(lr_patch=flat, zoom=4.0)
        for enh in (
            BicubicEnhancer(),
            ExemplarEnhancer(bank),
            IterativeProxyEnhancer(ExemplarEnhancer(bank)),
        ):
            out = enh.enhance(req)
            assert np.abs(out - 0.42).mean() < 0.02


class TestBank:
    def test_size_formula(self, capture_set, tmp_path):
        from uzoom import dataset

        man = dataset.build_manifest(capture_set, tmp_path, 192, 1, seed=3)
        lr = imageio.load_image(man.root / man.pairs[0].lr_path)
        bank = build_exemplar_bank(man, tile=16, stride=16)
        lh, lw = lr.shape[:2]
        assert len(bank) <= (lh // 16) * (lw // 16)  # flat tiles may drop out
        assert len(bank) >= (lh // 16) * (lw // 16) - 2

    def test_empty_manifest(self, capture_set, tmp_path):
        from uzoom import dataset

        man = dataset.build_manifest(capture_set, tmp_path, 192, 0, seed=3)
        with pytest.raises(EmptyManifest):
            build_exemplar_bank(man)

    def test_duplicates_kept(self, capture_set, tmp_path):
        from uzoom import dataset
        import shutil, json

        man = dataset.build_manifest(capture_set, tmp_path, 192, 2, seed=4)
        # duplicate pair 0 into pair 1
        shutil.copy(man.root / man.pairs[0].hr_path, man.root / man.pairs[1].hr_path)
        shutil.copy(man.root / man.pairs[0].lr_path, man.root / man.pairs[1].lr_path)
        bank2 = build_exemplar_bank(man, tile=16, stride=16)
        man.pairs = man.pairs[:1]
        bank1 = build_exemplar_bank(man, tile=16, stride=16)
        assert len(bank2) == 2 * len(bank1)

    def test_empty_bank_rejected(self):
        with pytest.raises(EmptyBank):
            ExemplarEnhancer(None)


class TestExemplar:
    def test_zero_gain_equals_bicubic(self, bank, rng):
        patch = rng.random((32, 32, 3)).astype(np.float32)
        req = EnhanceRequest(lr_patch=patch, zoom=4.0)
        a = ExemplarEnhancer(bank, detail_gain=0.0).enhance(req)
        b = BicubicEnhancer().enhance(req)
        assert np.array_equal(a, b)

    def test_self_retrieval(self, manifest, bank):
        pair = manifest.pairs[0]
        hr = imageio.load_image(manifest.root / pair.hr_path)
        lr = imageio.load_image(manifest.root / pair.lr_path)
        zoom = hr.shape[0] / lr.shape[0]
        req = EnhanceRequest(lr_patch=lr, zoom=zoom)
        out = ExemplarEnhancer(bank).enhance(req)
        assert np.abs(out - hr).mean() < 0.05

    def test_detail_energy_exceeds_bicubic(self, manifest, bank):
        pair = manifest.pairs[1]
        lr = imageio.load_image(manifest.root / pair.lr_path)
        req = EnhanceRequest(lr_patch=lr, zoom=8.0)
        ex = ExemplarEnhancer(bank).enhance(req)
        bi = BicubicEnhancer().enhance(req)
        assert lap_var(ex) >= lap_var(bi)

    def test_determinism(self, bank, rng):
        patch = rng.random((40, 40, 3)).astype(np.float32)
        req = EnhanceRequest(lr_patch=patch, zoom=4.0)
        enh = ExemplarEnhancer(bank)
        assert np.array_equal(enh.enhance(req), enh.enhance(req))


class TestIterativeProxy:
    def test_single_step_returns_target(self, bank, rng):
        patch = rng.random((20, 20, 3)).astype(np.float32)
        target_enh = BicubicEnhancer()
        proxy = IterativeProxyEnhancer(target_enh)
        req = EnhanceRequest(lr_patch=patch, zoom=2.0, step_index=0, step_count=1)
        current = np.zeros((40, 40, 3), dtype=np.float32)
        out = proxy.enhance_step(req, current)
        assert np.array_equal(out, target_enh.enhance(req))

    def test_k_steps_reach_target(self, rng):
        patch = rng.random((16, 16, 3)).astype(np.float32)
        target_enh = BicubicEnhancer()
        proxy = IterativeProxyEnhancer(target_enh)
        K = 5
        current = np.zeros((32, 32, 3), dtype=np.float32)
        for k in range(K):
            req = EnhanceRequest(lr_patch=patch, zoom=2.0, step_index=k, step_count=K)
            current = proxy.enhance_step(req, current)
        assert np.abs(current - target_enh.enhance(req)).max() < 1e-6

    def test_dimension_mismatch(self, rng):
        patch = rng.random((16, 16, 3)).astype(np.float32)
        proxy = IterativeProxyEnhancer(BicubicEnhancer())
        req = EnhanceRequest(lr_patch=patch, zoom=2.0, step_index=0, step_count=2)
        with pytest.raises(DimensionMismatch):
            proxy.enhance_step(req, np.zeros((10, 10, 3), dtype=np.float32))

    def test_two_window_overlap_blend(self):
        """1-D analog: two windows with different targets; the shared region
        converges strictly between them."""

        class FixedTarget:
            descriptor = BicubicEnhancer.descriptor

            def __init__(self, values):
                self.values = values  # origin -> target value

            def enhance(self, request):
                h, w = request.output_shape
                return np.full(
                    (h, w, 3), self.values[request.window_origin], dtype=np.float32
                )

            def close(self):
                pass

        targets = {(0, 0): 0.2, (4, 0): 0.8}
        proxy = IterativeProxyEnhancer(FixedTarget(targets))
        K = 6
        # canvas 12 px wide, windows 8 px at x=0 and x=4, overlap = [4, 8)
        canvas = np.full((2, 12, 3), 0.5, dtype=np.float32)
        patch = np.zeros((1, 4, 3), dtype=np.float32)  # content irrelevant
        for k in range(K):
            acc = np.zeros_like(canvas)
            wsum = np.zeros((2, 12, 1), dtype=np.float32)
            for ox in (0, 4):
                req = EnhanceRequest(
                    lr_patch=patch, zoom=2.0, step_index=k, step_count=K,
                    window_origin=(ox, 0),
                )
                cur = canvas[:, ox : ox + 8]
                out = proxy.enhance_step(req, cur)
                acc[:, ox : ox + 8] += out
                wsum[:, ox : ox + 8] += 1.0
            canvas = acc / wsum
        overlap = canvas[0, 4:8, 0]
        assert (overlap > 0.2 + 0.05).all() and (overlap < 0.8 - 0.05).all()
        assert np.abs(canvas[0, :4, 0] - 0.2).max() < 0.2  # pulled toward its target
        assert np.abs(canvas[0, 8:, 0] - 0.8).max() < 0.2


def test_cover_origins_full_coverage():
    rng = np.random.default_rng(0)
    for _ in range(100):
        extent = int(rng.integers(8, 200))
        window = int(rng.integers(4, extent + 1))
        stride = int(rng.integers(1, window + 1))
        origins = _cover_origins(extent, window, stride)
        covered = np.zeros(extent, dtype=bool)
        for o in origins:
            covered[o : o + window] = True
        assert covered.all()
        assert all(o + window <= extent for o in origins)
