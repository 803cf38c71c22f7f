import json

import numpy as np
import pytest

from uzoom import dataset, fixtures, geometry, imageio
from uzoom.degrade import round_half_up
from uzoom.errors import (
    FootprintOutsideImage,
    ManifestCorrupt,
    PatchTooLarge,
)


class TestPrepareCloseup:
    def test_already_matched_capture(self, capture_set):
        matched, degraded, recipe = dataset.prepare_closeup(capture_set, 0)
        closeup = capture_set.closeups[0]
        # same master, same color statistics: matching is near-identity
        assert np.abs(matched - closeup).mean() < 1 / 255
        s = capture_set.scales[0]
        assert degraded.shape[:2] == (
            round_half_up(closeup.shape[0] * s),
            round_half_up(closeup.shape[1] * s),
        )

    def test_brightness_offset_corrected(self, capture_set):
        shifted = np.clip(capture_set.closeups[0] + 0.1, 0, 1)
        cs = dataset.CaptureSet(
            full=capture_set.full,
            closeups=[shifted],
            transforms=capture_set.transforms,
            scales=capture_set.scales,
        )
        matched, _, _ = dataset.prepare_closeup(cs, 0)
        aabb, _ = dataset.clipped_footprint_aabb(
            cs.transforms[0], shifted.shape, cs.full.shape
        )
        region = cs.full[aabb[1] : aabb[3], aabb[0] : aabb[2]]
        assert abs(matched.mean() - region.mean()) < 0.01

    def test_footprint_outside(self, capture_set):
        off = geometry.SimilarityTransform2D(0.125, 0.0, 5000.0, 5000.0)
        cs = dataset.CaptureSet(
            full=capture_set.full,
            closeups=capture_set.closeups,
            transforms=[off],
            scales=capture_set.scales,
        )
        with pytest.raises(FootprintOutsideImage):
            dataset.prepare_closeup(cs, 0)


class TestSamplePairs:
    def test_count_zero_empty(self, capture_set, tmp_path):
        man = dataset.build_manifest(capture_set, tmp_path, 192, 0, seed=1)
        assert man.pairs == []
        assert (tmp_path / "manifest.json").exists()

    def test_determinism(self, capture_set, tmp_path):
        a = dataset.build_manifest(capture_set, tmp_path / "a", 192, 25, seed=7)
        b = dataset.build_manifest(capture_set, tmp_path / "b", 192, 25, seed=7)
        assert [p.origin for p in a.pairs] == [p.origin for p in b.pairs]
        for pa, pb in zip(a.pairs, b.pairs):
            ia = imageio.load_image(a.root / pa.hr_path)
            ib = imageio.load_image(b.root / pb.hr_path)
            assert np.array_equal(ia, ib)

    def test_lr_dims_follow_scale(self, manifest):
        s = manifest.closeups[0]["scale"]
        expected = round_half_up(manifest.patch_size * s)
        for pair in manifest.pairs:
            lr = imageio.load_image(manifest.root / pair.lr_path)
            assert lr.shape[:2] == (expected, expected)

    def test_patch_too_large(self, capture_set, tmp_path):
        with pytest.raises(PatchTooLarge):
            dataset.build_manifest(capture_set, tmp_path, 512, 1, seed=0)

    def test_closeup_balance(self, rng, tmp_path):
        # two close-ups, many draws: counts within a generous binomial bound
        zoom = 8.0
        size = 160
        master = fixtures.noise_texture_rgb(int(zoom * size), int(zoom * size), seed=2)
        center = (master.shape[1] / 2, master.shape[0] / 2)
        c = fixtures.render_view(master, 1.0, center, size, size)
        full = fixtures.render_view(master, zoom, center, size, size)
        truth = fixtures.true_transform(1.0, center, zoom, center, size, size)
        cs = dataset.CaptureSet(
            full=full,
            closeups=[c, c.copy()],
            transforms=[truth, truth],
            scales=[0.125, 0.125],
        )
        man = dataset.build_manifest(cs, tmp_path, 128, 400, seed=3)
        counts = np.bincount([p.closeup for p in man.pairs], minlength=2)
        assert abs(counts[0] - 200) < 60  # ~6 sigma

    def test_origin_uniformity_chi_square(self, capture_set, tmp_path):
        man = dataset.build_manifest(capture_set, tmp_path, 192, 1000, seed=9)
        xs = np.array([p.origin[0] for p in man.pairs], dtype=float)
        hi = xs.max() + 1
        counts, _ = np.histogram(xs, bins=10, range=(0, hi))
        expected = len(xs) / 10
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 27.877  # chi2 df=9 at significance 0.001


class TestVerifyAlignment:
    def test_fresh_manifest_aligned(self, manifest):
        report = dataset.verify_alignment(manifest)
        assert len(report.deviations) == len(manifest.pairs)
        assert report.mean_deviation < 0.02
        assert report.flagged == []

    def test_corrupted_pair_flagged(self, capture_set, tmp_path, rng):
        man = dataset.build_manifest(capture_set, tmp_path, 192, 5, seed=2)
        victim = man.pairs[2]
        noise = rng.random((24, 24, 3)).astype(np.float32)
        imageio.save_image(man.root / victim.lr_path, noise)
        report = dataset.verify_alignment(tmp_path)
        assert victim.pair_id in report.flagged
        assert dict(report.deviations)[victim.pair_id] > 0.1

    def test_empty_manifest_report(self, capture_set, tmp_path):
        man = dataset.build_manifest(capture_set, tmp_path, 192, 0, seed=1)
        report = dataset.verify_alignment(man)
        assert report.deviations == [] and report.flagged == []

    def test_missing_file_is_corrupt(self, capture_set, tmp_path):
        man = dataset.build_manifest(capture_set, tmp_path, 192, 3, seed=2)
        (man.root / man.pairs[0].lr_path).unlink()
        with pytest.raises(ManifestCorrupt):
            dataset.verify_alignment(man)


class TestManifestIO:
    def test_round_trip(self, manifest):
        back = dataset.load_manifest(manifest.root)
        assert back.seed == manifest.seed
        assert back.patch_size == manifest.patch_size
        assert len(back.pairs) == len(manifest.pairs)
        assert back.pairs[0].origin == manifest.pairs[0].origin

    def test_schema_keys(self, manifest):
        with open(manifest.root / "manifest.json") as f:
            d = json.load(f)
        assert {"seed", "patch_size", "closeups", "pairs"} <= set(d)
        assert {"id", "closeup", "hr", "lr", "origin"} <= set(d["pairs"][0])
        assert {"scale", "recipe"} <= set(d["closeups"][0])

    def test_referenced_files_exist(self, manifest):
        for pair in manifest.pairs:
            assert (manifest.root / pair.hr_path).exists()
            assert (manifest.root / pair.lr_path).exists()
