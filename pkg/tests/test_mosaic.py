import numpy as np
import pytest

from uzoom import fixtures, imageio, mosaic
from uzoom.degrade import resample_bicubic
from uzoom.enhance import BicubicEnhancer, IterativeProxyEnhancer
from uzoom.errors import (
    InvalidMargin,
    InvalidRange,
    ScheduleCoverageGap,
    TooSmall,
    WindowLargerThanCanvas,
)


class TestScheduleWindows:
    def test_enumerated_64_canvas(self):
        origins = mosaic.schedule_windows(64, 64, 32, 16)
        assert len(origins) == 9
        assert sorted({o[0] for o in origins}) == [0, 16, 32]

    def test_single_window(self):
        assert mosaic.schedule_windows(32, 32, 32, 16) == [(0, 0)]

    def test_clamped_tail(self):
        assert mosaic.axis_origins(100, 32, 24) == [0, 24, 48, 68]

    def test_window_larger_than_canvas(self):
        with pytest.raises(WindowLargerThanCanvas):
            mosaic.schedule_windows(16, 16, 32, 8)

    def test_coverage_property(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            extent = int(rng.integers(8, 400))
            window = int(rng.integers(4, extent + 1))
            stride = int(rng.integers(1, window + 1))
            origins = mosaic.axis_origins(extent, window, stride)
            covered = np.zeros(extent, bool)
            for o in origins:
                covered[o : o + window] = True
            assert covered.all()
            assert origins[-1] + window == extent or window >= extent
            assert len(origins) == mosaic.axis_origin_count(extent, window, stride)


class TestStrideSchedule:
    def test_single_step(self):
        assert mosaic.stride_schedule(1, 100, 200) == [100]

    def test_linear_interpolation(self):
        assert mosaic.stride_schedule(3, 512, 768) == [512, 640, 768]

    def test_constant_when_equal(self):
        assert mosaic.stride_schedule(4, 96, 96) == [96, 96, 96, 96]

    def test_non_decreasing_property(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            lo = int(rng.integers(1, 500))
            hi = int(rng.integers(lo, 1000))
            k = int(rng.integers(1, 12))
            strides = mosaic.stride_schedule(k, lo, hi)
            assert strides[0] == lo and strides[-1] == (hi if k > 1 else lo)
            assert all(b >= a for a, b in zip(strides, strides[1:]))

    def test_invalid_range(self):
        with pytest.raises(InvalidRange):
            mosaic.stride_schedule(3, 10, 5)
        with pytest.raises(InvalidRange):
            mosaic.stride_schedule(0, 5, 10)


class TestBlendKernel:
    def test_zero_margin_uniform(self):
        k = mosaic.blend_kernel(32, 0)
        assert np.array_equal(k.weights, np.ones((32, 32), np.float32))

    def test_single_window_normalizes_to_one(self, tmp_path):
        img = np.full((16, 16, 3), 0.6, np.float32)
        reader, _ = mosaic.run_oneshot(
            img, BicubicEnhancer(), 2.0, window=32, stride=32,
            kernel=mosaic.blend_kernel(32, 8), out_dir=tmp_path, band_height=32,
        )
        assert np.abs(reader.image() - 0.6).max() < 2 / 255

    def test_partition_of_unity_two_windows(self):
        k = mosaic.blend_kernel(32, 8)
        acc = np.zeros(48, np.float32)
        prof = k.weights[16]  # a 1-D slice of the separable field
        acc[:32] += prof
        acc[16:] += prof
        normalized = np.ones_like(acc)  # after dividing by acc itself
        assert (acc > 0).all()
        assert np.abs(acc / acc - normalized).max() < 1e-6

    def test_weights_positive_interior(self):
        k = mosaic.blend_kernel(64, 32)
        assert (k.weights > 0).all()

    def test_invalid_margin(self):
        with pytest.raises(InvalidMargin):
            mosaic.blend_kernel(32, 17)


class TestCoverageValidation:
    def test_valid_schedule_passes(self):
        s = mosaic.build_schedule(200, 150, 64, [32, 48, 64])
        mosaic.validate_coverage(s)

    def test_gap_detected(self):
        s = mosaic.build_schedule(200, 150, 64, [32])
        # dropping two adjacent columns opens a hole wider than the window
        s.steps[0].origins = [o for o in s.steps[0].origins if o[0] not in (32, 64)]
        with pytest.raises(ScheduleCoverageGap):
            mosaic.validate_coverage(s)

    def test_non_decreasing_strides_enforced(self):
        with pytest.raises(InvalidRange):
            mosaic.build_schedule(200, 150, 64, [48, 32])

    def test_random_schedules_cover(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            w = int(rng.integers(32, 600))
            h = int(rng.integers(32, 600))
            win = int(rng.integers(16, min(w, h) + 1))
            k = int(rng.integers(1, 5))
            lo = int(rng.integers(1, win + 1))
            hi = int(rng.integers(lo, win + 1))
            s = mosaic.build_schedule(w, h, win, mosaic.stride_schedule(k, lo, hi))
            mosaic.validate_coverage(s)  # must not raise


class TestPartitionOfUnityAccumulation:
    def test_weight_normalization_everywhere(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            extent = int(rng.integers(16, 300))
            win = int(rng.integers(8, extent + 1))
            stride = int(rng.integers(1, win + 1))
            margin = int(rng.integers(0, win // 2 + 1))
            prof = mosaic.cosine_profile(win, margin)
            acc = np.zeros(extent, np.float64)
            for o in mosaic.axis_origins(extent, win, stride):
                acc[o : o + win] += prof
            assert (acc > 0).all()
            # after per-pixel normalization the effective weights sum to 1
            assert np.abs(acc / acc - 1.0).max() < 1e-6


class TestRunOneshot:
    @pytest.mark.parametrize("zoom", [2.0, 4.0, 6.93])
    def test_oracle_equivalence(self, texture_rgb, tmp_path, zoom):
        F = texture_rgb[:192, :192]
        oracle = imageio.from_u8(imageio.to_u8(resample_bicubic(F, zoom)))
        for i, (window, stride) in enumerate(((128, 64), (128, 96), (160, 120))):
            reader, _ = mosaic.run_oneshot(
                F, BicubicEnhancer(), zoom, window=window, stride=stride,
                kernel=mosaic.blend_kernel(window, 16),
                out_dir=tmp_path / f"{zoom}_{i}", band_height=window,
            )
            assert np.abs(reader.image() - oracle).mean() < 1e-3

    def test_canvas_smaller_than_window(self, texture_rgb, tmp_path):
        F = texture_rgb[:40, :40]
        calls = []

        class Counting(BicubicEnhancer):
            def enhance(self, request):
                calls.append(request.lr_patch.shape)
                return super().enhance(request)

        reader, stats = mosaic.run_oneshot(
            F, Counting(), 2.0, window=512, stride=256, out_dir=tmp_path
        )
        assert stats.windows == 1 and len(calls) == 1
        assert reader.width == 80 and reader.height == 80

    def test_constant_input(self, tmp_path):
        F = np.full((64, 64, 3), 0.31, np.float32)
        reader, _ = mosaic.run_oneshot(
            F, BicubicEnhancer(), 4.0, window=96, stride=64, out_dir=tmp_path
        )
        assert np.abs(reader.image() - 0.31).max() < 0.02

    def test_memory_bound(self, texture_rgb, tmp_path):
        F = texture_rgb[:128, :128]
        band_height = 64
        reader, stats = mosaic.run_oneshot(
            F, BicubicEnhancer(), 4.0, window=64, stride=48,
            out_dir=tmp_path, band_height=band_height,
        )
        assert stats.peak_buffer_rows <= 3 * band_height

    def test_threaded_equals_serial(self, texture_rgb, tmp_path):
        F = texture_rgb[:96, :96]
        a, _ = mosaic.run_oneshot(
            F, BicubicEnhancer(), 4.0, window=128, stride=64,
            out_dir=tmp_path / "serial", threads=1,
        )
        b, _ = mosaic.run_oneshot(
            F, BicubicEnhancer(), 4.0, window=128, stride=64,
            out_dir=tmp_path / "threaded", threads=4,
        )
        assert np.array_equal(a.image(), b.image())


class TestRunIterative:
    def test_single_window_reaches_target(self, tmp_path):
        F = fixtures.noise_texture_rgb(64, 64, seed=3)
        target = BicubicEnhancer()
        schedule = mosaic.build_schedule(256, 256, 256, [256] * 4)
        reader, _ = mosaic.run_iterative(
            F, IterativeProxyEnhancer(target), schedule,
            out_dir=tmp_path, band_height=256, zoom=4.0,
        )
        oracle = target.enhance(
            __import__("uzoom.enhance", fromlist=["EnhanceRequest"]).EnhanceRequest(
                lr_patch=F, zoom=4.0
            )
        )
        assert np.abs(reader.image() - oracle).max() < 1e-6

    def test_coinciding_strides_match_fixed(self, tmp_path):
        F = fixtures.noise_texture_rgb(64, 64, seed=5)
        proxy = IterativeProxyEnhancer(BicubicEnhancer())
        s_fixed = mosaic.build_schedule(256, 256, 128, [96, 96])
        a, _ = mosaic.run_iterative(
            F, proxy, s_fixed, out_dir=tmp_path / "a", band_height=128, zoom=4.0
        )
        s_same = mosaic.build_schedule(256, 256, 128, mosaic.stride_schedule(2, 96, 96))
        b, _ = mosaic.run_iterative(
            F, proxy, s_same, out_dir=tmp_path / "b", band_height=128, zoom=4.0
        )
        assert np.array_equal(a.image(), b.image())


class TestSeamEnergy:
    def test_smooth_gradient_near_one(self):
        ramp = np.linspace(0.1, 0.9, 256, dtype=np.float32)
        img = np.repeat(np.repeat(ramp[None, :], 256, axis=0)[:, :, None], 3, axis=2)
        assert abs(mosaic.seam_energy(img, 64, 48) - 1.0) < 0.1

    def test_injected_seams_detected(self):
        rng = np.random.default_rng(6)
        img = np.repeat(
            fixtures.value_noise(256, 256, seed=6)[:, :, None], 3, axis=2
        )
        for o in mosaic.axis_origins(256, 64, 48):
            if o > 0:
                img[:, o] = np.clip(img[:, o] + 0.15, 0, 1)
                img[o, :] = np.clip(img[o, :] + 0.15, 0, 1)
        assert mosaic.seam_energy(img, 64, 48) > 1.5

    def test_constant_neutral(self):
        img = np.full((128, 128, 3), 0.5, np.float32)
        assert mosaic.seam_energy(img, 64, 32) == 1.0

    def test_too_small(self):
        with pytest.raises(TooSmall):
            mosaic.seam_energy(np.zeros((16, 16, 3), np.float32), 64, 32)


class TestWindowCount:
    def test_nine_windows_one_step(self):
        s = mosaic.build_schedule(64, 64, 32, [16])
        wc = mosaic.window_count(s)
        assert wc.total == 9 and wc.average == 9.0

    def test_three_step_enumeration(self):
        # per-axis counts 3, 3, 2 -> 9 + 9 + 4 = 22
        s = mosaic.build_schedule(64, 64, 32, [16, 16, 32])
        wc = mosaic.window_count(s)
        assert wc.per_step == [9, 9, 4]
        assert wc.total == 22
        assert wc.average == pytest.approx(22 / 3)

    def test_matches_brute_force_on_random_schedules(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            w = int(rng.integers(50, 2000))
            h = int(rng.integers(50, 2000))
            win = int(rng.integers(16, min(w, h) + 1))
            k = int(rng.integers(1, 6))
            lo = int(rng.integers(max(1, win // 4), win + 1))
            hi = int(rng.integers(lo, win + 1))
            s = mosaic.build_schedule(w, h, win, mosaic.stride_schedule(k, lo, hi))
            wc = mosaic.window_count(s)
            brute = sum(
                sum(
                    1
                    for _x in mosaic.axis_origins(w, win, st.stride)
                    for _y in mosaic.axis_origins(h, win, st.stride)
                )
                for st in s.steps
            )
            assert wc.total == brute

    def test_paper_scale_calibration(self):
        report = mosaic.calibrate_window_counts(
            canvas=18672, steps=28, target_average=763.07
        )
        best = report[0]
        assert abs(best["average"] - 763.07) <= 5.0


class TestCanvasStore:
    def test_round_trip_u8(self, tmp_path, rng):
        img = rng.random((37, 21, 3)).astype(np.float32)
        store = mosaic.CanvasStore(tmp_path, 21, 37, 16, "u8")
        for r in range(0, 37, 16):
            store.write_band(img[r : r + 16])
        store.close()
        reader = mosaic.CanvasReader(tmp_path)
        assert np.array_equal(reader.image(), imageio.from_u8(imageio.to_u8(img)))
        assert np.array_equal(reader.read_rows(5, 20), reader.image()[5:20])

    def test_round_trip_f32(self, tmp_path, rng):
        img = rng.random((10, 8, 3)).astype(np.float32)
        store = mosaic.CanvasStore(tmp_path, 8, 10, 4, "f32")
        for r in range(0, 10, 4):
            store.write_band(img[r : r + 4])
        store.close()
        assert np.array_equal(mosaic.CanvasReader(tmp_path).image(), img)

    def test_clamped_reads(self, tmp_path, rng):
        img = rng.random((8, 6, 3)).astype(np.float32)
        store = mosaic.CanvasStore(tmp_path, 6, 8, 8, "f32")
        store.write_band(img)
        store.close()
        out = mosaic.CanvasReader(tmp_path).read_rows_clamped(-2, 10)
        assert out.shape[0] == 12
        assert np.array_equal(out[0], img[0]) and np.array_equal(out[-1], img[-1])
