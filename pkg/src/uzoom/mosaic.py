"""Sliding-window enhancement over the output canvas: schedules with stride
variation, partition-of-unity overlap blending, per-step averaging for
iterative enhancers, band-streamed accumulation, and seam diagnostics.

Window crops carry a small context pad from the source image and the
enhanced result is re-aligned onto the canvas grid, so a tiled run with the
bicubic enhancer reproduces whole-image bicubic to within resampling noise
regardless of the window layout.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degrade import resample_affine, round_half_up
from .enhance import EnhanceRequest
from .errors import (
    InvalidMargin,
    InvalidRange,
    ScheduleCoverageGap,
    TooSmall,
    WindowLargerThanCanvas,
)

DEFAULT_WINDOW = 1024
DEFAULT_BAND_HEIGHT = 1024
CONTEXT_PAD = 2  # source px of context around each window crop


# ---------------------------------------------------------------------------
# schedules

def axis_origins(extent, window, stride):
    """Origins 0, stride, ... with a final clamped origin ending at `extent`."""
    if window > extent:
        raise WindowLargerThanCanvas(f"window {window} > extent {extent}")
    if not 1 <= stride <= window:
        raise ValueError(f"need 1 <= stride <= window, got stride {stride}")
    origins = []
    x = 0
    while True:
        origins.append(x)
        if x + window >= extent:
            return origins
        x = min(x + stride, extent - window)


def axis_origin_count(extent, window, stride):
    span = extent - window
    if span <= 0:
        return 1
    return 1 + math.ceil(span / stride)


def schedule_windows(canvas_w, canvas_h, window, stride):
    """Row-major (x, y) window origins fully covering the canvas."""
    xs = axis_origins(canvas_w, window, stride)
    ys = axis_origins(canvas_h, window, stride)
    return [(x, y) for y in ys for x in xs]


def stride_schedule(step_count, stride_min, stride_max):
    """Non-decreasing integer strides interpolating stride_min -> stride_max."""
    if step_count < 1:
        raise InvalidRange("step_count must be >= 1")
    if not 1 <= stride_min <= stride_max:
        raise InvalidRange(f"need 1 <= stride_min <= stride_max, got {stride_min}, {stride_max}")
    if step_count == 1:
        return [stride_min]
    return [
        round_half_up(stride_min + (stride_max - stride_min) * k / (step_count - 1))
        for k in range(step_count)
    ]


@dataclass
class ScheduleStep:
    stride: int
    origins: list  # (x, y)


@dataclass
class WindowSchedule:
    window: int
    canvas: tuple  # (width, height)
    steps: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "window": self.window,
            "canvas": list(self.canvas),
            "steps": [
                {"stride": s.stride, "origins": [list(o) for o in s.origins]}
                for s in self.steps
            ],
        }


def build_schedule(canvas_w, canvas_h, window, strides):
    """One schedule step per stride, each covering the whole canvas."""
    strides = list(strides)
    if any(b < a for a, b in zip(strides, strides[1:])):
        raise InvalidRange("strides must be non-decreasing")
    steps = [
        ScheduleStep(stride=s, origins=schedule_windows(canvas_w, canvas_h, window, s))
        for s in strides
    ]
    return WindowSchedule(window=window, canvas=(canvas_w, canvas_h), steps=steps)


def validate_coverage(schedule):
    """Every step must cover every canvas pixel; raises ScheduleCoverageGap."""
    w, h = schedule.canvas
    win = schedule.window
    for si, step in enumerate(schedule.steps):
        xs = sorted({o[0] for o in step.origins})
        ys = sorted({o[1] for o in step.origins})
        for axis, vals, extent in (("x", xs, w), ("y", ys, h)):
            if not vals or vals[0] > 0 or vals[-1] + win < extent:
                raise ScheduleCoverageGap(f"step {si} misses {axis} extremes")
            for a, b in zip(vals, vals[1:]):
                if b - a > win:
                    raise ScheduleCoverageGap(
                        f"step {si} gap on {axis} between {a} and {b}"
                    )


@dataclass
class WindowCount:
    total: int
    per_step: list
    average: float


def window_count(schedule):
    per_step = [len(s.origins) for s in schedule.steps]
    total = int(sum(per_step))
    return WindowCount(
        total=total, per_step=per_step, average=total / max(1, len(per_step))
    )


def calibrate_window_counts(
    canvas=18672,
    steps=28,
    target_average=763.07,
    windows=(768, 896, 1024, 1152, 1280, 1536),
    stride_step=8,
    top_n=5,
):
    """Search (window, stride_min, stride_max) families for a per-step window
    average near the target; returns candidates sorted by closeness."""
    results = []
    for window in windows:
        if window > canvas:
            continue
        lo = max(stride_step, window // 4)
        for smin in range(lo, window + 1, stride_step):
            for smax in range(smin, window + 1, stride_step):
                strides = stride_schedule(steps, smin, smax)
                total = sum(
                    axis_origin_count(canvas, window, s) ** 2 for s in strides
                )
                avg = total / steps
                results.append(
                    {
                        "window": window,
                        "stride_min": smin,
                        "stride_max": smax,
                        "total": total,
                        "average": avg,
                        "error": abs(avg - target_average),
                    }
                )
    results.sort(key=lambda r: (r["error"], r["window"]))
    return results[:top_n]


# ---------------------------------------------------------------------------
# blending

@dataclass
class BlendKernel:
    window: int
    margin: int
    weights: np.ndarray  # (window, window) float32, > 0


def cosine_profile(size, margin):
    prof = np.ones(size, dtype=np.float32)
    m = int(min(margin, size // 2))
    if m > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(m) + 0.5) / m))
        prof[:m] = ramp
        prof[size - m :] = ramp[::-1]
    return prof


def blend_kernel(window, margin=0):
    """Separable raised-cosine edge ramp; margin 0 is uniform averaging."""
    if margin < 0 or margin > window // 2:
        raise InvalidMargin(f"margin must be in [0, window/2], got {margin}")
    prof = cosine_profile(window, margin)
    return BlendKernel(window=window, margin=margin, weights=np.outer(prof, prof))


# ---------------------------------------------------------------------------
# banded canvas store

class CanvasStore:
    """Raw band files plus a JSON header; header is written on close."""

    def __init__(self, path, width, height, band_height, dtype="u8"):
        if dtype not in ("u8", "f32"):
            raise ValueError(f"dtype must be u8 or f32, got {dtype}")
        self.path = Path(path)
        (self.path / "bands").mkdir(parents=True, exist_ok=True)
        self.width = width
        self.height = height
        self.band_height = band_height
        self.dtype = dtype
        self.rows_written = 0
        self._band_index = 0

    def write_band(self, rows):
        if rows.shape[0] == 0:
            return
        if self.rows_written + rows.shape[0] > self.height:
            raise ValueError("writing past canvas height")
        if self.dtype == "u8":
            data = np.clip(np.floor(rows * 255.0 + 0.5), 0, 255).astype(np.uint8)
        else:
            data = np.ascontiguousarray(rows, dtype="<f4")
        with open(self.path / "bands" / f"band_{self._band_index:05d}.raw", "wb") as f:
            f.write(data.tobytes())
        self._band_index += 1
        self.rows_written += rows.shape[0]

    def close(self):
        if self.rows_written != self.height:
            raise ValueError(
                f"store incomplete: {self.rows_written}/{self.height} rows"
            )
        header = {
            "width": self.width,
            "height": self.height,
            "band_height": self.band_height,
            "dtype": self.dtype,
        }
        with open(self.path / "header.json", "w") as f:
            json.dump(header, f)


class CanvasReader:
    """Row access over a written canvas store, with a small band cache."""

    def __init__(self, path, max_cached_bands=8):
        self.path = Path(path)
        from .errors import CorruptStream

        try:
            with open(self.path / "header.json") as f:
                header = json.load(f)
            self.width = int(header["width"])
            self.height = int(header["height"])
            self.band_height = int(header["band_height"])
            self.dtype = header.get("dtype", "u8")
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise CorruptStream(f"bad canvas header in {path}: {e}")
        self._cache = {}
        self._max_cached = max_cached_bands

    def _band(self, index):
        if index in self._cache:
            return self._cache[index]
        from .errors import CorruptStream

        r0 = index * self.band_height
        rows = min(self.band_height, self.height - r0)
        path = self.path / "bands" / f"band_{index:05d}.raw"
        try:
            raw = np.fromfile(path, dtype="<u1" if self.dtype == "u8" else "<f4")
        except OSError as e:
            raise CorruptStream(str(e))
        expected = rows * self.width * 3
        if raw.size != expected:
            raise CorruptStream(
                f"band {index}: {raw.size} values, expected {expected}"
            )
        band = raw.reshape(rows, self.width, 3)
        if self.dtype == "u8":
            band = band.astype(np.float32) / 255.0
        else:
            band = band.astype(np.float32)
        if len(self._cache) >= self._max_cached:
            self._cache.pop(min(self._cache))  # row-major access: drop oldest
        self._cache[index] = band
        return band

    def read_rows(self, r0, r1):
        r0 = max(0, r0)
        r1 = min(self.height, r1)
        parts = []
        b = r0 // self.band_height
        row = r0
        while row < r1:
            band = self._band(b)
            lo = row - b * self.band_height
            hi = min(band.shape[0], r1 - b * self.band_height)
            parts.append(band[lo:hi])
            row = b * self.band_height + hi
            b += 1
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)

    def read_rows_clamped(self, r0, r1):
        """Like read_rows but edge-replicates requests beyond the canvas."""
        core = self.read_rows(max(0, r0), min(self.height, r1))
        pad_top = max(0, -r0)
        pad_bot = max(0, r1 - self.height)
        if pad_top or pad_bot:
            core = np.pad(core, ((pad_top, pad_bot), (0, 0), (0, 0)), mode="edge")
        return core

    def image(self):
        return self.read_rows(0, self.height)


class BandAccumulator:
    """Weighted accumulation buffers for the active rows only.

    Windows must arrive in non-decreasing row order; full bands flush to the
    store as soon as no later window can touch them. `peak_rows` records the
    maximum resident buffer height for memory assertions.
    """

    def __init__(self, store, window_h):
        self.store = store
        self.rows = store.band_height + window_h
        self.vsum = np.zeros((self.rows, store.width, 3), dtype=np.float32)
        self.wsum = np.zeros((self.rows, store.width), dtype=np.float32)
        self.base = 0
        self.peak_rows = self.rows

    def add(self, oy, ox, values, weights):
        if oy < self.base:
            raise ValueError("windows must be added in row-major order")
        bh = self.store.band_height
        while oy - self.base >= bh and self.base + bh <= self.store.height:
            self._flush(bh)
        need = oy + values.shape[0] - self.base
        if need > self.rows:
            extra = need - self.rows
            self.vsum = np.concatenate(
                [self.vsum, np.zeros((extra, self.store.width, 3), np.float32)]
            )
            self.wsum = np.concatenate(
                [self.wsum, np.zeros((extra, self.store.width), np.float32)]
            )
            self.rows = need
            self.peak_rows = max(self.peak_rows, self.rows)
        sl = slice(oy - self.base, oy - self.base + values.shape[0])
        self.vsum[sl, ox : ox + values.shape[1]] += values * weights[:, :, None]
        self.wsum[sl, ox : ox + values.shape[1]] += weights

    def _flush(self, n_rows):
        n_rows = min(n_rows, self.store.height - self.store.rows_written)
        if n_rows <= 0:
            return
        w = np.maximum(self.wsum[:n_rows], 1e-12)[:, :, None]
        self.store.write_band(self.vsum[:n_rows] / w)
        keep = self.rows - n_rows
        self.vsum[:keep] = self.vsum[n_rows:]
        self.vsum[keep:] = 0.0
        self.wsum[:keep] = self.wsum[n_rows:]
        self.wsum[keep:] = 0.0
        self.base += n_rows

    def finish(self):
        while self.store.rows_written < self.store.height:
            self._flush(self.store.band_height)


# ---------------------------------------------------------------------------
# window geometry shared by the run functions

@dataclass
class _WindowJob:
    ox: int
    oy: int
    win_w: int
    win_h: int
    crop: tuple  # (cy0, cy1, cx0, cx1) in source px, unclamped
    up_shape: tuple  # enhancer output dims (h, w) for this crop
    up_scale: tuple  # extraction scale per axis (y, x)
    up_offset: tuple  # extraction offset per axis (y, x)


def _crop_clamped(img, cy0, cy1, cx0, cx1):
    ys = np.clip(np.arange(cy0, cy1), 0, img.shape[0] - 1)
    xs = np.clip(np.arange(cx0, cx1), 0, img.shape[1] - 1)
    return img[np.ix_(ys, xs)]


def _window_job(ox, oy, win_w, win_h, sx, sy, zoom):
    fx0 = ox * sx
    fx1 = (ox + win_w) * sx
    fy0 = oy * sy
    fy1 = (oy + win_h) * sy
    cx0 = int(np.floor(fx0)) - CONTEXT_PAD
    cx1 = int(np.ceil(fx1)) + CONTEXT_PAD
    cy0 = int(np.floor(fy0)) - CONTEXT_PAD
    cy1 = int(np.ceil(fy1)) + CONTEXT_PAD
    crop_w = cx1 - cx0
    crop_h = cy1 - cy0
    up_w = round_half_up(crop_w * zoom)
    up_h = round_half_up(crop_h * zoom)
    return _WindowJob(
        ox=ox,
        oy=oy,
        win_w=win_w,
        win_h=win_h,
        crop=(cy0, cy1, cx0, cx1),
        up_shape=(up_h, up_w),
        up_scale=(sy * up_h / crop_h, sx * up_w / crop_w),
        up_offset=((oy * sy - cy0) * up_h / crop_h, (ox * sx - cx0) * up_w / crop_w),
    )


def _extract(up, job):
    sy, sx = job.up_scale
    offy, offx = job.up_offset
    aligned = (
        abs(sy - 1.0) < 1e-9
        and abs(sx - 1.0) < 1e-9
        and abs(offy - round(offy)) < 1e-6
        and abs(offx - round(offx)) < 1e-6
    )
    if aligned:
        iy, ix = int(round(offy)), int(round(offx))
        iy = min(max(iy, 0), up.shape[0] - job.win_h)
        ix = min(max(ix, 0), up.shape[1] - job.win_w)
        return up[iy : iy + job.win_h, ix : ix + job.win_w]
    return resample_affine(up, (job.win_h, job.win_w), (sy, sx), (offy, offx))


@dataclass
class RunStats:
    windows: int
    peak_buffer_rows: int
    band_height: int
    canvas: tuple


def _weights_cache():
    cache = {}

    def get(h, w, margin):
        key = (h, w, margin)
        if key not in cache:
            cache[key] = np.outer(
                cosine_profile(h, margin), cosine_profile(w, margin)
            ).astype(np.float32)
        return cache[key]

    return get


def run_oneshot(
    full,
    enhancer,
    zoom,
    window=DEFAULT_WINDOW,
    stride=None,
    kernel=None,
    out_dir=None,
    band_height=None,
    threads=1,
):
    """Enhance the full image window by window into a banded u8 canvas.

    Returns (CanvasReader, RunStats). Window crops take CONTEXT_PAD source
    pixels of context and results are re-aligned onto the canvas grid, so the
    decomposition does not materially change the output.
    """
    if out_dir is None:
        raise ValueError("out_dir is required")
    src_h, src_w = full.shape[:2]
    out_w = round_half_up(src_w * zoom)
    out_h = round_half_up(src_h * zoom)
    win_w = min(window, out_w)
    win_h = min(window, out_h)
    stride_x = min(stride or max(1, win_w // 2), win_w)
    stride_y = min(stride or max(1, win_h // 2), win_h)
    margin = kernel.margin if kernel is not None else 0
    band_height = band_height or min(DEFAULT_BAND_HEIGHT, out_h)

    store = CanvasStore(out_dir, out_w, out_h, band_height, dtype="u8")
    acc = BandAccumulator(store, win_h)
    weights_for = _weights_cache()
    sx = src_w / out_w
    sy = src_h / out_h

    jobs = [
        _window_job(ox, oy, win_w, win_h, sx, sy, zoom)
        for oy in axis_origins(out_h, win_h, stride_y)
        for ox in axis_origins(out_w, win_w, stride_x)
    ]

    def work(job):
        cy0, cy1, cx0, cx1 = job.crop
        lr = _crop_clamped(full, cy0, cy1, cx0, cx1)
        request = EnhanceRequest(
            lr_patch=lr, zoom=zoom, window_origin=(job.ox, job.oy)
        )
        up = enhancer.enhance(request)
        return _extract(up, job)

    _for_each_in_order(jobs, work, threads, lambda job, win: acc.add(
        job.oy, job.ox, win, weights_for(job.win_h, job.win_w, margin)
    ))
    acc.finish()
    store.close()
    stats = RunStats(
        windows=len(jobs),
        peak_buffer_rows=acc.peak_rows,
        band_height=band_height,
        canvas=(out_w, out_h),
    )
    return CanvasReader(out_dir), stats


def _for_each_in_order(jobs, work, threads, consume):
    """Run `work` over jobs (optionally threaded) and consume results in
    submission order, keeping accumulation deterministic."""
    if threads <= 1:
        for job in jobs:
            consume(job, work(job))
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        in_flight = []
        it = iter(jobs)
        for job in it:
            in_flight.append((job, pool.submit(work, job)))
            if len(in_flight) >= threads * 2:
                j, fut = in_flight.pop(0)
                consume(j, fut.result())
        for j, fut in in_flight:
            consume(j, fut.result())


def _write_initial_estimate(full, out_dir, out_w, out_h, band_height):
    """Whole-image bicubic start, streamed band by band as f32."""
    store = CanvasStore(out_dir, out_w, out_h, band_height, dtype="f32")
    src_h, src_w = full.shape[:2]
    sy = src_h / out_h
    sx = src_w / out_w
    r = 0
    while r < out_h:
        rows = min(band_height, out_h - r)
        band = resample_affine(full, (rows, out_w), (sy, sx), (r * sy, 0.0))
        store.write_band(band)
        r += rows
    store.close()
    return CanvasReader(out_dir)


def run_iterative(
    full,
    enhancer,
    schedule,
    kernel=None,
    out_dir=None,
    band_height=None,
    threads=1,
    zoom=None,
):
    """Multi-step windowed refinement with per-step overlap averaging.

    Each step reads the current canvas estimate, moves every window toward
    the enhancer's target via `enhance_step`, and blends the results into the
    next estimate; window origins follow the schedule's per-step strides.
    Returns (CanvasReader over the final f32 estimate, RunStats).
    """
    if out_dir is None:
        raise ValueError("out_dir is required")
    out_dir = Path(out_dir)
    validate_coverage(schedule)
    out_w, out_h = schedule.canvas
    src_h, src_w = full.shape[:2]
    if zoom is None:
        zoom = out_w / src_w
    win = schedule.window
    margin = kernel.margin if kernel is not None else 0
    band_height = band_height or min(DEFAULT_BAND_HEIGHT, out_h)
    weights_for = _weights_cache()
    sx = src_w / out_w
    sy = src_h / out_h
    step_count = len(schedule.steps)

    current = _write_initial_estimate(
        full, out_dir / "step_init", out_w, out_h, band_height
    )
    total_windows = 0
    peak_rows = 0
    for si, step in enumerate(schedule.steps):
        store = CanvasStore(
            out_dir / f"step_{si:02d}", out_w, out_h, band_height, dtype="f32"
        )
        acc = BandAccumulator(store, win)
        origins = sorted(step.origins, key=lambda o: (o[1], o[0]))
        jobs = [_window_job(ox, oy, win, win, sx, sy, zoom) for ox, oy in origins]
        reader = current

        def work(job, _si=si, _reader=reader):
            cy0, cy1, cx0, cx1 = job.crop
            lr = _crop_clamped(full, cy0, cy1, cx0, cx1)
            request = EnhanceRequest(
                lr_patch=lr,
                zoom=zoom,
                step_index=_si,
                step_count=step_count,
                window_origin=(job.ox, job.oy),
            )
            cur_up = _estimate_in_up_space(_reader, job)
            up = enhancer.enhance_step(request, cur_up)
            return _extract(up, job)

        _for_each_in_order(jobs, work, threads, lambda job, w: acc.add(
            job.oy, job.ox, w, weights_for(job.win_h, job.win_w, margin)
        ))
        acc.finish()
        store.close()
        total_windows += len(jobs)
        peak_rows = max(peak_rows, acc.peak_rows)
        current = CanvasReader(out_dir / f"step_{si:02d}")
    stats = RunStats(
        windows=total_windows,
        peak_buffer_rows=peak_rows,
        band_height=band_height,
        canvas=(out_w, out_h),
    )
    return current, stats


def _estimate_in_up_space(reader, job):
    """Read the current canvas estimate resampled onto a window's up grid.

    Inverts the extraction mapping: up pixel j sits at canvas coordinate
    origin + (j + 0.5 - offset) / scale - 0.5.
    """
    up_h, up_w = job.up_shape
    sy, sx = job.up_scale
    offy, offx = job.up_offset
    inv_sy = 1.0 / sy
    inv_sx = 1.0 / sx
    off_cy = job.oy - offy * inv_sy
    off_cx = job.ox - offx * inv_sx
    aligned = (
        abs(sy - 1.0) < 1e-9
        and abs(sx - 1.0) < 1e-9
        and abs(off_cy - round(off_cy)) < 1e-6
        and abs(off_cx - round(off_cx)) < 1e-6
    )
    if aligned:
        iy = int(round(off_cy))
        ix = int(round(off_cx))
        rows = reader.read_rows_clamped(iy, iy + up_h)
        xs = np.clip(np.arange(ix, ix + up_w), 0, reader.width - 1)
        return rows[:, xs]
    y0 = int(np.floor(off_cy + 0.5 * inv_sy - 0.5)) - 2
    y1 = int(np.ceil(off_cy + (up_h - 0.5) * inv_sy - 0.5)) + 3
    x0 = int(np.floor(off_cx + 0.5 * inv_sx - 0.5)) - 2
    x1 = int(np.ceil(off_cx + (up_w - 0.5) * inv_sx - 0.5)) + 3
    rows = reader.read_rows_clamped(y0, y1)
    xs = np.clip(np.arange(x0, x1), 0, reader.width - 1)
    crop = rows[:, xs]
    return resample_affine(
        crop, (up_h, up_w), (inv_sy, inv_sx), (off_cy - y0, off_cx - x0)
    )


def seam_energy(image, window, stride):
    """Luma gradient on the fixed-stride window boundary lines vs elsewhere.

    1.0 means the window grid leaves no signature; blending failures push it
    above 1.
    """
    from . import imageio

    luma = imageio.rgb_to_luma(np.asarray(image))
    h, w = luma.shape
    if h < window or w < window:
        raise TooSmall(f"image {w}x{h} smaller than window {window}")
    dx = np.abs(np.diff(luma, axis=1))
    dy = np.abs(np.diff(luma, axis=0))

    def boundary_indices(extent, n_diffs):
        lines = set()
        for o in axis_origins(extent, min(window, extent), stride):
            if o > 0:
                lines.add(o)
            if 0 < o + window < extent:
                lines.add(o + window)
        return np.array(sorted(i - 1 for i in lines if 0 < i <= n_diffs), dtype=int)

    bx = boundary_indices(w, dx.shape[1])
    by = boundary_indices(h, dy.shape[0])
    mask_x = np.zeros(dx.shape[1], dtype=bool)
    mask_x[bx] = True
    mask_y = np.zeros(dy.shape[0], dtype=bool)
    mask_y[by] = True
    on = float(dx[:, mask_x].sum() + dy[mask_y, :].sum())
    on_n = dx[:, mask_x].size + dy[mask_y, :].size
    off = float(dx[:, ~mask_x].sum() + dy[~mask_y, :].sum())
    off_n = dx[:, ~mask_x].size + dy[~mask_y, :].size
    if on_n == 0 or off_n == 0:
        return 1.0
    if on <= 1e-12 and off <= 1e-12:
        return 1.0
    if off <= 1e-12:
        return np.inf
    return (on / on_n) / (off / off_n)
