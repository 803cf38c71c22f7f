"""Degradation operator: color matching, bicubic rescaling, blur round trip,
and conditional JPEG recompression.

The goal is to make high-detail exemplar patches look like the corresponding
regions of the low-detail full view, so a model trained on the pairs sees
test-like inputs. All steps are deterministic: same inputs and recipe give
bit-identical outputs.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, imageio
from .errors import EmptyRegion, OutputTooSmall, TooSmall

JPEG_QUALITY = 75
EXTRA_DOWNSAMPLE = 2
BLOCKINESS_RATIO_THRESHOLD = 1.2


@dataclass(frozen=True)
class ColorStats:
    """Per-channel 256-bin histogram and CDF over a rectangular region."""

    hist: np.ndarray  # (3, 256), each row sums to 1
    cdf: np.ndarray  # (3, 256), non-decreasing, ends at 1


@dataclass(frozen=True)
class DegradationRecipe:
    scale: float
    extra_downsample: int = EXTRA_DOWNSAMPLE
    jpeg_quality: int = JPEG_QUALITY
    jpeg_enabled: bool = False
    blockiness_ratio_threshold: float = BLOCKINESS_RATIO_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.scale < 1.0:
            raise ValueError(f"scale must be in (0, 1), got {self.scale}")
        if self.extra_downsample < 1:
            raise ValueError("extra_downsample must be >= 1")
        if not 1 <= self.jpeg_quality <= 100:
            raise ValueError("jpeg_quality must be in 1..100")

    def to_dict(self):
        return {
            "scale": self.scale,
            "extra_downsample": self.extra_downsample,
            "jpeg_quality": self.jpeg_quality,
            "jpeg_enabled": self.jpeg_enabled,
            "blockiness_ratio_threshold": self.blockiness_ratio_threshold,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            scale=float(d["scale"]),
            extra_downsample=int(d.get("extra_downsample", EXTRA_DOWNSAMPLE)),
            jpeg_quality=int(d.get("jpeg_quality", JPEG_QUALITY)),
            jpeg_enabled=bool(d.get("jpeg_enabled", False)),
            blockiness_ratio_threshold=float(
                d.get("blockiness_ratio_threshold", BLOCKINESS_RATIO_THRESHOLD)
            ),
        )


# ---------------------------------------------------------------------------
# resampling

def round_half_up(x):
    return int(np.floor(x + 0.5))


def resample_affine(img, out_shape, scale, offset=(0.0, 0.0)):
    """Separable Catmull-Rom sampling: output (i, j) reads source coordinate
    (offset + (index + 0.5) * scale - 0.5) per axis, edge-clamped.

    `scale` and `offset` are (y, x) tuples. Output is clamped to [0, 1].
    """
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    img = np.ascontiguousarray(img, dtype=np.float32)
    out_h, out_w = out_shape
    idx_y, wts_y, _ = _kernels.axis_taps(img.shape[0], out_h, scale[0], offset[0])
    idx_x, wts_x, _ = _kernels.axis_taps(img.shape[1], out_w, scale[1], offset[1])
    out = _kernels.gather_rows(img, idx_y, wts_y)
    out = _kernels.gather_cols(np.ascontiguousarray(out), idx_x, wts_x)
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def resample_to(img, out_h, out_w):
    """Resample to an exact output shape (per-axis scale = in/out)."""
    if out_h < 1 or out_w < 1:
        raise OutputTooSmall(f"target {out_h}x{out_w}")
    in_h, in_w = img.shape[:2]
    return resample_affine(img, (out_h, out_w), (in_h / out_h, in_w / out_w))


def resample_bicubic(img, factor):
    """Catmull-Rom rescale by `factor`; output dims = round(input dims * factor)."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    in_h, in_w = img.shape[:2]
    out_h = round_half_up(in_h * factor)
    out_w = round_half_up(in_w * factor)
    if out_h < 1 or out_w < 1:
        raise OutputTooSmall(f"factor {factor} on {in_h}x{in_w}")
    if out_h == in_h and out_w == in_w:
        return np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    return resample_to(img, out_h, out_w)


# ---------------------------------------------------------------------------
# color statistics and histogram matching

def color_stats(img, region=None):
    """Per-channel histograms over an (x0, y0, x1, y1) region (whole image if None)."""
    if region is None:
        region = (0, 0, img.shape[1], img.shape[0])
    x0, y0, x1, y1 = (int(v) for v in region)
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    x1 = min(x1, img.shape[1])
    y1 = min(y1, img.shape[0])
    if x1 <= x0 or y1 <= y0:
        raise EmptyRegion(f"region ({x0},{y0},{x1},{y1}) is empty")
    crop = imageio.to_u8(img[y0:y1, x0:x1])
    hist = np.stack(
        [np.bincount(crop[:, :, c].ravel(), minlength=256) for c in range(3)]
    ).astype(np.float64)
    hist /= hist.sum(axis=1, keepdims=True)
    return ColorStats(hist=hist, cdf=np.cumsum(hist, axis=1))


def match_color(img, target):
    """Per-channel histogram matching of `img` onto `target` statistics.

    Each source level v maps to the smallest target level whose CDF reaches
    the source CDF at v, giving a monotone non-decreasing 256-entry LUT per
    channel. Output values are exact 8-bit levels.
    """
    src = imageio.to_u8(img)
    out = np.empty_like(src)
    for c in range(3):
        src_hist = np.bincount(src[:, :, c].ravel(), minlength=256).astype(np.float64)
        src_cdf = np.cumsum(src_hist / src_hist.sum())
        lut = color_lut(src_cdf, target.cdf[c])
        out[:, :, c] = lut[src[:, :, c]]
    return imageio.from_u8(out)


def color_lut(src_cdf, target_cdf):
    """256-entry mapping: first target level whose CDF >= source CDF."""
    lut = np.searchsorted(target_cdf, src_cdf - 1e-12, side="left")
    return np.clip(lut, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# JPEG and blockiness

def jpeg_roundtrip(img, quality=JPEG_QUALITY):
    """Encode to baseline JPEG (4:2:0) at `quality` and decode back."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in 1..100, got {quality}")
    return imageio.decode_jpeg(imageio.encode_jpeg(img, quality))


def blockiness(img):
    """Luma gradient on 8x8 block boundaries vs elsewhere; 1.0 is neutral.

    JPEG artifacts concentrate discontinuities on the block grid, pushing
    this ratio above 1.
    """
    luma = imageio.rgb_to_luma(img)
    h, w = luma.shape
    if h < 16 or w < 16:
        raise TooSmall(f"need >= 16x16, got {h}x{w}")
    dx = np.abs(np.diff(luma, axis=1))
    dy = np.abs(np.diff(luma, axis=0))
    bx = (np.arange(dx.shape[1]) + 1) % 8 == 0
    by = (np.arange(dy.shape[0]) + 1) % 8 == 0
    boundary = float(dx[:, bx].sum() + dy[by, :].sum())
    boundary_n = dx[:, bx].size + dy[by, :].size
    interior = float(dx[:, ~bx].sum() + dy[~by, :].sum())
    interior_n = dx[:, ~bx].size + dy[~by, :].size
    if boundary <= 1e-12 and interior <= 1e-12:
        return 1.0
    if interior <= 1e-12:
        return np.inf
    return (boundary / boundary_n) / (interior / interior_n)


# ---------------------------------------------------------------------------
# the full degradation operator

def degrade(img, recipe, reference_blockiness=None):
    """Apply the full degradation pipeline to a color-matched close-up.

    Steps: bicubic downsample by the registered scale; an extra blur via a
    down-then-up round trip (so geometry stays at the registered scale); and
    a JPEG round trip when the full-view reference region shows markedly more
    compression artifacts than the downscaled close-up. Pass the reference
    region's blockiness score to make that decision here, or preset
    `recipe.jpeg_enabled`.

    Returns (degraded image, recipe actually applied).
    """
    out = resample_bicubic(img, recipe.scale)
    if recipe.extra_downsample > 1:
        h, w = out.shape[:2]
        small_h = max(1, round_half_up(h / recipe.extra_downsample))
        small_w = max(1, round_half_up(w / recipe.extra_downsample))
        out = resample_to(resample_to(out, small_h, small_w), h, w)
    applied = recipe
    if reference_blockiness is not None:
        try:
            own = blockiness(out)
        except TooSmall:
            own = 1.0
        enabled = bool(
            own > 0 and reference_blockiness / own > recipe.blockiness_ratio_threshold
        )
        applied = replace(recipe, jpeg_enabled=enabled)
    if applied.jpeg_enabled:
        out = jpeg_roundtrip(out, applied.jpeg_quality)
    return out, applied
