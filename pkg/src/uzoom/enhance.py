"""Enhancement contract plus the built-in reference implementations.

The eventual consumer of a deployment plugs a fine-tuned model in behind
this interface (see `worker` for the out-of-process route); the built-ins
keep the surrounding system exercisable end to end: plain bicubic, a
retrieval-based exemplar-transfer enhancer fed by the patch-pair bank, and
an iterative proxy that converges toward a target so per-step overlap
averaging has something to average.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio
from .degrade import DegradationRecipe, degrade, resample_to, round_half_up
from .errors import (
    DimensionMismatch,
    EmptyBank,
    EmptyManifest,
    InputTooLarge,
)

EXEMPLAR_TILE = 16
EXEMPLAR_STRIDE = 8
DETAIL_GAIN = 1.0
FLAT_TILE_STD = 1e-4


@dataclass
class EnhanceRequest:
    lr_patch: np.ndarray  # RGB float32 at full-view pixel scale
    zoom: float
    step_index: int = 0
    step_count: int = 1
    window_origin: tuple = (0, 0)

    def __post_init__(self):
        if self.zoom <= 1.0:
            raise ValueError(f"zoom must be > 1, got {self.zoom}")
        if not 0 <= self.step_index < self.step_count:
            raise ValueError("need 0 <= step_index < step_count")

    @property
    def output_shape(self):
        h, w = self.lr_patch.shape[:2]
        return round_half_up(h * self.zoom), round_half_up(w * self.zoom)


@dataclass(frozen=True)
class EnhancerDescriptor:
    name: str
    mode: str  # "one-shot" | "iterative"
    max_input: int
    deterministic: bool

    def to_dict(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "max_input": self.max_input,
            "deterministic": self.deterministic,
        }


class Enhancer:
    descriptor = EnhancerDescriptor("base", "one-shot", 1 << 30, True)

    def _check(self, request):
        h, w = request.lr_patch.shape[:2]
        if max(h, w) > self.descriptor.max_input:
            raise InputTooLarge(
                f"{w}x{h} exceeds max_input {self.descriptor.max_input}"
            )

    def enhance(self, request):
        raise NotImplementedError

    def close(self):
        pass


class BicubicEnhancer(Enhancer):
    """Baseline: Catmull-Rom upsampling, the zero-knowledge enhancer."""

    descriptor = EnhancerDescriptor("bicubic", "one-shot", 1 << 30, True)

    def enhance(self, request):
        self._check(request)
        out_h, out_w = request.output_shape
        return resample_to(request.lr_patch, out_h, out_w)


# ---------------------------------------------------------------------------
# exemplar bank

class ExemplarBank:
    """Flat store of (normalized degraded-tile descriptor, HR detail tile).

    Descriptors are zero-mean unit-variance luma tiles at degraded scale;
    detail tiles are the HR residual left after degrading and re-upsampling
    the HR exemplar tile, at the exemplar's native zoom.
    """

    def __init__(self, tile, descriptors, details, zooms):
        self.tile = tile
        self.descriptors = descriptors  # (N, tile*tile) float32
        self.details = details  # list of (th, tw, 3) float32
        self.zooms = zooms  # per-entry native zoom
        self._sq = (descriptors * descriptors).sum(axis=1)

    def __len__(self):
        return self.descriptors.shape[0]

    def nearest(self, descriptor):
        d = self.descriptors @ descriptor
        return int(np.argmin(self._sq - 2.0 * d))


def _normalized_tile(luma_tile):
    flat = luma_tile.astype(np.float32).ravel()
    std = float(flat.std())
    if std < FLAT_TILE_STD:
        return None
    return (flat - flat.mean()) / std


def build_exemplar_bank(manifest, tile=EXEMPLAR_TILE, stride=EXEMPLAR_STRIDE):
    """Harvest (degraded tile, HR detail) entries from every manifest pair.

    Tiles step by `stride` from the top-left corner; duplicates are kept.
    """
    if tile < 8:
        raise ValueError("tile must be >= 8")
    if not manifest.pairs:
        raise EmptyManifest("manifest has no pairs")
    descriptors = []
    details = []
    zooms = []
    root = Path(manifest.root)
    for pair in manifest.pairs:
        meta = manifest.closeups[pair.closeup]
        recipe = DegradationRecipe.from_dict(meta["recipe"])
        hr = imageio.load_image(root / pair.hr_path)
        lr = imageio.load_image(root / pair.lr_path)
        luma = imageio.rgb_to_luma(lr)
        lh, lw = lr.shape[:2]
        if lh < tile or lw < tile:
            continue
        hh, hw = hr.shape[:2]
        ry = hh / lh
        rx = hw / lw
        hr_tile_h = round_half_up(tile * ry)
        hr_tile_w = round_half_up(tile * rx)
        for ty in range(0, lh - tile + 1, stride):
            for tx in range(0, lw - tile + 1, stride):
                desc = _normalized_tile(luma[ty : ty + tile, tx : tx + tile])
                if desc is None:
                    continue
                hy = min(round_half_up(ty * ry), hh - hr_tile_h)
                hx = min(round_half_up(tx * rx), hw - hr_tile_w)
                hr_tile = hr[hy : hy + hr_tile_h, hx : hx + hr_tile_w]
                degraded, _ = degrade(hr_tile, recipe)
                redone = resample_to(degraded, hr_tile_h, hr_tile_w)
                descriptors.append(desc)
                details.append(hr_tile - redone)
                zooms.append((ry + rx) / 2.0)
    if not descriptors:
        raise EmptyManifest("no usable tiles in manifest pairs")
    return ExemplarBank(
        tile=tile,
        descriptors=np.stack(descriptors),
        details=details,
        zooms=zooms,
    )


def _cover_origins(extent, window, stride):
    """0, stride, ... plus a clamped tail so [0, extent) is fully covered."""
    origins = []
    x = 0
    while True:
        origins.append(x)
        if x + window >= extent:
            return origins
        x = min(x + stride, extent - window)


def _cosine_profile(size, margin):
    prof = np.ones(size, dtype=np.float32)
    m = min(margin, size // 2)
    if m > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(m) + 0.5) / m))
        prof[:m] = ramp
        prof[size - m :] = ramp[::-1]
    return prof


class ExemplarEnhancer(Enhancer):
    """Bicubic upsample plus retrieved high-frequency detail per tile.

    Each degraded-scale tile of the input is matched against the bank on
    normalized luma; the matched entry's detail residual is resampled to the
    output tile and blended in with partition-of-unity weights, scaled by
    `detail_gain`. Gain 0 reduces to the bicubic enhancer exactly.
    """

    def __init__(self, bank, detail_gain=DETAIL_GAIN, blend_overlap=None):
        if bank is None or len(bank) == 0:
            raise EmptyBank("exemplar bank is empty")
        self.bank = bank
        self.detail_gain = float(detail_gain)
        self.blend_overlap = (
            bank.tile // 2 if blend_overlap is None else int(blend_overlap)
        )
        self.descriptor = EnhancerDescriptor("exemplar", "one-shot", 1 << 30, True)

    def enhance(self, request):
        self._check(request)
        lr = request.lr_patch
        out_h, out_w = request.output_shape
        up = resample_to(lr, out_h, out_w)
        if self.detail_gain == 0.0:
            return up
        tile = self.bank.tile
        lh, lw = lr.shape[:2]
        if lh < tile or lw < tile:
            return up
        luma = imageio.rgb_to_luma(lr)
        zy = out_h / lh
        zx = out_w / lw
        t_out_h = round_half_up(tile * zy)
        t_out_w = round_half_up(tile * zx)
        detail_acc = np.zeros((out_h, out_w, 3), dtype=np.float32)
        weight_acc = np.zeros((out_h, out_w), dtype=np.float32)
        win = np.outer(
            _cosine_profile(t_out_h, round_half_up(self.blend_overlap * zy)),
            _cosine_profile(t_out_w, round_half_up(self.blend_overlap * zx)),
        ).astype(np.float32)
        stride = max(1, tile - self.blend_overlap)
        for ty in _cover_origins(lh, tile, stride):
            for tx in _cover_origins(lw, tile, stride):
                desc = _normalized_tile(luma[ty : ty + tile, tx : tx + tile])
                oy = min(round_half_up(ty * zy), out_h - t_out_h)
                ox = min(round_half_up(tx * zx), out_w - t_out_w)
                if desc is None:
                    continue  # flat tile: nothing to transfer
                entry = self.bank.nearest(desc)
                det = self.bank.details[entry]
                if det.shape[:2] != (t_out_h, t_out_w):
                    det = _resample_detail(det, t_out_h, t_out_w)
                detail_acc[oy : oy + t_out_h, ox : ox + t_out_w] += det * win[:, :, None]
                weight_acc[oy : oy + t_out_h, ox : ox + t_out_w] += win
        covered = weight_acc > 0
        detail_acc[covered] /= weight_acc[covered][:, None]
        return np.clip(up + self.detail_gain * detail_acc, 0.0, 1.0)


def _resample_detail(det, out_h, out_w):
    # detail residuals are signed; remap [-1, 1] onto [0, 1] for the clamped
    # resampler and back
    shifted = resample_to(det * 0.5 + 0.5, out_h, out_w)
    return (shifted - 0.5) * 2.0


class IterativeProxyEnhancer(Enhancer):
    """Per-step mover toward a target enhancer's output.

    Step k of K moves the current estimate 1/(K - k) of the way to the
    target, so an isolated window lands exactly on the target after K steps
    while overlapping windows negotiate a blend step by step.
    """

    def __init__(self, target):
        self.target = target
        self.descriptor = EnhancerDescriptor(
            f"iterative({target.descriptor.name})", "iterative",
            target.descriptor.max_input, target.descriptor.deterministic,
        )

    def enhance(self, request):
        return self.target.enhance(request)

    def enhance_step(self, request, current_estimate):
        target = self.target.enhance(request)
        if current_estimate.shape != target.shape:
            raise DimensionMismatch(
                f"estimate {current_estimate.shape} vs output {target.shape}"
            )
        k = request.step_index
        remaining = request.step_count - k
        return current_estimate + (target - current_estimate) / float(remaining)
