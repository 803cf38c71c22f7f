"""Paired patch dataset construction: register each close-up's region in the
full image, color-match, degrade, and sample pixel-aligned (HR, LR) patches.

The LR patch of a pair is a crop of the fully degraded close-up at the scaled
origin, so alignment holds by construction; `verify_alignment` re-runs the
degradation on a block-aligned neighborhood of each pair to confirm it.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import degrade as deg
from . import geometry, imageio
from .degrade import DegradationRecipe, round_half_up
from .errors import (
    DegradedPatchTooSmall,
    FootprintOutsideImage,
    ManifestCorrupt,
    PatchTooLarge,
)

PATCH_SIZE = 512
MIN_LR_PATCH = 16
CORRUPT_DEVIATION = 0.1


@dataclass
class CaptureSet:
    """A full-view image plus registered close-ups."""

    full: np.ndarray
    closeups: list
    transforms: list  # close-up -> full, one per close-up
    scales: list

    def __post_init__(self):
        n = len(self.closeups)
        if n < 1:
            raise ValueError("need at least one close-up")
        if len(self.transforms) != n or len(self.scales) != n:
            raise ValueError("transforms/scales must match close-up count")
        for s in self.scales:
            if not 0.0 < s < 1.0:
                raise ValueError(f"close-up scale must be in (0, 1), got {s}")


@dataclass
class PairRecord:
    pair_id: int
    closeup: int
    hr_path: str
    lr_path: str
    origin: tuple  # (x, y) in close-up pixels


@dataclass
class Manifest:
    root: Path
    seed: int
    patch_size: int
    closeups: list  # dicts: scale, recipe, color, degraded
    pairs: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "seed": self.seed,
            "patch_size": self.patch_size,
            "closeups": self.closeups,
            "pairs": [
                {
                    "id": p.pair_id,
                    "closeup": p.closeup,
                    "hr": p.hr_path,
                    "lr": p.lr_path,
                    "origin": list(p.origin),
                }
                for p in self.pairs
            ],
        }


def clipped_footprint_aabb(transform, closeup_shape, full_shape):
    """Close-up footprint in full-image pixels, clipped to bounds."""
    ch, cw = closeup_shape[:2]
    fh, fw = full_shape[:2]
    fp = geometry.map_footprint(transform, cw, ch)
    x0, y0, x1, y1 = fp.aabb
    ix0 = max(0, int(np.floor(x0)))
    iy0 = max(0, int(np.floor(y0)))
    ix1 = min(fw, int(np.ceil(x1)))
    iy1 = min(fh, int(np.ceil(y1)))
    if ix1 <= ix0 or iy1 <= iy0:
        raise FootprintOutsideImage(
            f"footprint {fp.aabb} does not intersect {fw}x{fh} image"
        )
    clipped = (ix0, iy0, ix1, iy1) != (
        int(np.floor(x0)),
        int(np.floor(y0)),
        int(np.ceil(x1)),
        int(np.ceil(y1)),
    )
    return (ix0, iy0, ix1, iy1), clipped


def prepare_closeup(captureset, i, recipe=None):
    """Color-match close-up i to its full-image region and degrade it.

    Returns (color_matched, degraded, applied recipe). The JPEG step engages
    when the reference region is visibly blockier than the downscaled
    close-up.
    """
    closeup = captureset.closeups[i]
    transform = captureset.transforms[i]
    aabb, clipped = clipped_footprint_aabb(
        transform, closeup.shape, captureset.full.shape
    )
    if clipped:
        import logging

        logging.getLogger(__name__).warning(
            "close-up %d footprint clipped to image bounds %s", i, aabb
        )
    stats = deg.color_stats(captureset.full, aabb)
    matched = deg.match_color(closeup, stats)
    region = captureset.full[aabb[1] : aabb[3], aabb[0] : aabb[2]]
    try:
        ref_block = deg.blockiness(region)
    except Exception:
        ref_block = 1.0
    if recipe is None:
        recipe = DegradationRecipe(scale=captureset.scales[i])
    degraded, applied = deg.degrade(matched, recipe, reference_blockiness=ref_block)
    return matched, degraded, applied


def _max_origin(hr_dim, patch, lr_dim, lr_size, ratio):
    """Largest origin whose rounded LR origin keeps the LR crop in bounds."""
    x = min(hr_dim - patch, int((lr_dim - lr_size + 0.499) / ratio))
    while x > 0 and round_half_up(x * ratio) + lr_size > lr_dim:
        x -= 1
    if x < 0 or round_half_up(x * ratio) + lr_size > lr_dim:
        raise DegradedPatchTooSmall("no valid origin for LR crop")
    return x


def build_manifest(captureset, out_dir, patch_size=PATCH_SIZE, count=0, seed=0):
    """Prepare all close-ups, sample `count` aligned pairs, write everything.

    Sampling draws, in documented order per pair: close-up index, origin x,
    origin y, each uniform, from a PCG64 generator seeded with `seed`.
    """
    out_dir = Path(out_dir)
    (out_dir / "pairs").mkdir(parents=True, exist_ok=True)
    (out_dir / "closeups").mkdir(exist_ok=True)

    closeup_meta = []
    color_images = []
    degraded_images = []
    for i in range(len(captureset.closeups)):
        ch, cw = captureset.closeups[i].shape[:2]
        if patch_size > min(ch, cw):
            raise PatchTooLarge(
                f"patch {patch_size} exceeds close-up {i} dims {cw}x{ch}"
            )
        s = captureset.scales[i]
        if round_half_up(patch_size * s) < MIN_LR_PATCH:
            raise DegradedPatchTooSmall(
                f"round({patch_size} * {s}) < {MIN_LR_PATCH}"
            )
        matched, degraded, recipe = prepare_closeup(captureset, i)
        color_path = f"closeups/{i:03d}_color.png"
        degraded_path = f"closeups/{i:03d}_degraded.png"
        imageio.save_image(out_dir / color_path, matched)
        imageio.save_image(out_dir / degraded_path, degraded)
        # reload-quantized copies are the canonical data everywhere below
        color_images.append(imageio.from_u8(imageio.to_u8(matched)))
        degraded_images.append(imageio.from_u8(imageio.to_u8(degraded)))
        closeup_meta.append(
            {
                "scale": s,
                "recipe": recipe.to_dict(),
                "color": color_path,
                "degraded": degraded_path,
            }
        )

    manifest = Manifest(
        root=out_dir, seed=seed, patch_size=patch_size, closeups=closeup_meta
    )
    rng = np.random.default_rng(seed)
    n_closeups = len(captureset.closeups)
    for pid in range(count):
        ci = int(rng.integers(0, n_closeups))
        hr_img = color_images[ci]
        lr_img = degraded_images[ci]
        s = captureset.scales[ci]
        ch, cw = hr_img.shape[:2]
        dh, dw = lr_img.shape[:2]
        lr_w = round_half_up(patch_size * s)
        lr_h = round_half_up(patch_size * s)
        max_x = _max_origin(cw, patch_size, dw, lr_w, dw / cw)
        max_y = _max_origin(ch, patch_size, dh, lr_h, dh / ch)
        x = int(rng.integers(0, max_x + 1))
        y = int(rng.integers(0, max_y + 1))
        lx = round_half_up(x * dw / cw)
        ly = round_half_up(y * dh / ch)
        hr = hr_img[y : y + patch_size, x : x + patch_size]
        lr = lr_img[ly : ly + lr_h, lx : lx + lr_w]
        hr_path = f"pairs/{pid:06d}_hr.png"
        lr_path = f"pairs/{pid:06d}_lr.png"
        imageio.save_image(out_dir / hr_path, hr)
        imageio.save_image(out_dir / lr_path, lr)
        manifest.pairs.append(PairRecord(pid, ci, hr_path, lr_path, (x, y)))

    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest.to_json_dict(), f, indent=2)
    return manifest


def sample_pairs(captureset, patch_size, count, seed, out_dir):
    """Spec-facing alias: build the on-disk manifest for a capture set."""
    return build_manifest(captureset, out_dir, patch_size, count, seed)


def load_manifest(path):
    root = Path(path)
    try:
        with open(root / "manifest.json") as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestCorrupt(f"cannot read manifest.json: {e}")
    pairs = [
        PairRecord(p["id"], p["closeup"], p["hr"], p["lr"], tuple(p["origin"]))
        for p in d["pairs"]
    ]
    return Manifest(
        root=root,
        seed=d["seed"],
        patch_size=d["patch_size"],
        closeups=d["closeups"],
        pairs=pairs,
    )


@dataclass
class AlignmentReport:
    deviations: list  # (pair_id, mean abs deviation)
    flagged: list  # pair ids with deviation above the corruption threshold

    @property
    def mean_deviation(self):
        if not self.deviations:
            return 0.0
        return float(np.mean([d for _, d in self.deviations]))


def _load_patch(root, rel):
    path = Path(root) / rel
    if not path.exists():
        raise ManifestCorrupt(f"missing file {rel}")
    return imageio.load_image(path)


def verify_alignment(manifest, threshold=CORRUPT_DEVIATION):
    """Re-run the degradation around each pair and compare to the stored LR.

    The recompute works on a 16px-aligned LR neighborhood (JPEG MCU grid) so
    block phase matches the whole-image computation; remaining deviation is
    crop-boundary kernel support, which the margin absorbs.
    """
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    root = manifest.root
    color_cache = {}
    degraded_dims = {}
    deviations = []
    flagged = []
    for pair in manifest.pairs:
        ci = pair.closeup
        meta = manifest.closeups[ci]
        recipe = DegradationRecipe.from_dict(meta["recipe"])
        if ci not in color_cache:
            color_cache[ci] = _load_patch(root, meta["color"])
            dimg = _load_patch(root, meta["degraded"])
            degraded_dims[ci] = dimg.shape[:2]
        cimg = color_cache[ci]
        dh, dw = degraded_dims[ci]
        lr = _load_patch(root, pair.lr_path)
        lr_h, lr_w = lr.shape[:2]
        x, y = pair.origin
        lx = round_half_up(x * dw / cimg.shape[1])
        ly = round_half_up(y * dh / cimg.shape[0])
        recomputed = _recompute_region(
            cimg, (dh, dw), recipe, lx, ly, lr_w, lr_h
        )
        dev = float(np.abs(recomputed - lr).mean())
        deviations.append((pair.pair_id, dev))
        if dev > threshold:
            flagged.append(pair.pair_id)
    return AlignmentReport(deviations=deviations, flagged=flagged)


def _recompute_region(color_img, degraded_shape, recipe, lx, ly, lr_w, lr_h):
    """Recompute the degraded image on an MCU-aligned neighborhood of a crop."""
    ch, cw = color_img.shape[:2]
    dh, dw = degraded_shape
    scale_x = cw / dw
    scale_y = ch / dh
    nx0 = max(0, 16 * int(np.floor((lx - 16) / 16)))
    ny0 = max(0, 16 * int(np.floor((ly - 16) / 16)))
    nx1 = min(dw, 16 * int(np.ceil((lx + lr_w + 16) / 16)))
    ny1 = min(dh, 16 * int(np.ceil((ly + lr_h + 16) / 16)))
    nw = nx1 - nx0
    nh = ny1 - ny0

    # stage 1: scale-s downsample, world-aligned to the full computation
    hx0 = max(0, int(np.floor((nx0 + 0.5) * scale_x - 0.5)) - 2)
    hy0 = max(0, int(np.floor((ny0 + 0.5) * scale_y - 0.5)) - 2)
    hx1 = min(cw, int(np.ceil((nx1 - 0.5) * scale_x - 0.5)) + 3)
    hy1 = min(ch, int(np.ceil((ny1 - 0.5) * scale_y - 0.5)) + 3)
    hr_crop = color_img[hy0:hy1, hx0:hx1]
    nb = deg.resample_affine(
        hr_crop,
        (nh, nw),
        (scale_y, scale_x),
        (ny0 * scale_y - hy0, nx0 * scale_x - hx0),
    )

    # stage 2: blur round trip at the degraded scale
    if recipe.extra_downsample > 1:
        sh = max(1, round_half_up(dh / recipe.extra_downsample))
        sw = max(1, round_half_up(dw / recipe.extra_downsample))
        s2y = dh / sh
        s2x = dw / sw
        m_x0 = max(0, int(np.floor((nx0 + 0.5) / s2x - 0.5)) - 2)
        m_y0 = max(0, int(np.floor((ny0 + 0.5) / s2y - 0.5)) - 2)
        m_x1 = min(sw, int(np.ceil((nx1 - 0.5) / s2x - 0.5)) + 3)
        m_y1 = min(sh, int(np.ceil((ny1 - 0.5) / s2y - 0.5)) + 3)
        half = deg.resample_affine(
            nb,
            (m_y1 - m_y0, m_x1 - m_x0),
            (s2y, s2x),
            (m_y0 * s2y - ny0, m_x0 * s2x - nx0),
        )
        nb = deg.resample_affine(
            half,
            (nh, nw),
            (sh / dh, sw / dw),
            (ny0 * sh / dh - m_y0, nx0 * sw / dw - m_x0),
        )

    # stage 3: JPEG on the MCU-aligned neighborhood
    if recipe.jpeg_enabled:
        nb = deg.jpeg_roundtrip(nb, recipe.jpeg_quality)

    nb = imageio.from_u8(imageio.to_u8(nb))
    return nb[ly - ny0 : ly - ny0 + lr_h, lx - nx0 : lx - nx0 + lr_w]
