"""Consistency and distribution metrics: LR-MAE, fixed-position patch
sampling, proxy feature extraction, Fréchet distance, and kernel (MMD²)
distance.

The feature extractor is a hand-rolled 38-dim statistic (no learned weights),
so absolute distances are not comparable to embeddings-based scores; only
orderings between methods are meaningful.
"""

from dataclasses import dataclass, field

import numpy as np

from . import imageio
from .degrade import resample_to, round_half_up
from .errors import (
    DimensionMismatch,
    NotPSD,
    PatchTooLarge,
    TooFewSamples,
    TooSmall,
)

FEATURE_DIM = 38
DEFAULT_PATCH = 299
PSD_TOLERANCE = 1e-6


def lr_mae(full, output, zoom):
    """Mean abs error between the input and the downsampled output."""
    fh, fw = full.shape[:2]
    oh, ow = output.shape[:2]
    if (oh, ow) != (round_half_up(fh * zoom), round_half_up(fw * zoom)):
        raise DimensionMismatch(
            f"output {ow}x{oh} is not round({fw}x{fh} * {zoom})"
        )
    down = resample_to(output, fh, fw)
    return float(np.abs(full.astype(np.float64) - down).mean())


@dataclass
class PatchSampleSpec:
    patch_size: int = DEFAULT_PATCH
    count: int = 0
    seed: int = 0
    positions: list = field(default_factory=list)  # explicit, reusable crops


def sample_patch_positions(width, height, spec):
    """Uniform (x, y) crop origins, deterministic by seed; x then y per draw."""
    p = spec.patch_size
    if p > width or p > height:
        raise PatchTooLarge(f"patch {p} exceeds image {width}x{height}")
    rng = np.random.default_rng(spec.seed)
    out = np.empty((spec.count, 2), dtype=np.int64)
    for i in range(spec.count):
        out[i, 0] = rng.integers(0, width - p + 1)
        out[i, 1] = rng.integers(0, height - p + 1)
    return out


def _box2(luma):
    h, w = luma.shape
    if h % 2:
        luma = np.concatenate([luma, luma[-1:]], axis=0)
    if w % 2:
        luma = np.concatenate([luma, luma[:, -1:]], axis=1)
    return 0.25 * (
        luma[0::2, 0::2] + luma[0::2, 1::2] + luma[1::2, 0::2] + luma[1::2, 1::2]
    )


def _orientation_hist(luma, bins=8):
    # per-pixel mean magnitude per orientation bin: carries both the edge
    # direction distribution and the gradient energy (sharpness)
    gy, gx = np.gradient(luma)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)  # [-pi, pi]
    idx = np.clip(((theta + np.pi) / (2 * np.pi / bins)).astype(int), 0, bins - 1)
    hist = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=bins)[:bins]
    return hist / mag.size


def patch_features(patch):
    """38-dim statistic: per-channel mean/std/skew (9), 8-bin gradient
    orientation histograms at two scales (16), 12-bin luma histogram (12),
    and Laplacian-variance sharpness (1)."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        patch = np.repeat(patch[:, :, None], 3, axis=2)
    h, w = patch.shape[:2]
    if h < 32 or w < 32:
        raise TooSmall(f"patch {w}x{h} below 32x32")
    feats = []
    for c in range(3):
        x = patch[:, :, c]
        mu = x.mean()
        sd = x.std()
        skew = float(((x - mu) ** 3).mean() / sd**3) if sd > 1e-8 else 0.0
        feats.extend([mu, sd, skew])
    luma = imageio.rgb_to_luma(patch.astype(np.float32)).astype(np.float64)
    feats.extend(_orientation_hist(luma))
    feats.extend(_orientation_hist(_box2(luma)))
    hist, _ = np.histogram(luma, bins=12, range=(0.0, 1.0))
    feats.extend(hist / luma.size)
    lap = (
        -4.0 * luma[1:-1, 1:-1]
        + luma[:-2, 1:-1]
        + luma[2:, 1:-1]
        + luma[1:-1, :-2]
        + luma[1:-1, 2:]
    )
    feats.append(float(lap.var()))
    out = np.asarray(feats, dtype=np.float64)
    assert out.shape == (FEATURE_DIM,)
    return out


def features_at_positions(image, positions, patch_size):
    return np.stack(
        [
            patch_features(image[y : y + patch_size, x : x + patch_size])
            for x, y in np.asarray(positions)
        ]
    )


def standardize_features(features, reference, clip=10.0):
    """Z-score `features` by the reference set's per-dim mean/std.

    The feature dims span very different numeric scales (channel means vs
    gradient energies); standardizing against the fixed real set keeps every
    dim comparable while preserving orderings across methods. Scores are
    clipped: a dim the reference barely varies on would otherwise blow up
    under the cubic MMD kernel and drown the real signal.
    """
    mu = reference.mean(axis=0)
    sd = reference.std(axis=0)
    sd = np.where(sd < 1e-9, 1.0, sd)
    z = (features - mu) / sd
    return np.clip(z, -clip, clip) if clip else z


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray


def gaussian_stats(features):
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise TooFewSamples("need >= 2 feature vectors")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(mean=mean, cov=np.atleast_2d(cov))


def _psd_sqrt(mat):
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -PSD_TOLERANCE:
        raise NotPSD(f"matrix has eigenvalue {vals.min()}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(stats_a, stats_b):
    """Squared Fréchet distance between two Gaussian summaries.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the matrix square
    root taken by symmetric eigendecomposition of Sa^(1/2) Sb Sa^(1/2).
    """
    if stats_a.mean.shape != stats_b.mean.shape:
        raise DimensionMismatch(
            f"{stats_a.mean.shape} vs {stats_b.mean.shape}"
        )
    diff = stats_a.mean - stats_b.mean
    root_a = _psd_sqrt(stats_a.cov)
    inner = root_a @ stats_b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < -PSD_TOLERANCE:
        raise NotPSD(f"product matrix has eigenvalue {vals.min()}")
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    d2 = float(diff @ diff + np.trace(stats_a.cov) + np.trace(stats_b.cov) - 2.0 * trace_sqrt)
    return max(d2, 0.0)


def kernel_distance(feats_a, feats_b):
    """Unbiased MMD² with the polynomial kernel (x.y/d + 1)^3."""
    a = np.asarray(feats_a, dtype=np.float64)
    b = np.asarray(feats_b, dtype=np.float64)
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise TooFewSamples(f"need >= 2 samples per side, got {m} and {n}")
    d = a.shape[1]
    kaa = (a @ a.T / d + 1.0) ** 3
    kbb = (b @ b.T / d + 1.0) ** 3
    kab = (a @ b.T / d + 1.0) ** 3
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.mean())
