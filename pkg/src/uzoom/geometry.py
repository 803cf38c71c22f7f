"""2D similarity transforms: estimation, RANSAC, chaining, footprints.

A transform maps p' = [[a, -b], [b, a]] p + (tx, ty); the linear part is a
rotation scaled by sqrt(a^2 + b^2), so scale extraction and composition are
exact closed forms.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyChain, NoConsensus

RANSAC_THRESHOLD = 2.0  # px
RANSAC_ITERATIONS = 2000


@dataclass(frozen=True)
class SimilarityTransform2D:
    a: float
    b: float
    tx: float
    ty: float

    def apply(self, pts):
        """Map an (N, 2) array of points."""
        pts = np.asarray(pts, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.empty_like(pts)
        out[:, 0] = self.a * pts[:, 0] - self.b * pts[:, 1] + self.tx
        out[:, 1] = self.b * pts[:, 0] + self.a * pts[:, 1] + self.ty
        return out[0] if single else out

    def to_dict(self):
        return {"a": self.a, "b": self.b, "tx": self.tx, "ty": self.ty}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["a"]), float(d["b"]), float(d["tx"]), float(d["ty"]))

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_scale_rotation(cls, scale, angle_rad=0.0, tx=0.0, ty=0.0):
        return cls(
            scale * np.cos(angle_rad), scale * np.sin(angle_rad), float(tx), float(ty)
        )


@dataclass(frozen=True)
class Footprint:
    quad: np.ndarray  # (4, 2) corner images
    aabb: tuple  # (x0, y0, x1, y1)


def similarity_from_pairs(src, dst):
    """Least-squares similarity mapping src -> dst ((N, 2) arrays).

    Closed form from centroids and cross-covariance terms; exact for
    noise-free consistent pairs.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape[0] < 2 or src.shape != dst.shape:
        raise DegenerateInput(f"need >= 2 point pairs, got {src.shape[0]}")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    ps = src - cs
    pd = dst - cd
    denom = float((ps * ps).sum())
    if denom <= 1e-12:
        raise DegenerateInput("source points coincide")
    a = float((ps[:, 0] * pd[:, 0] + ps[:, 1] * pd[:, 1]).sum()) / denom
    b = float((ps[:, 0] * pd[:, 1] - ps[:, 1] * pd[:, 0]).sum()) / denom
    tx = cd[0] - (a * cs[0] - b * cs[1])
    ty = cd[1] - (b * cs[0] + a * cs[1])
    return SimilarityTransform2D(a, b, float(tx), float(ty))


def residuals(transform, src, dst):
    mapped = transform.apply(src)
    return np.hypot(mapped[:, 0] - dst[:, 0], mapped[:, 1] - dst[:, 1])


def ransac_similarity(
    src,
    dst,
    inlier_threshold=RANSAC_THRESHOLD,
    iterations=RANSAC_ITERATIONS,
    seed=0,
):
    """RANSAC over 2-point minimal samples, refit once on the best inlier set.

    Deterministic for a fixed seed. Ties on inlier count break toward lower
    mean inlier residual. Returns (transform, inlier mask).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if n < 2:
        raise DegenerateInput(f"need >= 2 point pairs, got {n}")
    if inlier_threshold <= 0 or iterations < 1:
        raise ValueError("threshold must be > 0 and iterations >= 1")
    rng = np.random.default_rng(seed)
    # all minimal 2-point hypotheses at once: for a midpoint-centered pair,
    # the least-squares formulas collapse to a = u.v/|u|^2, b = (u x v)/|u|^2
    i = rng.integers(0, n, size=iterations)
    j = rng.integers(0, n - 1, size=iterations)
    j = np.where(j >= i, j + 1, j)
    u = (src[i] - src[j]) / 2.0
    v = (dst[i] - dst[j]) / 2.0
    norm = (u * u).sum(axis=1)
    ok = norm > 1e-18
    norm = np.where(ok, norm, 1.0)
    a = (u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]) / norm
    b = (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]) / norm
    cs = (src[i] + src[j]) / 2.0
    cd = (dst[i] + dst[j]) / 2.0
    tx = cd[:, 0] - (a * cs[:, 0] - b * cs[:, 1])
    ty = cd[:, 1] - (b * cs[:, 0] + a * cs[:, 1])
    mx = a[:, None] * src[None, :, 0] - b[:, None] * src[None, :, 1] + tx[:, None]
    my = b[:, None] * src[None, :, 0] + a[:, None] * src[None, :, 1] + ty[:, None]
    res = np.hypot(mx - dst[None, :, 0], my - dst[None, :, 1])
    inlier = res < inlier_threshold
    counts = np.where(ok, inlier.sum(axis=1), 0)
    sums = np.where(inlier, res, 0.0).sum(axis=1)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
    viable = counts >= 2
    if not viable.any():
        raise NoConsensus("no model with >= 2 inliers")
    # highest count wins; ties break toward lower mean inlier residual
    order = np.lexsort((means, -counts))
    best_mask = inlier[order[0]]
    refit = similarity_from_pairs(src[best_mask], dst[best_mask])
    # trim consensus points whose residual is far outside the robust scale:
    # an outlier that lands inside the threshold band would otherwise drag
    # the least-squares fit
    res = residuals(refit, src[best_mask], dst[best_mask])
    med = np.median(res)
    mad = np.median(np.abs(res - med))
    keep = res <= med + 5.0 * mad + 1e-9
    if 2 <= keep.sum() < best_mask.sum():
        refit = similarity_from_pairs(src[best_mask][keep], dst[best_mask][keep])
    final_mask = residuals(refit, src, dst) < inlier_threshold
    if final_mask.sum() < 2:
        final_mask = best_mask
        refit = similarity_from_pairs(src[best_mask], dst[best_mask])
    return refit, final_mask


def compose(second, first):
    """Transform equal to applying `first`, then `second`."""
    a = second.a * first.a - second.b * first.b
    b = second.b * first.a + second.a * first.b
    tx = second.a * first.tx - second.b * first.ty + second.tx
    ty = second.b * first.tx + second.a * first.ty + second.ty
    return SimilarityTransform2D(a, b, tx, ty)


def chain(transforms):
    """Compose a list ordered earliest-to-latest: chain([T1, T2]) = T2 . T1."""
    transforms = list(transforms)
    if not transforms:
        raise EmptyChain("chain of zero transforms")
    out = transforms[0]
    for t in transforms[1:]:
        out = compose(t, out)
    return out


def extract_scale(transform):
    """sqrt of the determinant of the linear part; > 0 for valid transforms."""
    s = float(np.hypot(transform.a, transform.b))
    if s <= 0.0:
        raise DegenerateInput("zero linear part")
    return s


def invert(transform):
    d = transform.a**2 + transform.b**2
    if d <= 0.0:
        raise DegenerateInput("zero linear part")
    ia = transform.a / d
    ib = -transform.b / d
    tx = -(ia * transform.tx - ib * transform.ty)
    ty = -(ib * transform.tx + ia * transform.ty)
    return SimilarityTransform2D(ia, ib, tx, ty)


def map_footprint(transform, width, height):
    """Image of the (0,0)-(width,height) rectangle under the transform."""
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    corners = np.array(
        [[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]], dtype=np.float64
    )
    quad = transform.apply(corners)
    x0, y0 = quad.min(axis=0)
    x1, y1 = quad.max(axis=0)
    return Footprint(quad=quad, aabb=(float(x0), float(y0), float(x1), float(y1)))


def chain_to_json(transforms):
    return [t.to_dict() for t in transforms]


def chain_from_json(items):
    return [SimilarityTransform2D.from_dict(d) for d in items]
