"""Point tracking across bridging videos and segment-chained registration.

Videos are consumed as directories of numbered frames (luma in [0, 1]).
Tracking is frame-to-frame ZNCC template matching with sub-pixel parabolic
refinement; a fresh point grid is started at every segment boundary, so no
track survives across segments. Externally produced tracks can be ingested
from a JSON file instead.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry, imageio
from .errors import (
    EmptySequence,
    InvalidGrid,
    InvalidSplit,
    NoConsensus,
    TooFewValidTracks,
)

SEGMENT_LENGTH = 12
GRID_ROWS = 20
GRID_COLS = 20
GRID_MARGIN = 0.1
PATCH_RADIUS = 15
SEARCH_RADIUS = 31
MIN_ZNCC = 0.5


@dataclass
class FrameSequence:
    """Ordered stack of same-sized luma frames, shape (N, H, W), values in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise EmptySequence("need a (N, H, W) stack with N >= 1")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]


@dataclass
class TrackResult:
    """Per-frame positions (F, P, 2) as (x, y) and validity flags (F, P)."""

    positions: np.ndarray
    valid: np.ndarray

    @property
    def frame_count(self):
        return self.positions.shape[0]

    @property
    def point_count(self):
        return self.positions.shape[1]

    def to_json_dict(self):
        return {
            "frame_count": int(self.frame_count),
            "points": int(self.point_count),
            "positions": self.positions.tolist(),
            "valid": self.valid.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d):
        positions = np.asarray(d["positions"], dtype=np.float64)
        valid = np.asarray(d["valid"], dtype=bool)
        if positions.shape != (d["frame_count"], d["points"], 2):
            raise ValueError("positions shape does not match frame_count/points")
        if valid.shape != positions.shape[:2]:
            raise ValueError("valid shape does not match positions")
        return cls(positions=positions, valid=valid)


@dataclass(frozen=True)
class SegmentRange:
    start_frame: int
    end_frame: int  # inclusive


@dataclass
class RegistrationResult:
    segment_transforms: list  # one list per video
    video_transforms: list
    cumulative: geometry.SimilarityTransform2D
    scale: float
    segment_inlier_counts: list = field(default_factory=list)


_FRAME_RE = re.compile(r"frame_(\d+)\.png$")


def load_frame_dir(path):
    """Read frame_000000.png ... as a luma FrameSequence (RGB uses Rec. 709)."""
    from pathlib import Path

    files = sorted(
        (p for p in Path(path).iterdir() if _FRAME_RE.search(p.name)),
        key=lambda p: int(_FRAME_RE.search(p.name).group(1)),
    )
    if not files:
        raise EmptySequence(f"no frame_*.png files in {path}")
    frames = [imageio.load_luma(f) for f in files]
    return FrameSequence(frames=np.stack(frames))


def init_grid(width, height, rows=GRID_ROWS, cols=GRID_COLS, margin=GRID_MARGIN):
    """Evenly spaced rows x cols points inside a margin border, as (x, y)."""
    if rows < 2 or cols < 2:
        raise InvalidGrid(f"need rows, cols >= 2, got {rows}x{cols}")
    if not 0.0 <= margin < 0.5:
        raise InvalidGrid(f"margin must be in [0, 0.5), got {margin}")
    xs = np.linspace(margin * width, (1.0 - margin) * width - 1.0, cols)
    ys = np.linspace(margin * height, (1.0 - margin) * height - 1.0, rows)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def split_segments(frame_count, segment_length=SEGMENT_LENGTH):
    """Consecutive ranges sharing one boundary frame, covering all frames."""
    if frame_count < 2:
        raise InvalidSplit(f"need >= 2 frames, got {frame_count}")
    if segment_length < 2:
        raise InvalidSplit(f"need segment_length >= 2, got {segment_length}")
    segments = []
    start = 0
    while True:
        end = min(start + segment_length - 1, frame_count - 1)
        segments.append(SegmentRange(start, end))
        if end == frame_count - 1:
            return segments
        start = end


def track_segment(
    seq,
    points,
    patch_radius=PATCH_RADIUS,
    search_radius=SEARCH_RADIUS,
    min_zncc=MIN_ZNCC,
):
    """Track points frame-to-frame through a sequence.

    Each point's template from frame k is matched in frame k+1 within the
    search window; best-ZNCC location with parabolic sub-pixel refinement.
    Points whose peak score drops below `min_zncc` or whose windows leave the
    frame go invalid and stay invalid.
    """
    if len(seq) < 1:
        raise EmptySequence("empty frame sequence")
    if patch_radius < 2 or search_radius < 1:
        raise ValueError("patch_radius >= 2 and search_radius >= 1 required")
    points = np.asarray(points, dtype=np.float64)
    n_frames = len(seq)
    n_pts = points.shape[0]
    positions = np.zeros((n_frames, n_pts, 2), dtype=np.float64)
    valid = np.zeros((n_frames, n_pts), dtype=bool)
    positions[0] = points
    inside = (
        (points[:, 0] >= 0)
        & (points[:, 0] <= seq.width - 1)
        & (points[:, 1] >= 0)
        & (points[:, 1] <= seq.height - 1)
    )
    valid[0] = inside
    for k in range(n_frames - 1):
        new_pts, ok, _scores = _kernels.zncc_search(
            seq.frames[k],
            seq.frames[k + 1],
            positions[k],
            valid[k],
            int(patch_radius),
            int(search_radius),
            float(min_zncc),
        )
        positions[k + 1] = np.where(ok[:, None], new_pts, positions[k])
        valid[k + 1] = valid[k] & ok
    return TrackResult(positions=positions, valid=valid)


def correspondences_from_tracks(tracks, first=0, last=None):
    """(src, dst) arrays from tracks valid at both endpoint frames."""
    if last is None:
        last = tracks.frame_count - 1
    keep = tracks.valid[first] & tracks.valid[last]
    return tracks.positions[first][keep], tracks.positions[last][keep]


def estimate_from_tracks(tracks, ransac_threshold, ransac_iterations, seed):
    src, dst = correspondences_from_tracks(tracks)
    if src.shape[0] < 2:
        raise TooFewValidTracks(f"only {src.shape[0]} tracks survived")
    transform, mask = geometry.ransac_similarity(
        src, dst, ransac_threshold, ransac_iterations, seed
    )
    return transform, int(mask.sum())


def register_video(
    seq,
    segment_length=SEGMENT_LENGTH,
    grid_rows=GRID_ROWS,
    grid_cols=GRID_COLS,
    grid_margin=GRID_MARGIN,
    patch_radius=PATCH_RADIUS,
    search_radius=SEARCH_RADIUS,
    min_zncc=MIN_ZNCC,
    ransac_threshold=geometry.RANSAC_THRESHOLD,
    ransac_iterations=geometry.RANSAC_ITERATIONS,
    seed=0,
):
    """Per-segment transforms for one video plus their chained composite.

    A fresh grid is initialized at each segment start; the segment transform
    maps coordinates in its first frame to its last frame.
    """
    if len(seq) < 2:
        raise EmptySequence("need >= 2 frames to register")
    segments = split_segments(len(seq), segment_length)
    grid = init_grid(seq.width, seq.height, grid_rows, grid_cols, grid_margin)
    transforms = []
    inlier_counts = []
    for si, seg in enumerate(segments):
        sub = FrameSequence(seq.frames[seg.start_frame : seg.end_frame + 1])
        tracks = track_segment(sub, grid, patch_radius, search_radius, min_zncc)
        try:
            transform, inliers = estimate_from_tracks(
                tracks, ransac_threshold, ransac_iterations, seed + 9973 * si
            )
        except (NoConsensus, TooFewValidTracks) as e:
            raise type(e)(f"segment {si} (frames {seg.start_frame}-{seg.end_frame}): {e}")
        transforms.append(transform)
        inlier_counts.append(inliers)
    return transforms, geometry.chain(transforms), inlier_counts


def register_sequence(videos, track_overrides=None, **kwargs):
    """Register a list of bridging videos and chain their transforms.

    `videos` is ordered earliest-to-latest (close-up end first, full-view end
    last); the result's cumulative transform maps first-video first-frame
    coordinates into last-video last-frame coordinates, and `scale` is the
    scale of that composite. `track_overrides` may supply a TrackResult per
    video (or None) to bypass the built-in tracker.
    """
    if not videos:
        raise EmptySequence("no videos")
    ransac_threshold = kwargs.get("ransac_threshold", geometry.RANSAC_THRESHOLD)
    ransac_iterations = kwargs.get("ransac_iterations", geometry.RANSAC_ITERATIONS)
    seed = kwargs.get("seed", 0)
    per_video_segments = []
    video_transforms = []
    inlier_counts = []
    for vi, video in enumerate(videos):
        override = track_overrides[vi] if track_overrides else None
        if override is not None:
            try:
                transform, inliers = estimate_from_tracks(
                    override, ransac_threshold, ransac_iterations, seed + 7919 * vi
                )
            except (NoConsensus, TooFewValidTracks) as e:
                raise type(e)(f"video {vi} (ingested tracks): {e}")
            segs = [transform]
            counts = [inliers]
        else:
            try:
                segs, transform, counts = register_video(
                    video, seed=seed + 7919 * vi, **{
                        k: v for k, v in kwargs.items() if k != "seed"
                    }
                )
            except (NoConsensus, TooFewValidTracks) as e:
                raise type(e)(f"video {vi}: {e}")
        per_video_segments.append(segs)
        video_transforms.append(transform)
        inlier_counts.append(counts)
    cumulative = geometry.chain(video_transforms)
    return RegistrationResult(
        segment_transforms=per_video_segments,
        video_transforms=video_transforms,
        cumulative=cumulative,
        scale=geometry.extract_scale(cumulative),
        segment_inlier_counts=inlier_counts,
    )


def save_tracks(path, tracks):
    with open(path, "w") as f:
        json.dump(tracks.to_json_dict(), f)


def load_tracks(path):
    with open(path) as f:
        return TrackResult.from_json_dict(json.load(f))
