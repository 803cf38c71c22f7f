"""Synthetic capture fixtures rendered from a procedural master texture.

Real handheld captures are not shippable test assets, so tests and demos use
views rendered from one master image with known per-frame geometry: the
close-up is a native-resolution view, the full shot is a zoomed-out view of
the whole master, and the bridging video dollies between them. Ground-truth
transforms come from the same view algebra the renderer uses.
"""

import json
from pathlib import Path

import numpy as np

from . import geometry, imageio
from .degrade import resample_affine, resample_to
from .tracker import FrameSequence


def value_noise(height, width, seed=0, octaves=(4, 8, 16, 32, 64), lo=0.08, hi=0.92):
    """Multi-octave smooth value noise in [lo, hi], float32."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((height, width), dtype=np.float32)
    for wavelength in octaves:
        gh = max(2, int(np.ceil(height / wavelength)) + 1)
        gw = max(2, int(np.ceil(width / wavelength)) + 1)
        grid = rng.random((gh, gw), dtype=np.float32)
        acc += np.sqrt(wavelength) * resample_to(grid, height, width)
    acc -= acc.min()
    peak = acc.max()
    if peak > 0:
        acc /= peak
    return (lo + (hi - lo) * acc).astype(np.float32)


def noise_texture_rgb(height, width, seed=0, chroma=0.12):
    """RGB master texture: shared luma structure plus mild per-channel tint."""
    base = value_noise(height, width, seed)
    rng_seeds = [seed + 101, seed + 202, seed + 303]
    out = np.empty((height, width, 3), dtype=np.float32)
    for c in range(3):
        tint = value_noise(height, width, rng_seeds[c], octaves=(32, 64))
        out[:, :, c] = base + chroma * (tint - 0.5)
    return np.clip(out, 0.0, 1.0)


def view_to_master_transform(sigma, center_xy, view_w, view_h):
    """Similarity mapping view pixel indices to master pixel indices."""
    cx, cy = center_xy
    return geometry.SimilarityTransform2D(
        a=float(sigma),
        b=0.0,
        tx=float(cx - sigma * (view_w - 1) / 2.0),
        ty=float(cy - sigma * (view_h - 1) / 2.0),
    )


def render_view(master, sigma, center_xy, view_h, view_w):
    """Render what a camera sees: a sigma-scaled view centered on the master."""
    cx, cy = center_xy
    off_y = cy - sigma * view_h / 2.0 + 0.5
    off_x = cx - sigma * view_w / 2.0 + 0.5
    return resample_affine(master, (view_h, view_w), (sigma, sigma), (off_y, off_x))


def true_transform(sigma_a, center_a, sigma_b, center_b, view_w, view_h):
    """Ground-truth similarity mapping view-A pixels to view-B pixels."""
    to_master_a = view_to_master_transform(sigma_a, center_a, view_w, view_h)
    to_master_b = view_to_master_transform(sigma_b, center_b, view_w, view_h)
    return geometry.compose(geometry.invert(to_master_b), to_master_a)


def zoom_sigmas(sigma_start, sigma_end, n_frames):
    k = np.arange(n_frames)
    return sigma_start * (sigma_end / sigma_start) ** (k / (n_frames - 1))


def frames_for_zoom(zoom, per_frame=1.055):
    return max(2, int(np.ceil(np.log(zoom) / np.log(per_frame))) + 1)


def make_zoom_video(
    master_luma,
    sigma_start,
    sigma_end,
    n_frames,
    view_size,
    center_start=None,
    center_end=None,
    drift_amp=0.0,
    seed=0,
):
    """Render a dolly video between two views; returns (frames, truth transform).

    Centers interpolate linearly in master coordinates; `drift_amp` adds a
    smooth handheld-like wobble (master px) that starts and ends at zero so
    the endpoint geometry stays exact.
    """
    mh, mw = master_luma.shape[:2]
    if center_start is None:
        center_start = (mw / 2.0, mh / 2.0)
    if center_end is None:
        center_end = center_start
    sigmas = zoom_sigmas(sigma_start, sigma_end, n_frames)
    t = np.linspace(0.0, 1.0, n_frames)
    cxs = center_start[0] + (center_end[0] - center_start[0]) * t
    cys = center_start[1] + (center_end[1] - center_start[1]) * t
    if drift_amp > 0:
        rng = np.random.default_rng(seed)
        ph = rng.uniform(0, 2 * np.pi, size=4)
        wob = np.sin(np.pi * t)  # zero at both ends
        cxs = cxs + drift_amp * wob * np.sin(2 * np.pi * t * 1.7 + ph[0])
        cys = cys + drift_amp * wob * np.sin(2 * np.pi * t * 2.3 + ph[1])
    frames = np.stack(
        [
            render_view(master_luma, sigmas[k], (cxs[k], cys[k]), view_size, view_size)
            for k in range(n_frames)
        ]
    )
    truth = true_transform(
        sigmas[0],
        (cxs[0], cys[0]),
        sigmas[-1],
        (cxs[-1], cys[-1]),
        view_size,
        view_size,
    )
    return FrameSequence(frames), truth


def make_registration_fixture(zoom, view_size=192, seed=0, drift_amp=0.0):
    """In-memory dolly-out fixture: (video, truth transform, true scale 1/zoom)."""
    master_size = int(round(zoom * view_size))
    master = value_noise(master_size, master_size, seed)
    n_frames = frames_for_zoom(zoom)
    video, truth = make_zoom_video(
        master, 1.0, float(zoom), n_frames, view_size, drift_amp=drift_amp, seed=seed
    )
    return video, truth, 1.0 / zoom


def write_capture_fixture(
    out_dir,
    zoom=8.0,
    closeup_size=320,
    n_closeups=1,
    seed=0,
    drift_amp=0.0,
):
    """Write a full capture set: full.png, closeups, bridging videos, truth.json.

    The full shot is the final video frame's view (the whole master seen at
    scale 1/zoom); each close-up is a native-scale view. Returns the fixture
    directory path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master_size = int(round(zoom * closeup_size))
    master = noise_texture_rgb(master_size, master_size, seed)
    master_luma = imageio.rgb_to_luma(master)
    full_center = (master_size / 2.0, master_size / 2.0)

    # close-up centers: single at master center, else spread horizontally
    centers = []
    for i in range(n_closeups):
        if n_closeups == 1:
            centers.append(full_center)
        else:
            frac = (i + 1) / (n_closeups + 1)
            centers.append((master_size * frac, master_size / 2.0))

    closeup_names = []
    for i, c in enumerate(centers):
        closeup = render_view(master, 1.0, c, closeup_size, closeup_size)
        name = f"closeup_{i:02d}.png"
        imageio.save_image(out_dir / name, closeup)
        closeup_names.append(name)

    full = render_view(master, zoom, full_center, closeup_size, closeup_size)
    imageio.save_image(out_dir / "full.png", full)

    video_names = []
    truths = []
    for i in range(n_closeups):
        if i < n_closeups - 1:  # pan between consecutive close-ups at native scale
            n_frames = max(
                2, int(np.ceil(np.hypot(*(np.subtract(centers[i + 1], centers[i]))) / 10.0)) + 1
            )
            video, truth = make_zoom_video(
                master_luma,
                1.0,
                1.0,
                n_frames,
                closeup_size,
                center_start=centers[i],
                center_end=centers[i + 1],
                drift_amp=drift_amp,
                seed=seed + i,
            )
        else:  # dolly out from the last close-up to the full view
            video, truth = make_zoom_video(
                master_luma,
                1.0,
                zoom,
                frames_for_zoom(zoom),
                closeup_size,
                center_start=centers[i],
                center_end=full_center,
                drift_amp=drift_amp,
                seed=seed + i,
            )
        vdir = out_dir / f"video_{i:02d}"
        vdir.mkdir(exist_ok=True)
        for k in range(len(video)):
            imageio.save_image(vdir / f"frame_{k:06d}.png", video.frames[k])
        video_names.append(vdir.name)
        truths.append(truth)

    # ground-truth close-up -> full transforms by chaining the remaining videos
    truth_closeups = []
    for i in range(n_closeups):
        t = geometry.chain(truths[i:])
        truth_closeups.append(
            {"transform": t.to_dict(), "scale": geometry.extract_scale(t)}
        )
    with open(out_dir / "truth.json", "w") as f:
        json.dump(
            {
                "zoom": zoom,
                "closeups": truth_closeups,
                "videos": [t.to_dict() for t in truths],
            },
            f,
            indent=2,
        )

    config = {
        "full": "full.png",
        "closeups": closeup_names,
        "videos": video_names,
        "output_dir": "out",
        # tracking parameters sized for the fixture's frame resolution
        "registration": {
            "grid_rows": 12,
            "grid_cols": 12,
            "patch_radius": 9,
            "search_radius": 14,
        },
    }
    with open(out_dir / "config.json", "w") as f:
        json.dump(config, f, indent=2)
    return out_dir
