"""Pipeline CLI: each stage runnable in isolation plus an end-to-end run.

Configuration is a single JSON file; paths are resolved relative to it.
Exit codes: 0 ok, 2 config error, 3 stage failure. `UZ_THREADS` is the
fallback for --threads; --deterministic forces single-threaded accumulation
(accumulation order is row-major and deterministic in any case).
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, fixtures, geometry, imageio, metrics, mosaic
from . import pyramid as pyr
from . import tracker
from .degrade import round_half_up
from .enhance import (
    BicubicEnhancer,
    ExemplarEnhancer,
    IterativeProxyEnhancer,
    build_exemplar_bank,
)
from .errors import ConfigError, StageFailure, UZoomError

DEFAULTS = {
    "registration": {
        "segment_length": tracker.SEGMENT_LENGTH,
        "grid_rows": tracker.GRID_ROWS,
        "grid_cols": tracker.GRID_COLS,
        "grid_margin": tracker.GRID_MARGIN,
        "patch_radius": tracker.PATCH_RADIUS,
        "search_radius": tracker.SEARCH_RADIUS,
        "min_zncc": tracker.MIN_ZNCC,
        "ransac_threshold": geometry.RANSAC_THRESHOLD,
        "ransac_iterations": geometry.RANSAC_ITERATIONS,
        "seed": 0,
    },
    "dataset": {"patch_size": dataset.PATCH_SIZE, "count": 2000, "seed": 0},
    "enhancer": {
        "kind": "exemplar",
        "tile": 16,
        "stride": 8,
        "detail_gain": 1.0,
        "cmd": None,
        "timeout": 300.0,
    },
    "mosaic": {
        "window": mosaic.DEFAULT_WINDOW,
        "stride_min": mosaic.DEFAULT_WINDOW // 2,
        "stride_max": 3 * mosaic.DEFAULT_WINDOW // 4,
        "steps": 1,
        "blend_margin": 32,
        "band_height": mosaic.DEFAULT_BAND_HEIGHT,
        "zoom": None,
        "baseline": True,
    },
    "pyramid": {"tile_size": 256, "overlap": 1, "format": "png"},
    "metrics": {"patch_size": 299, "count": 3000, "seed": 0},
}


def _merge(defaults, overrides):
    out = dict(defaults)
    out.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return out


class Pipeline:
    def __init__(self, config_path, threads=1):
        self.config_path = Path(config_path)
        try:
            with open(self.config_path) as f:
                self.config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {config_path}: {e}")
        self.base = self.config_path.parent
        self.threads = threads
        for key in ("full", "closeups", "videos"):
            if key not in self.config:
                raise ConfigError(f"config missing required key '{key}'")
        if len(self.config["videos"]) != len(self.config["closeups"]):
            raise ConfigError("need exactly one video per close-up")
        for rel in [self.config["full"], *self.config["closeups"], *self.config["videos"]]:
            if not (self.base / rel).exists():
                raise ConfigError(f"path does not exist: {self.base / rel}")
        for tf in self.config.get("track_files") or []:
            if tf is not None and not (self.base / tf).exists():
                raise ConfigError(f"track file does not exist: {self.base / tf}")
        self.out = self.base / self.config.get("output_dir", "out")
        self.out.mkdir(parents=True, exist_ok=True)

    def section(self, name):
        return _merge(DEFAULTS.get(name, {}), self.config.get(name))

    # -- register ----------------------------------------------------------
    def register(self):
        cfg = self.section("registration")
        videos = [
            tracker.load_frame_dir(self.base / v) for v in self.config["videos"]
        ]
        overrides = None
        track_files = self.config.get("track_files")
        if track_files:
            overrides = [
                tracker.load_tracks(self.base / tf) if tf else None
                for tf in track_files
            ]
            print("using ingested track files; built-in tracker skipped where provided")
        result = tracker.register_sequence(videos, track_overrides=overrides, **cfg)
        closeups = []
        for i in range(len(self.config["closeups"])):
            t = geometry.chain(result.video_transforms[i:])
            closeups.append(
                {"transform": t.to_dict(), "scale": geometry.extract_scale(t)}
            )
        payload = {
            "videos": [
                {
                    "transform": result.video_transforms[i].to_dict(),
                    "segments": geometry.chain_to_json(result.segment_transforms[i]),
                    "segment_inliers": result.segment_inlier_counts[i],
                }
                for i in range(len(videos))
            ],
            "closeups": closeups,
            "parameters": cfg,
        }
        with open(self.out / "registration.json", "w") as f:
            json.dump(payload, f, indent=2)
        self._render_overlay(closeups)
        for i, c in enumerate(closeups):
            print(f"close-up {i}: scale {c['scale']:.6f} (zoom {1.0 / c['scale']:.2f}x)")
        return payload

    def _render_overlay(self, closeups):
        from PIL import Image, ImageDraw

        full = imageio.load_image(self.base / self.config["full"])
        img = Image.fromarray(imageio.to_u8(full), mode="RGB")
        draw = ImageDraw.Draw(img)
        for i, c in enumerate(closeups):
            t = geometry.SimilarityTransform2D.from_dict(c["transform"])
            closeup = imageio.load_image(self.base / self.config["closeups"][i])
            fp = geometry.map_footprint(t, closeup.shape[1], closeup.shape[0])
            quad = [tuple(p) for p in fp.quad] + [tuple(fp.quad[0])]
            draw.line(quad, fill=(0, 255, 0), width=2)
        img.save(self.out / "overlay.png")

    def load_registration(self):
        path = self.out / "registration.json"
        if not path.exists():
            raise StageFailure("dataset", f"{path} not found; run register first")
        with open(path) as f:
            return json.load(f)

    # -- dataset -----------------------------------------------------------
    def build_dataset(self):
        reg = self.load_registration()
        cfg = self.section("dataset")
        cs = self.capture_set(reg)
        manifest = dataset.build_manifest(
            cs,
            self.out / "dataset",
            patch_size=cfg["patch_size"],
            count=cfg["count"],
            seed=cfg["seed"],
        )
        report = dataset.verify_alignment(manifest)
        print(
            f"dataset: {len(manifest.pairs)} pairs, alignment mean abs deviation "
            f"{report.mean_deviation:.5f}, flagged {len(report.flagged)}"
        )
        if report.flagged:
            raise StageFailure("dataset", f"misaligned pairs: {report.flagged}")
        return manifest

    def capture_set(self, reg):
        full = imageio.load_image(self.base / self.config["full"])
        closeups = [
            imageio.load_image(self.base / p) for p in self.config["closeups"]
        ]
        transforms = [
            geometry.SimilarityTransform2D.from_dict(c["transform"])
            for c in reg["closeups"]
        ]
        scales = [c["scale"] for c in reg["closeups"]]
        return dataset.CaptureSet(
            full=full, closeups=closeups, transforms=transforms, scales=scales
        )

    # -- enhancer ----------------------------------------------------------
    def make_enhancer(self):
        cfg = self.section("enhancer")
        kind = cfg["kind"]
        if kind == "bicubic":
            return BicubicEnhancer()
        if kind == "external":
            from .worker import ExternalEnhancer

            if not cfg.get("cmd"):
                raise ConfigError("external enhancer needs enhancer.cmd")
            return ExternalEnhancer(cfg["cmd"], timeout=cfg["timeout"])
        manifest = dataset.load_manifest(self.out / "dataset")
        bank = build_exemplar_bank(manifest, tile=cfg["tile"], stride=cfg["stride"])
        enhancer = ExemplarEnhancer(bank, detail_gain=cfg["detail_gain"])
        if kind == "iterative":
            return IterativeProxyEnhancer(enhancer)
        if kind == "exemplar":
            return enhancer
        raise ConfigError(f"unknown enhancer kind {kind!r}")

    # -- mosaic ------------------------------------------------------------
    def zoom_factor(self, reg):
        cfg = self.section("mosaic")
        if cfg["zoom"]:
            return float(cfg["zoom"])
        scales = [c["scale"] for c in reg["closeups"]]
        return float(1.0 / np.exp(np.mean(np.log(scales))))

    def run_mosaic(self, enhancer=None, out_name="canvas", force_bicubic=False):
        reg = self.load_registration()
        cfg = self.section("mosaic")
        full = imageio.load_image(self.base / self.config["full"])
        zoom = self.zoom_factor(reg)
        window = cfg["window"]
        out_w = round_half_up(full.shape[1] * zoom)
        out_h = round_half_up(full.shape[0] * zoom)
        window = min(window, out_w, out_h)
        kernel = mosaic.blend_kernel(window, min(cfg["blend_margin"], window // 2))
        if enhancer is None:
            enhancer = BicubicEnhancer() if force_bicubic else self.make_enhancer()
        steps = int(cfg["steps"])
        canvas_dir = self.out / out_name
        if steps > 1 and not force_bicubic:
            strides = mosaic.stride_schedule(
                steps, min(cfg["stride_min"], window), min(cfg["stride_max"], window)
            )
            schedule = mosaic.build_schedule(out_w, out_h, window, strides)
            if not hasattr(enhancer, "enhance_step"):
                enhancer = IterativeProxyEnhancer(enhancer)
            reader, stats = mosaic.run_iterative(
                full,
                enhancer,
                schedule,
                kernel=kernel,
                out_dir=self.out / f"{out_name}_steps",
                band_height=cfg["band_height"],
                threads=self.threads,
                zoom=zoom,
            )
            reader = quantize_store(reader, canvas_dir)
            with open(self.out / f"{out_name}_schedule.json", "w") as f:
                json.dump(schedule.to_json_dict(), f)
        else:
            reader, stats = mosaic.run_oneshot(
                full,
                enhancer,
                zoom,
                window=window,
                stride=min(cfg["stride_min"], window),
                kernel=kernel,
                out_dir=canvas_dir,
                band_height=cfg["band_height"],
                threads=self.threads,
            )
        print(
            f"{out_name}: {stats.canvas[0]}x{stats.canvas[1]} px, "
            f"{stats.windows} enhancer calls"
        )
        enhancer.close()
        return reader, zoom

    # -- pyramid -----------------------------------------------------------
    def build_pyramid(self, canvas_name="canvas", name="result"):
        cfg = self.section("pyramid")
        canvas_dir = self.out / canvas_name
        if not (canvas_dir / "header.json").exists():
            raise StageFailure("pyramid", f"no canvas store at {canvas_dir}")
        dzi = pyr.build_pyramid(
            canvas_dir,
            self.out,
            name=name,
            tile_size=cfg["tile_size"],
            overlap=cfg["overlap"],
            fmt=cfg["format"],
        )
        print(f"pyramid: {dzi}")
        return dzi

    # -- metrics -----------------------------------------------------------
    def run_metrics(self, canvas_name="canvas"):
        reg = self.load_registration()
        cfg = self.section("metrics")
        full = imageio.load_image(self.base / self.config["full"])
        canvas_dir = self.out / canvas_name
        if not (canvas_dir / "header.json").exists():
            raise StageFailure("metrics", f"no canvas store at {canvas_dir}")
        reader = mosaic.CanvasReader(canvas_dir)
        zoom = self.zoom_factor(reg)
        output = reader.image()
        mae = metrics.lr_mae(full, output, zoom)

        patch = cfg["patch_size"]
        count = cfg["count"]
        side = min(output.shape[0], output.shape[1])
        patch = min(patch, side)
        spec = metrics.PatchSampleSpec(patch_size=patch, count=count, seed=cfg["seed"])
        gen_pos = metrics.sample_patch_positions(
            output.shape[1], output.shape[0], spec
        )
        positions_file = self.out / "patch_positions.json"
        with open(positions_file, "w") as f:
            json.dump(
                {"patch_size": patch, "positions": gen_pos.tolist()}, f
            )
        feats_gen = metrics.features_at_positions(output, gen_pos, patch)

        refs = self._reference_images()
        per_ref = max(2, count // len(refs))
        feats_real = []
        for ri, ref in enumerate(refs):
            rspec = metrics.PatchSampleSpec(
                patch_size=min(patch, min(ref.shape[:2])),
                count=per_ref,
                seed=cfg["seed"] + 1000 + ri,
            )
            pos = metrics.sample_patch_positions(ref.shape[1], ref.shape[0], rspec)
            feats_real.append(
                metrics.features_at_positions(ref, pos, rspec.patch_size)
            )
        feats_real = np.concatenate(feats_real)

        z_gen = metrics.standardize_features(feats_gen, feats_real)
        z_real = metrics.standardize_features(feats_real, feats_real)
        fd = metrics.frechet_distance(
            metrics.gaussian_stats(z_real), metrics.gaussian_stats(z_gen)
        )
        kid = metrics.kernel_distance(z_real, z_gen)
        report = {
            "lr_mae": mae,
            "frechet": fd,
            "kid": kid,
            "patch_spec": {"patch_size": patch, "count": count, "seed": cfg["seed"]},
            "positions_file": str(positions_file),
        }
        with open(self.out / "metrics.json", "w") as f:
            json.dump(report, f, indent=2)
        print(f"metrics: lr_mae {mae:.5f}, frechet {fd:.3f}, kid {kid:.5f}")
        return report

    def _reference_images(self):
        ds_dir = self.out / "dataset"
        refs = []
        if (ds_dir / "manifest.json").exists():
            man = dataset.load_manifest(ds_dir)
            for meta in man.closeups:
                refs.append(imageio.load_image(ds_dir / meta["color"]))
        if not refs:
            refs = [
                imageio.load_image(self.base / p) for p in self.config["closeups"]
            ]
        return refs

    # -- end to end --------------------------------------------------------
    def run_all(self):
        stages = [("register", self.register)]
        enhancer_kind = self.section("enhancer")["kind"]
        if enhancer_kind in ("exemplar", "iterative"):
            stages.append(("dataset", self.build_dataset))
        stages.append(("mosaic", lambda: self.run_mosaic()))
        if self.section("mosaic")["baseline"]:
            stages.append(
                (
                    "baseline",
                    lambda: self.run_mosaic(
                        out_name="baseline_canvas", force_bicubic=True
                    ),
                )
            )
        stages.append(("pyramid", lambda: self.build_pyramid()))
        if self.section("mosaic")["baseline"]:
            stages.append(
                (
                    "baseline-pyramid",
                    lambda: self.build_pyramid("baseline_canvas", name="baseline"),
                )
            )
        stages.append(("metrics", self.run_metrics))

        failed = self.out / "FAILED"
        if failed.exists():
            failed.unlink()
        for name, fn in stages:
            print(f"=== stage: {name}")
            try:
                fn()
            except UZoomError as e:
                failed.write_text(f"{name}: {e}\n")
                raise StageFailure(name, str(e))
        self._write_run_manifest()

    def _write_run_manifest(self):
        manifest = {
            "version": __version__,
            "numpy": np.__version__,
            "config": self.config,
            "resolved": {k: self.section(k) for k in DEFAULTS},
            "threads": self.threads,
        }
        with open(self.out / "run_manifest.json", "w") as f:
            json.dump(manifest, f, indent=2)


def quantize_store(reader, out_dir):
    """Stream-convert a float canvas store to the 8-bit band layout."""
    store = mosaic.CanvasStore(
        out_dir, reader.width, reader.height, reader.band_height, dtype="u8"
    )
    r = 0
    while r < reader.height:
        n = min(reader.band_height, reader.height - r)
        store.write_band(reader.read_rows(r, r + n))
        r += n
    store.close()
    return mosaic.CanvasReader(out_dir)


# ---------------------------------------------------------------------------
# serve

def serve(root, port=8080, viewer_dir=None):
    import http.server

    root = Path(root).resolve()
    viewer = Path(viewer_dir).resolve() if viewer_dir else None

    class Handler(http.server.SimpleHTTPRequestHandler):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, directory=str(root), **kwargs)

        def translate_path(self, path):
            clean = path.split("?", 1)[0].split("#", 1)[0]
            if viewer is not None and clean.startswith("/viewer"):
                rel = clean[len("/viewer") :].lstrip("/") or "index.html"
                return str(viewer / rel)
            return super().translate_path(path)

        def do_POST(self):  # GET-only server
            self.send_error(405)

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", port), Handler)
    print(f"serving {root} on http://127.0.0.1:{port}/ (GET only)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-threaded accumulation",
    )


def _threads(args):
    if args.deterministic:
        return 1
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("UZ_THREADS", "1")))


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="uzoom",
        description="gigapixel zoomable images from a photo plus close-up exemplars",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("register", "build-dataset", "enhance-bank", "zoom", "pyramid", "metrics"):
        _add_common(sub.add_parser(name))

    p = sub.add_parser("make-fixture", help="render a synthetic capture set")
    p.add_argument("--out", required=True)
    p.add_argument("--zoom", type=float, default=8.0)
    p.add_argument("--closeup-size", type=int, default=320)
    p.add_argument("--closeups", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=0.0)

    p = sub.add_parser("serve", help="static file server for pyramids and the viewer")
    p.add_argument("--root", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--viewer", default=None, help="directory with viewer assets")

    args = parser.parse_args(argv)

    try:
        if args.command == "make-fixture":
            out = fixtures.write_capture_fixture(
                args.out,
                zoom=args.zoom,
                closeup_size=args.closeup_size,
                n_closeups=args.closeups,
                seed=args.seed,
                drift_amp=args.drift,
            )
            print(f"fixture written to {out}")
            return 0
        if args.command == "serve":
            return serve(args.root, args.port, args.viewer)

        pipe = Pipeline(args.config, threads=_threads(args))
        if args.command == "register":
            pipe.register()
        elif args.command == "build-dataset":
            pipe.build_dataset()
        elif args.command == "enhance-bank":
            manifest = dataset.load_manifest(pipe.out / "dataset")
            cfg = pipe.section("enhancer")
            bank = build_exemplar_bank(manifest, tile=cfg["tile"], stride=cfg["stride"])
            print(f"exemplar bank: {len(bank)} entries (tile {bank.tile})")
        elif args.command == "zoom":
            pipe.run_all()
        elif args.command == "pyramid":
            pipe.build_pyramid()
        elif args.command == "metrics":
            pipe.run_metrics()
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except UZoomError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
