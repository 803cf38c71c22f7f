"""Deep Zoom tile pyramid: build from a streamed canvas, reassemble for tests.

Layout follows the DZI convention: an XML descriptor at ``name.dzi`` and
tiles at ``name_files/{level}/{col}_{row}.{format}``. Level L has dimensions
ceil(dim / 2^(maxLevel - L)); maxLevel = ceil(log2(max(w, h))) is full
resolution and level 0 is 1x1. Levels halve by 2x box filtering.
"""

import math
import shutil
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import imageio
from .errors import CorruptStream, MissingTile
from .mosaic import CanvasReader, CanvasStore

TILE_SIZE = 256
OVERLAP = 1
DZI_NS = "http://schemas.microsoft.com/deepzoom/2008"


@dataclass(frozen=True)
class PyramidDescriptor:
    width: int
    height: int
    tile_size: int
    overlap: int
    fmt: str

    @property
    def max_level(self):
        return max(0, math.ceil(math.log2(max(self.width, self.height))))

    def level_dims(self, level):
        if not 0 <= level <= self.max_level:
            raise MissingTile(f"level {level} outside 0..{self.max_level}")
        shift = self.max_level - level
        return (
            max(1, math.ceil(self.width / (1 << shift))),
            max(1, math.ceil(self.height / (1 << shift))),
        )

    def tile_counts(self, level):
        w, h = self.level_dims(level)
        return math.ceil(w / self.tile_size), math.ceil(h / self.tile_size)


class _ArraySource:
    """Row-reader adapter so in-memory images and canvas stores look alike."""

    def __init__(self, img):
        img = np.asarray(img, dtype=np.float32)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        self.img = img
        self.height, self.width = img.shape[:2]

    def read_rows(self, r0, r1):
        return self.img[r0:r1]


def _as_source(source):
    if isinstance(source, (str, Path)):
        return CanvasReader(source)
    if isinstance(source, np.ndarray):
        return _ArraySource(source)
    if hasattr(source, "read_rows"):
        return source
    raise CorruptStream(f"cannot read canvas from {type(source)!r}")


def _box2_rows(rows, out_w):
    """2x box downsample of a row block with ceil semantics via edge padding."""
    h, w = rows.shape[:2]
    if h % 2:
        rows = np.concatenate([rows, rows[-1:]], axis=0)
    if w % 2:
        rows = np.concatenate([rows, rows[:, -1:]], axis=1)
    out = 0.25 * (
        rows[0::2, 0::2] + rows[0::2, 1::2] + rows[1::2, 0::2] + rows[1::2, 1::2]
    )
    return out[:, :out_w]


def _write_level_tiles(source, level_dir, desc, level_w, level_h):
    level_dir.mkdir(parents=True, exist_ok=True)
    ts = desc.tile_size
    ov = desc.overlap
    cols = math.ceil(level_w / ts)
    rows = math.ceil(level_h / ts)
    for row in range(rows):
        y0 = row * ts - (ov if row > 0 else 0)
        y1 = min((row + 1) * ts + ov, level_h)
        block = source.read_rows(y0, y1)
        for col in range(cols):
            x0 = col * ts - (ov if col > 0 else 0)
            x1 = min((col + 1) * ts + ov, level_w)
            tile = imageio.to_u8(block[:, x0:x1])
            img = Image.fromarray(tile, mode="RGB")
            path = level_dir / f"{col}_{row}.{desc.fmt}"
            if desc.fmt == "jpeg":
                img.save(path, format="JPEG", quality=90, subsampling=2)
            else:
                img.save(path, format="PNG")


def build_pyramid(
    source, out_dir, name="pyramid", tile_size=TILE_SIZE, overlap=OVERLAP, fmt="png"
):
    """Write all levels and the descriptor (descriptor last, as commit point).

    Only the active level and its 2x reduction are materialized on disk at
    once; bands stream through row blocks.
    """
    if fmt not in ("png", "jpeg"):
        raise ValueError(f"format must be png or jpeg, got {fmt}")
    src = _as_source(source)
    out_dir = Path(out_dir)
    desc = PyramidDescriptor(
        width=src.width,
        height=src.height,
        tile_size=tile_size,
        overlap=overlap,
        fmt=fmt,
    )
    files_dir = out_dir / f"{name}_files"
    if files_dir.exists():
        shutil.rmtree(files_dir)
    tmp_root = out_dir / f"{name}_levels_tmp"
    if tmp_root.exists():
        shutil.rmtree(tmp_root)

    current = src
    level = desc.max_level
    while True:
        level_w, level_h = desc.level_dims(level)
        _write_level_tiles(current, files_dir / str(level), desc, level_w, level_h)
        if level == 0:
            break
        next_w, next_h = desc.level_dims(level - 1)
        store = CanvasStore(
            tmp_root / str(level - 1), next_w, next_h, min(tile_size, next_h), "u8"
        )
        r = 0
        while r < next_h:
            n = min(store.band_height, next_h - r)
            block = current.read_rows(2 * r, min(2 * (r + n), level_h))
            store.write_band(_box2_rows(block, next_w))
            r += n
        store.close()
        prev_dir = getattr(current, "path", None)
        current = CanvasReader(tmp_root / str(level - 1))
        if prev_dir is not None and Path(prev_dir).parent == tmp_root:
            shutil.rmtree(prev_dir)
        level -= 1
    if tmp_root.exists():
        shutil.rmtree(tmp_root)

    dzi_path = out_dir / f"{name}.dzi"
    xml = (
        f'<Image TileSize="{tile_size}" Overlap="{overlap}" Format="{fmt}" '
        f'xmlns="{DZI_NS}"><Size Width="{desc.width}" Height="{desc.height}"/>'
        "</Image>"
    )
    dzi_path.write_text(xml, encoding="utf-8")
    return dzi_path


def read_descriptor(dzi_path):
    try:
        root = ET.parse(dzi_path).getroot()
    except (OSError, ET.ParseError) as e:
        raise CorruptStream(f"cannot parse descriptor {dzi_path}: {e}")
    size = root.find(f"{{{DZI_NS}}}Size")
    if size is None:  # tolerate missing namespace
        size = root.find("Size")
    if size is None:
        raise CorruptStream(f"descriptor {dzi_path} has no Size element")
    return PyramidDescriptor(
        width=int(size.get("Width")),
        height=int(size.get("Height")),
        tile_size=int(root.get("TileSize")),
        overlap=int(root.get("Overlap")),
        fmt=root.get("Format"),
    )


def reassemble_level(dzi_path, level):
    """Stitch a level back into one array, honoring tile overlap."""
    dzi_path = Path(dzi_path)
    desc = read_descriptor(dzi_path)
    level_w, level_h = desc.level_dims(level)
    files_dir = dzi_path.parent / f"{dzi_path.stem}_files" / str(level)
    cols, rows = desc.tile_counts(level)
    out = np.zeros((level_h, level_w, 3), dtype=np.float32)
    ts = desc.tile_size
    for row in range(rows):
        for col in range(cols):
            path = files_dir / f"{col}_{row}.{desc.fmt}"
            if not path.exists():
                raise MissingTile(f"missing tile {path}")
            tile = imageio.load_image(path)
            core_x0 = col * ts
            core_y0 = row * ts
            core_x1 = min(core_x0 + ts, level_w)
            core_y1 = min(core_y0 + ts, level_h)
            off_x = desc.overlap if col > 0 else 0
            off_y = desc.overlap if row > 0 else 0
            out[core_y0:core_y1, core_x0:core_x1] = tile[
                off_y : off_y + (core_y1 - core_y0),
                off_x : off_x + (core_x1 - core_x0),
            ]
    return out
