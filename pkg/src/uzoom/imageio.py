"""Image loading and saving. Images are float32 arrays in [0, 1].

RGB images have shape (H, W, 3); single-channel luma images are (H, W).
PNG is the interchange format; 8-bit quantization uses round-half-up.
"""

import io

import numpy as np
from PIL import Image

# Rec. 709 luma weights
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float32)


def to_u8(img):
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def from_u8(arr):
    return arr.astype(np.float32) / 255.0


def rgb_to_luma(img):
    if img.ndim == 2:
        return img
    return img[..., :3] @ LUMA_WEIGHTS


def load_image(path):
    """Load a PNG/JPEG as float32 RGB (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_u8(arr)


def load_luma(path):
    """Load an image as single-channel float32 luma."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            arr = np.asarray(im.convert("L"))
            return from_u8(arr)
        arr = np.asarray(im.convert("RGB"))
    return from_u8(arr) @ LUMA_WEIGHTS


def save_image(path, img):
    """Save a float32 image ([0,1], RGB or luma) as 8-bit PNG."""
    arr = to_u8(img)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def encode_jpeg(img, quality):
    """Encode float32 RGB to baseline JPEG bytes (4:2:0 subsampling)."""
    buf = io.BytesIO()
    Image.fromarray(to_u8(img), mode="RGB").save(
        buf, format="JPEG", quality=int(quality), subsampling=2
    )
    return buf.getvalue()


def decode_jpeg(data):
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_u8(arr)
