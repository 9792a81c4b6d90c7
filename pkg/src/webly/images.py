"""Image decoding, luma conversion and bilinear resizing.

Decoding goes through Pillow (PGM/PPM always, PNG when available); all
pixel arithmetic after that is plain numpy so results do not depend on
Pillow's resampling filters.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UndecodableImage

LUMA = np.array([0.299, 0.587, 0.114])
IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")


def to_gray(arr: np.ndarray) -> np.ndarray:
    """Float64 grayscale raster; RGB is converted with Rec. 601 luma weights."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] >= 3:
            arr = arr[..., :3] @ LUMA
        else:
            arr = arr[..., 0]
    if arr.ndim != 2 or arr.size == 0:
        raise UndecodableImage(f"unsupported raster shape {arr.shape}")
    return arr


def load_image(path: os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode in ("P", "PA", "LA", "RGBA", "CMYK", "YCbCr", "1"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise UndecodableImage(f"{path}: {exc}") from None
    return to_gray(arr)


def save_image(path: os.PathLike, arr: np.ndarray):
    """Write an 8-bit raster; format follows the suffix (.pgm/.ppm/.png)."""
    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def file_hash(path: os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def resize_bilinear(img: np.ndarray, shape=(64, 64)) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    oh, ow = shape
    if (h, w) == (oh, ow):
        return img.copy()

    def coords(n_in, n_out):
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0, n_in - 1)
        lo = np.floor(x).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, x - lo

    y0, y1, fy = coords(h, oh)
    x0, x1, fx = coords(w, ow)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]
