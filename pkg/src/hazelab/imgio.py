"""Image and depth raster codecs.

Images are 8-bit PNG, 1 or 3 channels, mapped to [0, 1] floats on load and
back with round(v*255) on save, so save -> load is the identity on
quantized data.  Depth maps additionally accept 16-bit grayscale PNG
(larger value = farther) and a raw little-endian float32 raster with a
16-byte header: magic ``DPTH``, u32 width, u32 height, u32 reserved.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"DPTH"
_DEPTH_HEADER = struct.Struct("<4sIII")


def load_image(path: str | Path) -> np.ndarray:
    """8-bit PNG -> float32 array in [0, 1], (H, W) or (H, W, 3)."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8)
        elif im.mode in ("I", "I;16", "I;16B", "I;16L"):
            raise ValueError(f"{path}: 16-bit PNG is only supported for depth maps")
        else:
            raise ValueError(f"{path}: unsupported image mode {im.mode!r} (need 8-bit L or RGB)")
    return (arr.astype(np.float32) / 255.0)


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Float image in [0, 1] -> 8-bit PNG (grayscale for 2-d input)."""
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"save_image expects (H, W) or (H, W, 3), got shape {img.shape}")
    q = np.clip(np.round(img.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L" if q.ndim == 2 else "RGB").save(path, format="PNG")


def load_depth(path: str | Path) -> np.ndarray:
    """Depth raster -> float64 array (H, W), nonnegative, unnormalized."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        with Image.open(path) as im:
            if im.mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if im.mode in ("I", "I;16", "I;16B", "I;16L"):
                arr = np.asarray(im.convert("I"), dtype=np.float64)
                return arr / 65535.0
            raise ValueError(f"{path}: unsupported depth PNG mode {im.mode!r}")
    raw = path.read_bytes()
    if len(raw) < _DEPTH_HEADER.size:
        raise ValueError(f"{path}: too short for a depth raster header")
    magic, width, height, _reserved = _DEPTH_HEADER.unpack_from(raw, 0)
    if magic != DEPTH_MAGIC:
        raise ValueError(f"{path}: bad depth raster magic {magic!r}")
    expected = _DEPTH_HEADER.size + width * height * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: depth raster is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_DEPTH_HEADER.size).reshape(height, width)
    if np.any(data < 0):
        raise ValueError(f"{path}: depth raster contains negative values")
    return data.astype(np.float64)


def save_depth_raw(depth: np.ndarray, path: str | Path) -> None:
    """Write the raw float32 depth raster format."""
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2-d, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_HEADER.pack(DEPTH_MAGIC, w, h, 0))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers; works on (H, W) and (H, W, C)."""
    h, w = img.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target extents must be positive, got {out_h}x{out_w}")
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)
    wx = (xs - x0).astype(wy.dtype)
    if img.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(img.dtype)
