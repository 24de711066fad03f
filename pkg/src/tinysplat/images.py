"""8-bit image I/O: PNG (via Pillow) and binary PPM (P6)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def from_uint8(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def save_image(img, path):
    """Write an HxWx3 unit-range image; format chosen by extension."""
    path = Path(path)
    data = to_uint8(img)
    if path.suffix.lower() == ".ppm":
        with open(path, "wb") as f:
            f.write(f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
            f.write(data.tobytes())
    else:
        Image.fromarray(data, mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        with open(path, "rb") as f:
            magic = f.readline().strip()
            if magic != b"P6":
                raise ValueError(f"{path}: not a binary PPM")
            dims = f.readline().split()
            while dims and dims[0].startswith(b"#"):
                dims = f.readline().split()
            w, h = int(dims[0]), int(dims[1])
            maxval = int(f.readline())
            if maxval != 255:
                raise ValueError(f"{path}: only 8-bit PPM supported")
            data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8).reshape(h, w, 3)
        return from_uint8(data)
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))
