"""Raster file formats: PFM for depth (float32) and binary PGM for masks.

PFM follows the usual convention: "Pf" grayscale header, negative scale for
little-endian, scanlines stored bottom-to-top. PGM is "P5" with maxval 255 and
mask value = byte / 255.
"""

from __future__ import annotations

import numpy as np


def write_pfm(path, data):
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"PFM writer takes a 2-D array, got shape {data.shape}")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise ValueError(f"{path}: expected grayscale PFM ('Pf'), got {header!r}")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        payload = f.read(4 * w * h)
    if len(payload) != 4 * w * h:
        raise ValueError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(img).astype(np.float64)


def write_pgm(path, data):
    """Write values in [0, 1] as a binary PGM (rounded to byte / 255)."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"PGM writer takes a 2-D array, got shape {data.shape}")
    if data.min() < 0.0 or data.max() > 1.0:
        raise ValueError("PGM values must lie in [0, 1]")
    h, w = data.shape
    bytes_ = np.rint(data * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(bytes_.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: expected binary PGM ('P5'), got {magic!r}")
        line = f.readline()
        while line.startswith(b"#"):
            line = f.readline()
        w, h = (int(x) for x in line.split())
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
        payload = f.read(w * h)
    if len(payload) != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return img.astype(np.float64) / 255.0
