"""Grayscale image file helpers: binary PGM, PNG via Pillow, padding."""

from __future__ import annotations

import numpy as np

from .errors import BadDimensionsError, CorruptContainerError


def write_pgm(path, levels: np.ndarray) -> None:
    """Write a uint8 array as binary PGM (P5, maxval 255)."""
    levels = np.asarray(levels, dtype=np.uint8)
    if levels.ndim != 2:
        raise BadDimensionsError(f"PGM needs a 2-D array, got shape {levels.shape}")
    rows, cols = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise CorruptContainerError(f"{path}: not a binary PGM file")
    # header tokens: magic, width, height, maxval; comments start with '#'
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    cols, rows, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise CorruptContainerError(f"{path}: unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos)
    if pixels.size != rows * cols:
        raise CorruptContainerError(f"{path}: PGM pixel data truncated")
    return pixels.reshape(rows, cols).copy()


def load_gray_image(path) -> np.ndarray:
    """Load any Pillow-readable image as float64 grayscale in [0, 1].

    Color inputs are converted with the usual luminance weights
    0.299 R + 0.587 G + 0.114 B.
    """
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            arr = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return arr / 255.0


def save_gray_image(path, values: np.ndarray) -> None:
    """Save [0, 1] floats as an 8-bit grayscale PNG/PGM (by extension)."""
    from PIL import Image

    levels = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, levels)
    else:
        Image.fromarray(levels, mode="L").save(path)


def pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad bottom/right edges so both sides divide `multiple`."""
    rows, cols = image.shape
    pad_r = (-rows) % multiple
    pad_c = (-cols) % multiple
    if pad_r or pad_c:
        image = np.pad(image, ((0, pad_r), (0, pad_c)), mode="reflect")
    return image, (rows, cols)


def crop_to(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    rows, cols = size
    return image[:rows, :cols]


def center_crop_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    rows, cols = image.shape
    new_r = (rows // multiple) * multiple
    new_c = (cols // multiple) * multiple
    if new_r == 0 or new_c == 0:
        raise BadDimensionsError(
            f"image {rows}x{cols} smaller than one {multiple}x{multiple} block"
        )
    top = (rows - new_r) // 2
    left = (cols - new_c) // 2
    return image[top : top + new_r, left : left + new_c]
