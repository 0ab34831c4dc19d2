"""Image corpus loading and a deterministic synthetic toy corpus.

The synthetic generator mixes low-pass noise with step edges and soft
blobs, which is enough structure for toy-scale training and rate studies
without shipping datasets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .imagefiles import center_crop_to_multiple, load_gray_image, pad_to_multiple

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class Corpus:
    ids: list[str]
    images: list[np.ndarray]

    def __post_init__(self):
        if len(self.ids) != len(self.images):
            raise ConfigError("corpus ids and images differ in length")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(zip(self.ids, self.images))


def load_corpus(directory, block_multiple: int | None = None, pad: bool = False) -> Corpus:
    """Load every image under `directory` as [0,1] grayscale, sorted by name.

    With `block_multiple`, images are center-cropped (default) or
    reflect-padded to a multiple of that size.
    """
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ConfigError(f"no images found under {directory}")
    ids, images = [], []
    for path in paths:
        image = load_gray_image(path)
        if block_multiple:
            if pad:
                image, _ = pad_to_multiple(image, block_multiple)
            else:
                image = center_crop_to_multiple(image, block_multiple)
        ids.append(path.stem)
        images.append(image)
    return Corpus(ids=ids, images=images)


def _lowpass_noise(rng, size: int, cutoff: float) -> np.ndarray:
    spectrum = np.fft.rfft2(rng.standard_normal((size, size)))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    mask = np.exp(-(fx * fx + fy * fy) / (2.0 * cutoff * cutoff))
    field = np.fft.irfft2(spectrum * mask, s=(size, size))
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.full_like(field, 0.5)


def _step_edge(rng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    angle = rng.uniform(0, np.pi)
    offset = rng.uniform(0.3, 0.7)
    return ((np.cos(angle) * xx + np.sin(angle) * yy) > offset).astype(np.float64)


def _blob(rng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    cy, cx = rng.uniform(0.2, 0.8, size=2)
    radius = rng.uniform(0.08, 0.25)
    return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius**2))


def synthetic_corpus(count: int, size: int = 128, seed: int = 0) -> Corpus:
    """Deterministic toy corpus of smooth textures with edges and blobs."""
    rng = np.random.default_rng(seed)
    ids, images = [], []
    for i in range(count):
        base = _lowpass_noise(rng, size, cutoff=rng.uniform(0.02, 0.08))
        img = 0.6 * base
        img += 0.25 * rng.uniform(0.2, 1.0) * _step_edge(rng, size)
        img += 0.3 * rng.uniform(0.2, 1.0) * _blob(rng, size)
        lo, hi = img.min(), img.max()
        img = (img - lo) / (hi - lo)
        ids.append(f"toy{i:03d}")
        images.append(img)
    return Corpus(ids=ids, images=images)
