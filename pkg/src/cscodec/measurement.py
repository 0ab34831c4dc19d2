"""Measurement plane assembly, 8-bit quantization, container format, DPCM.

Per-block measurement vectors are reshaped into square t x t tiles
(t = ceil(sqrt(n_B))) and concatenated on the block grid, giving a 2-D
"measurement plane" an ordinary image codec can compress.  Cells beyond n_B
replicate the last real measurement so padding stays locally smooth.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadPlaneShapeError, CorruptContainerError, ShapeMismatchError
from .sampling import BlockMeasurements

CONTAINER_MAGIC = b"CSC1"
CONTAINER_VERSION = 1
# magic 4s | version u8 | width u32 | height u32 | B u16 | L u16 | n_B u32
# | ratio f32 | codec_id u8 | quality f32 | payload_len u32, little-endian
_HEADER = struct.Struct("<4sBIIHHIfBfI")
HEADER_SIZE = _HEADER.size


def tile_side(n_measurements: int) -> int:
    return int(math.ceil(math.sqrt(n_measurements)))


@dataclass
class MeasurementPlane:
    values: np.ndarray  # (grid_rows * t, grid_cols * t) float64
    tile_side: int
    n_measurements: int
    grid_shape: tuple[int, int]


def tile_measurements(bm: BlockMeasurements) -> MeasurementPlane:
    grid_rows, grid_cols, n = bm.vectors.shape
    t = tile_side(n)
    flat = bm.vectors.reshape(grid_rows, grid_cols, n)
    if t * t > n:
        pad = np.repeat(flat[:, :, -1:], t * t - n, axis=2)
        flat = np.concatenate([flat, pad], axis=2)
    tiles = flat.reshape(grid_rows, grid_cols, t, t)
    plane = tiles.transpose(0, 2, 1, 3).reshape(grid_rows * t, grid_cols * t)
    return MeasurementPlane(
        values=plane, tile_side=t, n_measurements=n, grid_shape=(grid_rows, grid_cols)
    )


def untile_measurements(plane: MeasurementPlane) -> BlockMeasurements:
    """Inverse of tiling; padding cells are dropped."""
    t = plane.tile_side
    rows, cols = plane.values.shape
    if rows % t or cols % t:
        raise BadPlaneShapeError(f"plane {rows}x{cols} not divisible by tile side {t}")
    grid_rows, grid_cols = rows // t, cols // t
    if (grid_rows, grid_cols) != tuple(plane.grid_shape):
        raise BadPlaneShapeError(
            f"plane grid {(grid_rows, grid_cols)} disagrees with declared {plane.grid_shape}"
        )
    tiles = plane.values.reshape(grid_rows, t, grid_cols, t).transpose(0, 2, 1, 3)
    flat = tiles.reshape(grid_rows, grid_cols, t * t)
    return BlockMeasurements(vectors=flat[:, :, : plane.n_measurements].copy())


def quantize8(values: np.ndarray) -> np.ndarray:
    """Map [0,1] floats to uint8 levels, rounding halves away from zero."""
    clipped = np.clip(values, 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def dequantize8(levels: np.ndarray) -> np.ndarray:
    return levels.astype(np.float64) / 255.0


class Codec:
    """Codec identifiers used in container headers."""

    QUANT8_RAW = 0
    EXTERNAL_J2K = 1
    EXTERNAL_BPG = 2
    DPCM_ESTIMATE = 3

    NAMES = {
        QUANT8_RAW: "quant8",
        EXTERNAL_J2K: "j2k",
        EXTERNAL_BPG: "bpg",
        DPCM_ESTIMATE: "dpcm",
    }
    IDS = {name: cid for cid, name in NAMES.items()}


@dataclass
class BitstreamContainer:
    width: int
    height: int
    block_size: int
    window_size: int
    n_measurements: int
    ratio: float
    codec_id: int
    quality: float
    payload: bytes

    def serialize(self) -> bytes:
        header = _HEADER.pack(
            CONTAINER_MAGIC,
            CONTAINER_VERSION,
            self.width,
            self.height,
            self.block_size,
            self.window_size,
            self.n_measurements,
            self.ratio,
            self.codec_id,
            self.quality,
            len(self.payload),
        )
        return header + self.payload


def parse_container(data: bytes) -> BitstreamContainer:
    if len(data) < HEADER_SIZE:
        raise CorruptContainerError(f"container shorter than header ({len(data)} bytes)")
    (magic, version, width, height, block, window, n, ratio, codec_id, quality, plen) = (
        _HEADER.unpack_from(data, 0)
    )
    if magic != CONTAINER_MAGIC:
        raise CorruptContainerError(f"bad magic {magic!r}")
    if version != CONTAINER_VERSION:
        raise CorruptContainerError(f"unsupported container version {version}")
    payload = data[HEADER_SIZE:]
    if len(payload) != plen:
        raise CorruptContainerError(
            f"payload length {len(payload)} does not match header {plen}"
        )
    return BitstreamContainer(
        width=width,
        height=height,
        block_size=block,
        window_size=window,
        n_measurements=n,
        ratio=ratio,
        codec_id=codec_id,
        quality=quality,
        payload=payload,
    )


@dataclass
class RatePoint:
    bpp: float
    payload_bits: float
    pixel_count: int


def compute_bpp(container: BitstreamContainer) -> RatePoint:
    """Payload bits per source pixel; the fixed header is excluded."""
    bits = len(container.payload) * 8
    pixels = container.width * container.height
    return RatePoint(bpp=bits / pixels, payload_bits=bits, pixel_count=pixels)


def entropy_bits_per_symbol(symbols: np.ndarray) -> float:
    """Empirical first-order entropy of a symbol stream, in bits."""
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / symbols.size
    return float(-(p * np.log2(p)).sum())


def dpcm_rate_estimate(
    bm: BlockMeasurements, step: float, block_size: int
) -> tuple[RatePoint, BlockMeasurements]:
    """Prediction-based coding baseline: left-neighbor DPCM on block vectors.

    Each block's vector is predicted from the reconstructed vector of its
    left neighbor (first column predicts from a flat 0.5 vector), residuals
    are uniformly quantized with the given step, and the rate is the
    empirical entropy of the quantized symbols.  Returns the rate estimate
    and the decoded measurements (inverse DPCM).
    """
    if step <= 0:
        raise ValueError(f"quantizer step must be positive, got {step}")
    grid_rows, grid_cols, n = bm.vectors.shape
    decoded = np.empty_like(bm.vectors)
    symbols = np.empty((grid_rows, grid_cols, n), dtype=np.int64)
    for i in range(grid_rows):
        prev = np.full(n, 0.5)
        for j in range(grid_cols):
            residual = bm.vectors[i, j] - prev
            q = np.floor(residual / step + 0.5).astype(np.int64)
            recon = prev + q * step
            symbols[i, j] = q
            decoded[i, j] = recon
            prev = recon
    count = symbols.size
    bits = entropy_bits_per_symbol(symbols.reshape(-1)) * count
    pixels = grid_rows * grid_cols * block_size * block_size
    rate = RatePoint(bpp=bits / pixels, payload_bits=bits, pixel_count=pixels)
    return rate, BlockMeasurements(vectors=decoded)


def measurement_mse(a: BlockMeasurements, b: BlockMeasurements) -> float:
    if a.vectors.shape != b.vectors.shape:
        raise ShapeMismatchError(
            f"measurement shapes differ: {a.vectors.shape} vs {b.vectors.shape}"
        )
    diff = a.vectors - b.vectors
    return float(np.mean(diff * diff))
