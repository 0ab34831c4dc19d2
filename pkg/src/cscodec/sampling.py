"""Local structural sampling operator.

Each of the n_B measurement filters sees only one L x L window of a B x B
image block.  Raw filter weights are masked to their window (localization),
squared and renormalized to sum to one (positive normalization), so every
measurement is a convex combination of pixels and stays in the pixel range.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadDimensionsError,
    CorruptContainerError,
    DegenerateFilterError,
    ShapeMismatchError,
    TooManyFiltersError,
    ZeroMeasurementsError,
)

OPERATOR_MAGIC = b"CSO1"


def derive_measurement_count(ratio: float, block_size: int) -> int:
    """Number of measurements per block: floor(ratio * B^2)."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sampling ratio must be in (0, 1], got {ratio}")
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    n = int(math.floor(ratio * block_size * block_size))
    if n < 1:
        raise ZeroMeasurementsError(
            f"ratio={ratio}, block_size={block_size} yields zero measurements"
        )
    return n


@dataclass(frozen=True)
class SamplingConfig:
    ratio: float
    block_size: int = 32
    window_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if not 1 <= self.window_size <= self.block_size:
            raise ValueError(
                f"window size must satisfy 1 <= L <= B, got L={self.window_size} B={self.block_size}"
            )
        # validates n_B >= 1 and n_B <= number of distinct window positions
        n = derive_measurement_count(self.ratio, self.block_size)
        positions = (self.block_size - self.window_size + 1) ** 2
        if n > positions:
            raise TooManyFiltersError(
                f"{n} filters but only {positions} distinct window positions"
            )

    @property
    def n_measurements(self) -> int:
        return derive_measurement_count(self.ratio, self.block_size)


@dataclass(frozen=True)
class MaskSet:
    """Binary window masks, one per filter, with their top-left corners."""

    masks: np.ndarray  # (n_B, B, B) uint8
    window_positions: tuple[tuple[int, int], ...]

    @property
    def n_filters(self) -> int:
        return self.masks.shape[0]


def build_masks(block_size: int, window_size: int, n_filters: int) -> MaskSet:
    """Assign each filter k one L x L window, sliding in raster order.

    Window k (1-based) sits at the valid position with raster index
    floor((k - 1) * P / n_B) out of P = (B - L + 1)^2 positions, so the first
    window is at the top-left corner and, when n_B = P, the last one reaches
    the bottom-right corner.
    """
    span = block_size - window_size + 1
    total = span * span
    if n_filters < 1:
        raise ValueError(f"need at least one filter, got {n_filters}")
    if n_filters > total:
        raise TooManyFiltersError(
            f"{n_filters} filters but only {total} distinct window positions"
        )
    masks = np.zeros((n_filters, block_size, block_size), dtype=np.uint8)
    positions = []
    for k in range(n_filters):
        idx = (k * total) // n_filters
        row, col = divmod(idx, span)
        masks[k, row : row + window_size, col : col + window_size] = 1
        positions.append((row, col))
    return MaskSet(masks=masks, window_positions=tuple(positions))


def initialize_raw_weights(config: SamplingConfig) -> np.ndarray:
    """Draw raw filter weights N(0, 2 / B^2), deterministic per seed."""
    b = config.block_size
    std = math.sqrt(2.0 / (b * b))
    rng = np.random.default_rng(config.seed)
    return rng.normal(0.0, std, size=(config.n_measurements, b, b))


def localize(raw_weights: np.ndarray, masks: MaskSet) -> np.ndarray:
    """Elementwise mask: only the L^2 window entries of each filter survive."""
    if raw_weights.shape != masks.masks.shape:
        raise ShapeMismatchError(
            f"raw weights {raw_weights.shape} vs masks {masks.masks.shape}"
        )
    return raw_weights * masks.masks


def positive_normalize(masked_weights: np.ndarray) -> np.ndarray:
    """Square retained entries, then scale each filter to sum to one."""
    squared = masked_weights * masked_weights
    sums = squared.sum(axis=(1, 2), keepdims=True)
    if np.any(sums <= 0.0):
        bad = np.nonzero(sums.ravel() <= 0.0)[0]
        raise DegenerateFilterError(
            f"filters {bad.tolist()} have zero retained energy"
        )
    return squared / sums


@dataclass
class SamplingOperator:
    """Config + masks + trainable raw weights; normalized weights derived."""

    config: SamplingConfig
    masks: MaskSet
    raw_weights: np.ndarray  # (n_B, B, B) float64
    _normalized: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def normalized_weights(self) -> np.ndarray:
        if self._normalized is None:
            self._normalized = positive_normalize(localize(self.raw_weights, self.masks))
        return self._normalized

    def with_raw_weights(self, raw_weights: np.ndarray) -> "SamplingOperator":
        return SamplingOperator(self.config, self.masks, np.asarray(raw_weights, dtype=np.float64))


def build_operator(config: SamplingConfig) -> SamplingOperator:
    masks = build_masks(config.block_size, config.window_size, config.n_measurements)
    raw = initialize_raw_weights(config)
    return SamplingOperator(config=config, masks=masks, raw_weights=raw)


def random_local_operator(config: SamplingConfig) -> SamplingOperator:
    """Hand-designed baseline: random window entries, never trained.

    Same localization/normalization as the learned operator, but the raw
    values are uniform positives so it matches the classic random local
    measurement matrices used as an ablation reference.
    """
    masks = build_masks(config.block_size, config.window_size, config.n_measurements)
    rng = np.random.default_rng(config.seed)
    raw = rng.uniform(0.1, 1.0, size=masks.masks.shape)
    return SamplingOperator(config=config, masks=masks, raw_weights=raw)


@dataclass
class BlockMeasurements:
    """Per-block measurement vectors on a (rows/B, cols/B) grid."""

    vectors: np.ndarray  # (grid_rows, grid_cols, n_B) float64

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.vectors.shape[0], self.vectors.shape[1]

    @property
    def n_measurements(self) -> int:
        return self.vectors.shape[2]


def sample_image(image: np.ndarray, op: SamplingOperator) -> BlockMeasurements:
    """Apply the operator block by block (stride-B convolution, no bias)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise BadDimensionsError(f"expected a 2-D grayscale image, got shape {image.shape}")
    b = op.config.block_size
    rows, cols = image.shape
    if rows % b or cols % b:
        raise BadDimensionsError(
            f"image {rows}x{cols} is not divisible by block size {b}"
        )
    blocks = image.reshape(rows // b, b, cols // b, b).transpose(0, 2, 1, 3)
    vectors = np.einsum("ijxy,kxy->ijk", blocks, op.normalized_weights)
    return BlockMeasurements(vectors=vectors)


def operator_matrix(op: SamplingOperator) -> np.ndarray:
    """Explicit n_B x B^2 sampling matrix (rows = flattened filters)."""
    n = op.config.n_measurements
    return op.normalized_weights.reshape(n, -1)


def save_operator(op: SamplingOperator, path) -> None:
    """Serialize geometry and raw weights; normalized weights are rederived."""
    cfg = op.config
    n = cfg.n_measurements
    with open(path, "wb") as fh:
        fh.write(OPERATOR_MAGIC)
        fh.write(struct.pack("<BHHIdq", 1, cfg.block_size, cfg.window_size, n, cfg.ratio, cfg.seed))
        for row, col in op.masks.window_positions:
            fh.write(struct.pack("<HH", row, col))
        fh.write(np.ascontiguousarray(op.raw_weights, dtype="<f8").tobytes())


def load_operator(path) -> SamplingOperator:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != OPERATOR_MAGIC:
        raise CorruptContainerError("bad operator file magic")
    header = struct.Struct("<BHHIdq")
    version, block, window, n, ratio, seed = header.unpack_from(data, 4)
    if version != 1:
        raise CorruptContainerError(f"unsupported operator version {version}")
    off = 4 + header.size
    positions = []
    for _ in range(n):
        row, col = struct.unpack_from("<HH", data, off)
        positions.append((row, col))
        off += 4
    expect = n * block * block * 8
    if len(data) - off != expect:
        raise CorruptContainerError("operator weight payload truncated")
    raw = np.frombuffer(data, dtype="<f8", count=n * block * block, offset=off)
    raw = raw.reshape(n, block, block).astype(np.float64)
    config = SamplingConfig(ratio=ratio, block_size=block, window_size=window, seed=seed)
    masks = build_masks(block, window, n)
    if tuple(positions) != masks.window_positions:
        raise CorruptContainerError("stored window positions disagree with geometry")
    return SamplingOperator(config=config, masks=masks, raw_weights=raw)
