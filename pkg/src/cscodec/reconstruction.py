"""Pyramid reconstruction: decoded measurement plane to full-resolution image.

The decoded plane is first bilinearly resampled to a fraction 1/S of the
target resolution (S a power of two chosen from the sampling ratio), then a
stack of log2(S) levels, each made of residual blocks plus a 4x4 stride-2
transposed convolution, doubles the resolution back up.  A tail of residual
blocks and a single-channel convolution reveal the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import BadGeometryError, CorruptContainerError, GeometryMismatchError
from .measurement import MeasurementPlane
from .sampling import (
    SamplingConfig,
    SamplingOperator,
    build_masks,
    derive_measurement_count,
)

CHECKPOINT_VERSION = 1


def compute_scale_factor(ratio: float) -> int:
    """Largest power-of-two j with 2^-j above the sampling ratio (else 1).

    Candidates j themselves run over powers of two {1, 2, 4, ...}; the
    fallback 1 covers ratios >= 0.5 where the candidate set is empty.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    best = 1
    j = 1
    while 2.0 ** (-j) > ratio:
        best = j
        j *= 2
    return best


@dataclass(frozen=True)
class NetworkConfig:
    ratio: float
    block_size: int = 32
    channels: int = 64
    tail_blocks: int = 6
    blocks_per_level: int = 5

    def __post_init__(self):
        if self.channels < 1 or self.tail_blocks < 0 or self.blocks_per_level < 1:
            raise ValueError(f"invalid network config {self}")

    @property
    def scale(self) -> int:
        return compute_scale_factor(self.ratio)

    @property
    def levels(self) -> int:
        return int(math.log2(self.scale))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class PyramidNetwork(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        q = config.channels
        self.head = nn.Conv2d(1, q, 3, padding=1)
        self.levels = nn.ModuleList()
        for _ in range(config.levels):
            level = nn.ModuleDict(
                {
                    "blocks": nn.Sequential(
                        *[ResidualBlock(q) for _ in range(config.blocks_per_level)]
                    ),
                    "up": nn.ConvTranspose2d(q, q, 4, stride=2, padding=1),
                }
            )
            self.levels.append(level)
        self.tail = nn.Sequential(*[ResidualBlock(q) for _ in range(config.tail_blocks)])
        self.final = nn.Conv2d(q, 1, 3, padding=1)

    def forward(self, f0):
        x = F.relu(self.head(f0))
        for level in self.levels:
            x = level["blocks"](x)
            x = F.relu(level["up"](x))
        x = self.tail(x)
        return self.final(x)


def build_network(config: NetworkConfig, seed: int = 0, dtype=torch.float32) -> PyramidNetwork:
    """Construct the network with He-initialized weights and zero biases."""
    net = PyramidNetwork(config)
    gen = torch.Generator().manual_seed(seed)
    for module in net.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(module.weight, nonlinearity="relu", generator=gen)
            nn.init.zeros_(module.bias)
    return net.to(dtype)


def parameter_count(config: NetworkConfig) -> int:
    q = config.channels
    block = 2 * (q * q * 9 + q)
    head = q * 9 + q
    per_level = config.blocks_per_level * block + (q * q * 16 + q)
    tail = config.tail_blocks * block
    final = q * 9 + 1
    return head + config.levels * per_level + tail + final


def bilinear_resize(batch: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resampling with half-pixel sample centers (differentiable)."""
    return F.interpolate(batch, size=size, mode="bilinear", align_corners=False)


def initial_reconstruction(
    plane_values: np.ndarray, scale: int, width: int, height: int
) -> np.ndarray:
    """Bilinear resample of the decoded plane to (height/S, width/S) in [0,1]."""
    plane_values = np.asarray(plane_values, dtype=np.float64)
    if plane_values.ndim != 2 or plane_values.size == 0:
        raise BadGeometryError(f"expected a 2-D plane, got shape {plane_values.shape}")
    if width % scale or height % scale:
        raise BadGeometryError(f"{width}x{height} not divisible by scale {scale}")
    target = (height // scale, width // scale)
    with torch.no_grad():
        t = torch.from_numpy(plane_values)[None, None]
        out = bilinear_resize(t, target)[0, 0].numpy()
    return np.clip(out, 0.0, 1.0)


def reconstruct(plane: MeasurementPlane, net: PyramidNetwork) -> np.ndarray:
    """Full decoder path: initial bilinear reconstruction + pyramid network."""
    cfg = net.config
    expected_n = derive_measurement_count(cfg.ratio, cfg.block_size)
    if plane.n_measurements != expected_n:
        raise GeometryMismatchError(
            f"plane carries {plane.n_measurements} measurements per block, "
            f"network expects {expected_n}"
        )
    grid_rows, grid_cols = plane.grid_shape
    height = grid_rows * cfg.block_size
    width = grid_cols * cfg.block_size
    f0 = initial_reconstruction(plane.values, cfg.scale, width, height)
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        x = torch.from_numpy(f0)[None, None].to(dtype)
        out = net(x)[0, 0].double().numpy()
    return np.clip(out, 0.0, 1.0)


def save_checkpoint(path, operator: SamplingOperator, net: PyramidNetwork) -> None:
    """Versioned npz: configs as JSON, raw sampling weights, network weights."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "sampling": asdict(operator.config),
        "network": asdict(net.config),
    }
    arrays = {
        "meta": np.array(json.dumps(meta)),
        "sampling_raw": operator.raw_weights.astype("<f8"),
    }
    for key, value in net.state_dict().items():
        arrays[f"theta.{key}"] = value.detach().cpu().numpy().astype("<f4")
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[SamplingOperator, PyramidNetwork]:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CorruptContainerError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in data:
        raise CorruptContainerError(f"checkpoint {path} has no meta entry")
    meta = json.loads(str(data["meta"].item()))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CorruptContainerError(f"unsupported checkpoint version {meta.get('version')}")
    samp_cfg = SamplingConfig(**meta["sampling"])
    net_cfg = NetworkConfig(**meta["network"])
    masks = build_masks(samp_cfg.block_size, samp_cfg.window_size, samp_cfg.n_measurements)
    operator = SamplingOperator(
        config=samp_cfg,
        masks=masks,
        raw_weights=data["sampling_raw"].astype(np.float64),
    )
    net = PyramidNetwork(net_cfg)
    state = {}
    for key in data.files:
        if key.startswith("theta."):
            state[key[len("theta.") :]] = torch.from_numpy(data[key].astype(np.float32))
    try:
        net.load_state_dict(state)
    except RuntimeError as exc:
        raise CorruptContainerError(f"checkpoint weights do not fit: {exc}") from exc
    return operator, net
