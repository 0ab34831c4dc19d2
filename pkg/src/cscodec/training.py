"""End-to-end optimization of sampling weights and reconstruction parameters.

The forward chain re-derives the normalized filters from the raw weights at
every step (so masked-out entries receive exactly zero gradient), samples,
tiles, pushes the plane through the in-loop codec with a straight-through
gradient, reconstructs, and applies the reconstruction + total-variation
rate loss.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import DegenerateFilterError, NonFiniteLossError, ShapeMismatchError
from .measurement import tile_side
from .reconstruction import PyramidNetwork, bilinear_resize
from .sampling import SamplingOperator


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.1
    beta: float = 2.0
    batch_size: int = 8

    def __post_init__(self):
        if self.gamma < 0 or self.beta <= 0 or self.batch_size < 1:
            raise ValueError(f"invalid loss config {self}")


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float = 1e-4
    lr_decay_factor: float = 2.0
    lr_decay_epochs: int = 30
    epochs: int = 200
    iterations_per_epoch: int = 1000
    crop_size: int = 128
    adam_beta1: float = 0.9
    weight_decay: float = 1e-4

    def lr_at_epoch(self, epoch: int) -> float:
        return self.learning_rate / self.lr_decay_factor ** (epoch // self.lr_decay_epochs)


class SamplingNetwork(nn.Module):
    """Trainable mirror of a SamplingOperator (filters re-derived per call)."""

    def __init__(self, operator: SamplingOperator, dtype=torch.float32, trainable=True):
        super().__init__()
        self.config = operator.config
        raw = torch.from_numpy(operator.raw_weights).unsqueeze(1).to(dtype)
        self.raw_weights = nn.Parameter(raw, requires_grad=trainable)
        mask = torch.from_numpy(operator.masks.masks.astype(np.float64)).unsqueeze(1)
        self.register_buffer("mask", mask.to(dtype))
        self._masks = operator.masks

    def normalized_filters(self) -> torch.Tensor:
        localized = self.raw_weights * self.mask
        squared = localized * localized
        sums = squared.sum(dim=(1, 2, 3), keepdim=True)
        if torch.any(sums <= 0):
            raise DegenerateFilterError("a filter lost all retained energy during training")
        return squared / sums

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return F.conv2d(images, self.normalized_filters(), stride=self.config.block_size)

    def to_operator(self) -> SamplingOperator:
        raw = self.raw_weights.detach().squeeze(1).double().cpu().numpy()
        return SamplingOperator(config=self.config, masks=self._masks, raw_weights=raw)


def tile_batch(measurements: torch.Tensor, t: int) -> torch.Tensor:
    """(N, n_B, gh, gw) measurements -> (N, 1, gh*t, gw*t) plane batch."""
    n = measurements.shape[1]
    if t * t > n:
        pad = measurements[:, -1:].expand(-1, t * t - n, -1, -1)
        measurements = torch.cat([measurements, pad], dim=1)
    return F.pixel_shuffle(measurements, t)


def quant8_roundtrip(values: torch.Tensor) -> torch.Tensor:
    """8-bit uniform quantizer round trip, computed in float64."""
    v = values.double().clamp(0.0, 1.0)
    return (torch.floor(v * 255.0 + 0.5) / 255.0).to(values.dtype)


def straight_through_roundtrip(plane: torch.Tensor, backend=None, quality: float = 0.0):
    """Codec round trip with an identity Jacobian in the backward pass.

    backend None bypasses the codec entirely (plane returned as-is); the
    "quant8" backend runs in-process; external backends run per sample
    through their subprocess bridge.
    """
    if backend is None:
        return plane
    with torch.no_grad():
        if getattr(backend, "name", "") == "quant8":
            decoded = quant8_roundtrip(plane)
        else:
            from .measurement import dequantize8, quantize8

            out = []
            for sample in plane.detach().cpu().numpy():
                levels = quantize8(sample[0])
                back = backend.decode(backend.encode(levels, quality), levels.shape)
                out.append(dequantize8(back)[None])
            decoded = torch.as_tensor(np.stack(out), dtype=plane.dtype, device=plane.device)
    return plane + (decoded - plane).detach()


def reconstruction_loss(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """(1 / 2K) * sum of squared reconstruction errors over the batch."""
    if x_hat.shape != x.shape:
        raise ShapeMismatchError(f"loss shapes differ: {x_hat.shape} vs {x.shape}")
    k = x.shape[0]
    diff = x_hat - x
    return (diff * diff).sum() / (2.0 * k)


def rate_loss(plane: torch.Tensor, beta: float = 2.0) -> torch.Tensor:
    """Total-variation rate surrogate; absent neighbors contribute zero."""
    plane = torch.as_tensor(plane)
    if plane.ndim != 2 or plane.shape[0] < 2 or plane.shape[1] < 2:
        raise ShapeMismatchError(f"rate loss needs a 2-D plane of at least 2x2, got {tuple(plane.shape)}")
    dh = torch.zeros_like(plane)
    dv = torch.zeros_like(plane)
    dh[:, :-1] = plane[:, 1:] - plane[:, :-1]
    dv[:-1, :] = plane[1:, :] - plane[:-1, :]
    if beta == 2.0:
        return (dh * dh + dv * dv).sum()
    return (dh * dh + dv * dv).pow(beta / 2.0).sum()


def rate_loss_batch(planes: torch.Tensor, beta: float = 2.0) -> torch.Tensor:
    """Mean of per-plane rate losses over a (N, 1, h, w) batch."""
    return torch.stack([rate_loss(p[0], beta) for p in planes]).mean()


def total_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    plane_pre: torch.Tensor,
    cfg: LossConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Reconstruction term on post-codec output, rate term on pre-codec plane."""
    l_c = reconstruction_loss(x_hat, x)
    l_r = rate_loss_batch(plane_pre, cfg.beta)
    return l_c + cfg.gamma * l_r, l_c, l_r


def augment(image: np.ndarray, rng) -> np.ndarray:
    """Random rotation from {0, 90, 180, 270} degrees, then flip with p=0.5."""
    k = int(rng.integers(0, 4))
    out = np.rot90(image, k) if k else image
    if rng.random() < 0.5:
        out = np.fliplr(out)
    return np.ascontiguousarray(out)


class CodingPipeline(nn.Module):
    """Sampling -> tiling -> in-loop codec -> initial upsample -> network."""

    def __init__(
        self,
        sampling: SamplingNetwork,
        recon: PyramidNetwork,
        codec_backend=None,
        codec_quality: float = 0.0,
    ):
        super().__init__()
        self.sampling = sampling
        self.recon = recon
        self.codec_backend = codec_backend
        self.codec_quality = codec_quality
        self.tile_side = tile_side(sampling.config.n_measurements)

    def forward(self, images: torch.Tensor):
        measurements = self.sampling(images)
        plane = tile_batch(measurements, self.tile_side)
        decoded = straight_through_roundtrip(plane, self.codec_backend, self.codec_quality)
        scale = self.recon.config.scale
        h, w = images.shape[-2], images.shape[-1]
        f0 = bilinear_resize(decoded, (h // scale, w // scale))
        return self.recon(f0), plane, decoded


@dataclass
class StepMetrics:
    step: int
    epoch: int
    lr: float
    loss: float
    recon_loss: float
    rate_loss: float


class Trainer:
    """Owns the pipeline, the Adam optimizer, and the seeded data order.

    Weight decay applies to convolution weights only; biases and the raw
    sampling weights are excluded (decaying the raw weights would fight
    their sum-to-one renormalization).
    """

    def __init__(
        self,
        pipeline: CodingPipeline,
        loss_config: LossConfig | None = None,
        schedule: TrainSchedule | None = None,
        seed: int = 0,
    ):
        self.pipeline = pipeline
        self.loss_config = loss_config or LossConfig()
        self.schedule = schedule or TrainSchedule()
        decay, plain = [], []
        for name, param in pipeline.named_parameters():
            if not param.requires_grad:
                continue
            if name.endswith("bias") or name.startswith("sampling."):
                plain.append(param)
            else:
                decay.append(param)
        self.optimizer = torch.optim.Adam(
            [
                {"params": decay, "weight_decay": self.schedule.weight_decay},
                {"params": plain, "weight_decay": 0.0},
            ],
            lr=self.schedule.learning_rate,
            betas=(self.schedule.adam_beta1, 0.999),
        )
        self.rng = np.random.default_rng(seed)
        self.step_count = 0
        self.loss_history: list[StepMetrics] = []

    @property
    def epoch(self) -> int:
        return self.step_count // self.schedule.iterations_per_epoch

    def _set_lr(self) -> float:
        lr = self.schedule.lr_at_epoch(self.epoch)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        return lr

    def next_batch(self, images: list[np.ndarray]) -> np.ndarray:
        """Seeded random crops + augmentation from an in-memory corpus."""
        crop = self.schedule.crop_size
        batch = np.empty((self.loss_config.batch_size, crop, crop))
        for b in range(self.loss_config.batch_size):
            idx = int(self.rng.integers(0, len(images)))
            img = images[idx]
            top = int(self.rng.integers(0, img.shape[0] - crop + 1))
            left = int(self.rng.integers(0, img.shape[1] - crop + 1))
            batch[b] = augment(img[top : top + crop, left : left + crop], self.rng)
        return batch

    def step(self, batch: np.ndarray) -> StepMetrics:
        lr = self._set_lr()
        dtype = next(self.pipeline.parameters()).dtype
        x = torch.as_tensor(batch, dtype=dtype).unsqueeze(1)
        x_hat, plane, _ = self.pipeline(x)
        loss, l_c, l_r = total_loss(x, x_hat, plane, self.loss_config)
        if not torch.isfinite(loss):
            raise NonFiniteLossError(
                f"non-finite loss at step {self.step_count}: "
                f"loss={loss.item()} recon={l_c.item()} rate={l_r.item()} lr={lr}"
            )
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.step_count += 1
        metrics = StepMetrics(
            step=self.step_count,
            epoch=self.epoch,
            lr=lr,
            loss=float(loss.item()),
            recon_loss=float(l_c.item()),
            rate_loss=float(l_r.item()),
        )
        self.loss_history.append(metrics)
        return metrics

    def train(self, images: list[np.ndarray], steps: int, log_path=None) -> list[StepMetrics]:
        """Run `steps` optimizer steps; append per-epoch means to the CSV log."""
        writer = None
        log_file = None
        if log_path is not None:
            log_file = open(log_path, "a", newline="")
            writer = csv.writer(log_file)
            if log_file.tell() == 0:
                writer.writerow(["epoch", "steps", "lr", "loss", "recon_loss", "rate_loss"])
        epoch_rows: list[StepMetrics] = []
        try:
            for step_idx in range(steps):
                before = self.epoch
                metrics = self.step(self.next_batch(images))
                epoch_rows.append(metrics)
                if writer is not None and (self.epoch != before or step_idx == steps - 1):
                    writer.writerow(
                        [
                            before,
                            len(epoch_rows),
                            f"{epoch_rows[-1].lr:.8g}",
                            f"{np.mean([m.loss for m in epoch_rows]):.8g}",
                            f"{np.mean([m.recon_loss for m in epoch_rows]):.8g}",
                            f"{np.mean([m.rate_loss for m in epoch_rows]):.8g}",
                        ]
                    )
                    epoch_rows = []
        finally:
            if log_file is not None:
                log_file.close()
        return self.loss_history[-steps:]

    def state_dict(self) -> dict:
        # deep copies: torch state_dicts hold live references, and the
        # optimizer mutates its moment tensors in place on every step
        return copy.deepcopy(
            {
                "step_count": self.step_count,
                "pipeline": self.pipeline.state_dict(),
                "optimizer": self.optimizer.state_dict(),
                "rng_state": self.rng.bit_generator.state,
            }
        )

    def load_state_dict(self, state: dict) -> None:
        state = copy.deepcopy(state)
        self.step_count = int(state["step_count"])
        self.pipeline.load_state_dict(state["pipeline"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.rng.bit_generator.state = state["rng_state"]


def moving_average(values: list[float], window: int) -> float:
    if len(values) < window:
        raise ValueError(f"need at least {window} values, got {len(values)}")
    return float(np.mean(values[-window:]))
