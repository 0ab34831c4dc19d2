import numpy as np
import pytest
import torch

from cscodec.reconstruction import NetworkConfig, build_network
from cscodec.sampling import SamplingConfig, build_operator
from cscodec.training import CodingPipeline, LossConfig, SamplingNetwork, total_loss


def build_tiny_pipeline(dtype=torch.float64, codec=None, seed=0, trainable=True):
    """B=4, L=2, R=0.25 pipeline (S=1, n_B=4) for fast exact tests."""
    scfg = SamplingConfig(ratio=0.25, block_size=4, window_size=2, seed=seed)
    ncfg = NetworkConfig(ratio=0.25, block_size=4, channels=4, tail_blocks=1, blocks_per_level=1)
    sampling = SamplingNetwork(build_operator(scfg), dtype=dtype, trainable=trainable)
    recon = build_network(ncfg, seed=seed + 1, dtype=dtype)
    return CodingPipeline(sampling, recon, codec_backend=codec)


def loss_of(pipeline, images: torch.Tensor, loss_cfg: LossConfig) -> torch.Tensor:
    x_hat, plane, _ = pipeline(images)
    loss, _, _ = total_loss(images, x_hat, plane, loss_cfg)
    return loss


def finite_difference_gradients(pipeline, images, loss_cfg, eps=1e-4):
    """Central finite differences of the total loss for every parameter.

    Independent of autograd: perturbs each entry in place and re-runs the
    forward pass in float64.
    """
    grads = {}
    with torch.no_grad():
        for name, param in pipeline.named_parameters():
            grad = torch.zeros_like(param)
            flat = param.view(-1)
            gflat = grad.view(-1)
            for idx in range(flat.numel()):
                original = flat[idx].item()
                flat[idx] = original + eps
                plus = loss_of(pipeline, images, loss_cfg).item()
                flat[idx] = original - eps
                minus = loss_of(pipeline, images, loss_cfg).item()
                flat[idx] = original
                gflat[idx] = (plus - minus) / (2 * eps)
            grads[name] = grad
    return grads


@pytest.fixture(scope="session")
def toy_images():
    from cscodec.corpus import synthetic_corpus

    return synthetic_corpus(8, size=32, seed=123).images


@pytest.fixture
def rng():
    return np.random.default_rng(0)
