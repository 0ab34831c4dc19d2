import math

import numpy as np
import pytest

from cscodec import metrics
from cscodec.errors import ShapeMismatchError, TooSmallError


def test_psnr_identity_sentinel():
    x = np.random.default_rng(0).random((16, 16))
    assert metrics.psnr(x, x) == math.inf


def test_psnr_uniform_one_level():
    x = np.zeros((32, 32))
    x_hat = x + 1.0 / 255.0
    assert metrics.psnr(x, x_hat) == pytest.approx(20 * math.log10(255), abs=1e-9)
    assert metrics.psnr(x, x_hat) == pytest.approx(48.1308, abs=1e-3)


def test_psnr_zero_db_at_full_scale_error():
    x = np.zeros((8, 8))
    assert metrics.psnr(x, x + 1.0) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetric():
    rng = np.random.default_rng(1)
    x, y = rng.random((12, 12)), rng.random((12, 12))
    assert metrics.psnr(x, y) == pytest.approx(metrics.psnr(y, x))


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        metrics.psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identity():
    x = np.random.default_rng(2).random((24, 24))
    assert metrics.ssim(x, x) == pytest.approx(1.0, abs=1e-9)


def test_ssim_inverted_is_less_than_one():
    x = np.random.default_rng(3).random((24, 24))
    assert metrics.ssim(x, 1.0 - x) < 1.0


def test_ssim_constant_images_closed_form():
    # constant planes: variance terms vanish, only the luminance term remains
    mu1, mu2 = 100.0, 110.0
    x = np.full((16, 16), mu1 / 255.0)
    y = np.full((16, 16), mu2 / 255.0)
    c1 = (0.01 * 255) ** 2
    expected = (2 * mu1 * mu2 + c1) / (mu1**2 + mu2**2 + c1)
    assert metrics.ssim(x, y) == pytest.approx(expected, abs=1e-12)


def test_ssim_symmetric():
    rng = np.random.default_rng(4)
    x, y = rng.random((20, 20)), rng.random((20, 20))
    assert metrics.ssim(x, y) == pytest.approx(metrics.ssim(y, x), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(TooSmallError):
        metrics.ssim(np.zeros((10, 16)), np.zeros((10, 16)))


def test_ssim_in_valid_range():
    rng = np.random.default_rng(5)
    for _ in range(5):
        x, y = rng.random((16, 16)), rng.random((16, 16))
        assert -1.0 <= metrics.ssim(x, y) <= 1.0
