import numpy as np
import pytest

from cscodec import measurement as ms
from cscodec.errors import BadPlaneShapeError, CorruptContainerError
from cscodec.sampling import BlockMeasurements


def random_bm(rng, grid=(2, 3), n=7):
    return BlockMeasurements(vectors=rng.random((grid[0], grid[1], n)))


def test_tile_square_exact():
    bm = BlockMeasurements(vectors=np.array([[[0.1, 0.2, 0.3, 0.4]]]))
    plane = ms.tile_measurements(bm)
    assert plane.tile_side == 2
    assert np.array_equal(plane.values, [[0.1, 0.2], [0.3, 0.4]])


def test_tile_padding_replicates_last():
    bm = BlockMeasurements(vectors=np.array([[[0.1, 0.2, 0.3]]]))
    plane = ms.tile_measurements(bm)
    assert np.array_equal(plane.values, [[0.1, 0.2], [0.3, 0.3]])


def test_tile_padding_count_102():
    bm = BlockMeasurements(vectors=np.random.default_rng(0).random((1, 1, 102)))
    plane = ms.tile_measurements(bm)
    assert plane.tile_side == 11
    assert plane.values.shape == (11, 11)
    # 19 padded cells, all equal to the last measurement
    assert np.all(plane.values.reshape(-1)[102:] == bm.vectors[0, 0, -1])


def test_padding_cells_equal_predecessor():
    rng = np.random.default_rng(3)
    for n in (2, 5, 11, 33):
        plane = ms.tile_measurements(random_bm(rng, n=n))
        t = plane.tile_side
        tiles = plane.values.reshape(plane.grid_shape[0], t, plane.grid_shape[1], t)
        tiles = tiles.transpose(0, 2, 1, 3).reshape(-1, t * t)
        for flat in tiles:
            for idx in range(n, t * t):
                assert flat[idx] == flat[idx - 1]


@pytest.mark.parametrize("n", list(range(1, 65)))
def test_tiling_bijection(n):
    rng = np.random.default_rng(n)
    bm = random_bm(rng, grid=(3, 2), n=n)
    back = ms.untile_measurements(ms.tile_measurements(bm))
    assert np.array_equal(back.vectors, bm.vectors)


def test_untile_ignores_padding_cells():
    bm = BlockMeasurements(vectors=np.array([[[0.1, 0.2, 0.3]]]))
    plane = ms.tile_measurements(bm)
    plane.values[1, 1] = 0.999  # padding cell
    back = ms.untile_measurements(plane)
    assert np.array_equal(back.vectors, bm.vectors)


def test_untile_rejects_bad_shape():
    plane = ms.MeasurementPlane(
        values=np.zeros((5, 4)), tile_side=2, n_measurements=4, grid_shape=(2, 2)
    )
    with pytest.raises(BadPlaneShapeError):
        ms.untile_measurements(plane)


def test_quantize8_endpoints_and_half():
    assert ms.quantize8(np.array([0.0]))[0] == 0
    assert ms.quantize8(np.array([1.0]))[0] == 255
    assert ms.quantize8(np.array([0.5]))[0] == 128
    assert ms.dequantize8(np.array([128], dtype=np.uint8))[0] == pytest.approx(128 / 255)
    assert ms.dequantize8(ms.quantize8(np.array([0.0])))[0] == 0.0
    assert ms.dequantize8(ms.quantize8(np.array([1.0])))[0] == 1.0


def test_quantizer_bound():
    v = np.linspace(0.0, 1.0, 10007)
    err = np.abs(ms.dequantize8(ms.quantize8(v)) - v)
    assert err.max() <= 1 / 510 + 1e-12


def test_quantize8_clips():
    v = np.array([-0.3, 1.7])
    q = ms.quantize8(v)
    assert list(q) == [0, 255]


def container_fixture(payload=b"\x01\x02\x03"):
    return ms.BitstreamContainer(
        width=256,
        height=128,
        block_size=32,
        window_size=3,
        n_measurements=102,
        ratio=0.1,
        codec_id=ms.Codec.QUANT8_RAW,
        quality=0.0,
        payload=payload,
    )


def test_container_roundtrip_bit_exact():
    c = container_fixture(payload=bytes(range(256)))
    data = c.serialize()
    back = ms.parse_container(data)
    assert back == ms.parse_container(back.serialize())
    assert back.payload == c.payload
    assert back.width == 256 and back.height == 128
    assert back.n_measurements == 102
    assert back.ratio == pytest.approx(0.1)
    assert data == back.serialize()


def test_container_truncated_payload():
    data = container_fixture().serialize()
    with pytest.raises(CorruptContainerError):
        ms.parse_container(data[:-1])


def test_container_bad_magic():
    data = bytearray(container_fixture().serialize())
    data[:4] = b"XXXX"
    with pytest.raises(CorruptContainerError):
        ms.parse_container(bytes(data))


def test_container_short_header():
    with pytest.raises(CorruptContainerError):
        ms.parse_container(b"CSC1\x01")


def test_compute_bpp_values():
    c = container_fixture(payload=b"\x00" * 3277)
    c.width = c.height = 256
    rp = ms.compute_bpp(c)
    assert rp.bpp == pytest.approx(3277 * 8 / 65536)
    assert rp.payload_bits == 3277 * 8
    empty = container_fixture(payload=b"")
    assert ms.compute_bpp(empty).bpp == 0.0
    double = container_fixture(payload=b"\x00" * 6554)
    double.width = double.height = 256
    assert ms.compute_bpp(double).bpp == pytest.approx(2 * rp.bpp, rel=1e-3)


def test_dpcm_constant_half_stream_is_free():
    bm = BlockMeasurements(vectors=np.full((3, 4, 5), 0.5))
    rate, decoded = ms.dpcm_rate_estimate(bm, step=1 / 255, block_size=4)
    assert rate.payload_bits == 0.0
    assert np.allclose(decoded.vectors, 0.5)


def test_dpcm_identical_blocks_zero_residuals_after_first_column():
    rng = np.random.default_rng(8)
    vec = rng.random(6)
    bm = BlockMeasurements(vectors=np.tile(vec, (2, 5, 1)))
    step = 1 / 255
    rate, decoded = ms.dpcm_rate_estimate(bm, step, block_size=8)
    # reconstruct the symbol stream independently and check the zero runs
    prev = np.full(6, 0.5)
    first = np.floor((vec - prev) / step + 0.5)
    rest_zero = np.abs(decoded.vectors[:, 1:] - decoded.vectors[:, :-1]).max()
    assert rest_zero == 0.0
    # pooled entropy oracle over the full histogram
    symbols = np.concatenate([np.tile(first, 2), np.zeros(2 * 4 * 6)])
    oracle = ms.entropy_bits_per_symbol(symbols) * symbols.size
    assert rate.payload_bits == pytest.approx(oracle, abs=1e-9)


def test_dpcm_decoded_converges_with_step():
    rng = np.random.default_rng(5)
    bm = random_bm(rng, grid=(3, 3), n=9)
    for step in (1 / 31, 1 / 255, 1 / 4095):
        _, decoded = ms.dpcm_rate_estimate(bm, step, block_size=4)
        assert np.abs(decoded.vectors - bm.vectors).max() <= step / 2 + 1e-12


def test_dpcm_rate_matches_histogram_oracle():
    rng = np.random.default_rng(11)
    bm = random_bm(rng, grid=(4, 4), n=10)
    step = 1 / 255
    rate, _ = ms.dpcm_rate_estimate(bm, step, block_size=8)
    # independent recomputation of the symbol stream + histogram entropy
    symbols = []
    for i in range(4):
        prev = np.full(10, 0.5)
        for j in range(4):
            q = np.floor((bm.vectors[i, j] - prev) / step + 0.5)
            symbols.append(q)
            prev = prev + q * step
    symbols = np.concatenate(symbols)
    values, counts = np.unique(symbols, return_counts=True)
    p = counts / symbols.size
    oracle_bits = float(-(p * np.log2(p)).sum()) * symbols.size
    assert rate.payload_bits == pytest.approx(oracle_bits, abs=1e-9)
    assert rate.pixel_count == 4 * 4 * 64
    assert rate.bpp == pytest.approx(oracle_bits / (4 * 4 * 64), abs=1e-12)
