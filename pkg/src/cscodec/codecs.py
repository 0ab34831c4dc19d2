"""Codec backends: in-process 8-bit quantizer and external codec bridges.

External codecs run as separate processes in a private temporary directory,
exchanging lossless 8-bit grayscale image files with the bridge; the payload
recorded in the container is the codec's own bitstream file.  Binary paths
can be overridden through environment variables (CSCODEC_J2K_ENCODER,
CSCODEC_J2K_DECODER, CSCODEC_BPG_ENCODER, CSCODEC_BPG_DECODER), each holding
a full command prefix.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import CodecFailureError, CodecUnavailableError, CorruptContainerError
from .imagefiles import read_pgm, write_pgm
from .measurement import (
    BitstreamContainer,
    Codec,
    MeasurementPlane,
    dequantize8,
    quantize8,
    tile_side,
)
from .sampling import SamplingConfig


def _run(cmd: list[str], cwd: Path) -> None:
    try:
        proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise CodecUnavailableError(f"codec binary not found: {cmd[0]}") from exc
    if proc.returncode != 0:
        raise CodecFailureError(
            f"codec command failed ({proc.returncode}): {' '.join(cmd)}",
            diagnostic=(proc.stdout or "") + (proc.stderr or ""),
        )


def _env_command(var: str) -> list[str] | None:
    value = os.environ.get(var)
    return shlex.split(value) if value else None


def _pil_has_j2k() -> bool:
    try:
        from PIL import features

        return bool(features.check("jpg_2000"))
    except Exception:
        return False


class Quant8Backend:
    """Payload is the raw 8-bit plane, row-major; quality is ignored."""

    name = "quant8"
    codec_id = Codec.QUANT8_RAW
    quality_bounds = (0.0, 0.0)
    integer_quality = False

    def available(self) -> bool:
        return True

    def encode(self, levels: np.ndarray, quality: float) -> bytes:
        return levels.tobytes()

    def decode(self, payload: bytes, shape: tuple[int, int]) -> np.ndarray:
        rows, cols = shape
        if len(payload) != rows * cols:
            raise CorruptContainerError(
                f"quant8 payload is {len(payload)} bytes, expected {rows * cols}"
            )
        return np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols).copy()


class ExternalBackend:
    """Shared subprocess plumbing for file-based codecs."""

    name = ""
    codec_id = -1
    quality_bounds = (0.0, 0.0)
    integer_quality = False
    image_suffix = ".pgm"
    stream_suffix = ".bin"

    def encoder_command(self) -> list[str] | None:
        raise NotImplementedError

    def decoder_command(self) -> list[str] | None:
        raise NotImplementedError

    def encode_args(self, cmd, image_path, stream_path, quality) -> list[str]:
        raise NotImplementedError

    def decode_args(self, cmd, stream_path, image_path) -> list[str]:
        raise NotImplementedError

    def available(self) -> bool:
        return self.encoder_command() is not None and self.decoder_command() is not None

    def _write_image(self, path: Path, levels: np.ndarray) -> None:
        write_pgm(path, levels)

    def _read_image(self, path: Path) -> np.ndarray:
        return read_pgm(path)

    def encode(self, levels: np.ndarray, quality: float) -> bytes:
        cmd = self.encoder_command()
        if cmd is None:
            raise CodecUnavailableError(f"no encoder available for {self.name}")
        with tempfile.TemporaryDirectory(prefix=f"cscodec-{self.name}-") as tmp:
            tmp = Path(tmp)
            image_path = tmp / f"plane{self.image_suffix}"
            stream_path = tmp / f"plane{self.stream_suffix}"
            self._write_image(image_path, levels)
            _run(self.encode_args(cmd, image_path, stream_path, quality), tmp)
            if not stream_path.exists():
                raise CodecFailureError(f"{self.name} encoder produced no output file")
            return stream_path.read_bytes()

    def decode(self, payload: bytes, shape: tuple[int, int]) -> np.ndarray:
        cmd = self.decoder_command()
        if cmd is None:
            raise CodecUnavailableError(f"no decoder available for {self.name}")
        with tempfile.TemporaryDirectory(prefix=f"cscodec-{self.name}-") as tmp:
            tmp = Path(tmp)
            stream_path = tmp / f"plane{self.stream_suffix}"
            image_path = tmp / f"decoded{self.image_suffix}"
            stream_path.write_bytes(payload)
            _run(self.decode_args(cmd, stream_path, image_path), tmp)
            if not image_path.exists():
                raise CodecFailureError(f"{self.name} decoder produced no output file")
            levels = self._read_image(image_path)
        if levels.shape != tuple(shape):
            raise CodecFailureError(
                f"{self.name} decoded {levels.shape}, expected {tuple(shape)}"
            )
        return levels


class J2KBackend(ExternalBackend):
    """JPEG2000 via opj_compress/opj_decompress; quality = compression ratio.

    Falls back to the bundled Pillow shim when the OpenJPEG tools are absent
    but Pillow was built with JPEG2000 support.
    """

    name = "j2k"
    codec_id = Codec.EXTERNAL_J2K
    quality_bounds = (1.0, 2000.0)
    integer_quality = False
    stream_suffix = ".j2k"

    def encoder_command(self):
        cmd = _env_command("CSCODEC_J2K_ENCODER")
        if cmd:
            return cmd
        if shutil.which("opj_compress"):
            return ["opj_compress"]
        if _pil_has_j2k():
            return [sys.executable, "-m", "cscodec.pil_j2k", "compress"]
        return None

    def decoder_command(self):
        cmd = _env_command("CSCODEC_J2K_DECODER")
        if cmd:
            return cmd
        if shutil.which("opj_decompress"):
            return ["opj_decompress"]
        if _pil_has_j2k():
            return [sys.executable, "-m", "cscodec.pil_j2k", "decompress"]
        return None

    def encode_args(self, cmd, image_path, stream_path, quality):
        return [*cmd, "-i", str(image_path), "-o", str(stream_path), "-r", f"{quality:g}"]

    def decode_args(self, cmd, stream_path, image_path):
        return [*cmd, "-i", str(stream_path), "-o", str(image_path)]


class BPGBackend(ExternalBackend):
    """BPG via bpgenc/bpgdec; quality = integer quantizer parameter (0..51).

    bpgenc only reads PNG/JPEG, so this bridge exchanges lossless 8-bit
    grayscale PNG instead of PGM.
    """

    name = "bpg"
    codec_id = Codec.EXTERNAL_BPG
    quality_bounds = (0.0, 51.0)
    integer_quality = True
    image_suffix = ".png"
    stream_suffix = ".bpg"

    def encoder_command(self):
        return _env_command("CSCODEC_BPG_ENCODER") or (
            ["bpgenc"] if shutil.which("bpgenc") else None
        )

    def decoder_command(self):
        return _env_command("CSCODEC_BPG_DECODER") or (
            ["bpgdec"] if shutil.which("bpgdec") else None
        )

    def encode_args(self, cmd, image_path, stream_path, quality):
        return [*cmd, "-q", str(int(round(quality))), "-o", str(stream_path), str(image_path)]

    def decode_args(self, cmd, stream_path, image_path):
        return [*cmd, "-o", str(image_path), str(stream_path)]

    def _write_image(self, path: Path, levels: np.ndarray) -> None:
        from PIL import Image

        Image.fromarray(levels, mode="L").save(path, format="PNG")

    def _read_image(self, path: Path) -> np.ndarray:
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)


_REGISTRY: dict[str, object] = {}


def register_backend(backend) -> None:
    _REGISTRY[backend.name] = backend


register_backend(Quant8Backend())
register_backend(J2KBackend())
register_backend(BPGBackend())


def get_backend(name_or_id):
    if isinstance(name_or_id, (int, np.integer)):
        name = Codec.NAMES.get(int(name_or_id))
        if name is None:
            raise CodecUnavailableError(f"unknown codec id {name_or_id}")
    else:
        name = str(name_or_id)
    if name == "dpcm":
        raise CodecUnavailableError(
            "dpcm is a rate estimator, not a bitstream codec; use the evaluation commands"
        )
    backend = _REGISTRY.get(name)
    if backend is None:
        raise CodecUnavailableError(f"no codec backend registered as {name!r}")
    return backend


def encode_plane(
    plane: MeasurementPlane, backend, config: SamplingConfig, quality: float = 0.0
) -> BitstreamContainer:
    """Compress the 8-bit plane with the backend and wrap it in a container."""
    if not backend.available():
        raise CodecUnavailableError(f"backend {backend.name!r} is not available")
    lo, hi = backend.quality_bounds
    if not lo <= quality <= hi:
        raise ValueError(f"{backend.name} quality {quality} outside [{lo}, {hi}]")
    grid_rows, grid_cols = plane.grid_shape
    levels = quantize8(plane.values)
    payload = backend.encode(levels, quality)
    return BitstreamContainer(
        width=grid_cols * config.block_size,
        height=grid_rows * config.block_size,
        block_size=config.block_size,
        window_size=config.window_size,
        n_measurements=plane.n_measurements,
        ratio=config.ratio,
        codec_id=backend.codec_id,
        quality=float(quality),
        payload=payload,
    )


def decode_container(container: BitstreamContainer, registry=None) -> MeasurementPlane:
    """Run the backend's decoder and rebuild the measurement plane."""
    if container.width % container.block_size or container.height % container.block_size:
        raise CorruptContainerError(
            f"container geometry {container.width}x{container.height} not divisible "
            f"by block size {container.block_size}"
        )
    backend = (
        registry[Codec.NAMES[container.codec_id]]
        if registry is not None
        else get_backend(container.codec_id)
    )
    if not backend.available():
        raise CodecUnavailableError(f"backend {backend.name!r} is not available")
    grid_rows = container.height // container.block_size
    grid_cols = container.width // container.block_size
    t = tile_side(container.n_measurements)
    shape = (grid_rows * t, grid_cols * t)
    levels = backend.decode(container.payload, shape)
    return MeasurementPlane(
        values=dequantize8(levels),
        tile_side=t,
        n_measurements=container.n_measurements,
        grid_shape=(grid_rows, grid_cols),
    )


def roundtrip_plane(plane: MeasurementPlane, backend, quality: float = 0.0) -> MeasurementPlane:
    """Encode/decode a plane in memory without container bookkeeping."""
    if not backend.available():
        raise CodecUnavailableError(f"backend {backend.name!r} is not available")
    levels = backend.decode(backend.encode(quantize8(plane.values), quality), plane.values.shape)
    return MeasurementPlane(
        values=dequantize8(levels),
        tile_side=plane.tile_side,
        n_measurements=plane.n_measurements,
        grid_shape=plane.grid_shape,
    )
