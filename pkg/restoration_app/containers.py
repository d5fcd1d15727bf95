"""
HSI container files and PGM export.

Container layout, little-endian:

    magic    8 bytes  b"HSIC0001"
    dtype    u8       0 = float32, 1 = float64
    layout   u8       0 = band-major (D, H, W)
    reserved u16      0
    D, H, W  3 x u32
    payload  D * H * W values

Arrays are [H, W, D] in memory; the payload is band-major on disk.
"""
import struct
from pathlib import Path

import numpy as np
from einops import rearrange

from hsdt_app.autograd import Tensor
from hsdt_app.exceptions import (ContainerError, ContainerMagicError, ContainerNonFiniteError,
                                 ContainerTruncatedError, ShapeError)

MAGIC = b'HSIC0001'
HEADER = struct.Struct('<8sBBHIII')
BAND_MAJOR = 0

DTYPE_CODES = {
    0: np.dtype('<f4'),
    1: np.dtype('<f8'),
}


def _code_for(dtype):
    for code, candidate in DTYPE_CODES.items():
        if np.dtype(dtype) == candidate.newbyteorder('='):
            return code
    raise ContainerError(f"Cannot store dtype {dtype}; use float32 or float64.")


def encode_hsi(hsi, dtype=None):
    """
    Container bytes for an [H, W, D] image.

    Raises:
        ContainerNonFiniteError: NaN or infinity in the image.
    """
    array = np.asarray(hsi.data if isinstance(hsi, Tensor) else hsi)
    if array.ndim != 3:
        raise ShapeError(f"expected [H, W, D], got {array.shape}", axis='rank')
    if dtype is None:
        dtype = array.dtype if array.dtype == np.float64 else np.float32
    code = _code_for(dtype)
    if not np.all(np.isfinite(array)):
        raise ContainerNonFiniteError('Refusing to store non-finite values.')
    height, width, bands = array.shape
    payload = np.ascontiguousarray(rearrange(array, 'h w d -> d h w'), dtype=DTYPE_CODES[code])
    return HEADER.pack(MAGIC, code, BAND_MAJOR, 0, bands, height, width) + payload.tobytes()


def decode_hsi(buffer):
    """
    Inverse of `encode_hsi`.

    Raises:
        ContainerMagicError, ContainerTruncatedError, ContainerNonFiniteError,
        ContainerError (unknown dtype or layout, trailing bytes)
    """
    if len(buffer) < len(MAGIC) or buffer[:len(MAGIC)] != MAGIC:
        raise ContainerMagicError('Bad magic: not an HSI container.')
    if len(buffer) < HEADER.size:
        raise ContainerTruncatedError(f"Header needs {HEADER.size} bytes, file has {len(buffer)}.")
    _, code, layout, _, bands, height, width = HEADER.unpack_from(buffer)
    if code not in DTYPE_CODES:
        raise ContainerError(f"Unknown dtype code {code}.")
    if layout != BAND_MAJOR:
        raise ContainerError(f"Unknown layout code {layout}.")
    dtype = DTYPE_CODES[code]
    expected = bands * height * width * dtype.itemsize
    payload = buffer[HEADER.size:]
    if len(payload) < expected:
        raise ContainerTruncatedError(f"Payload needs {expected} bytes, file has {len(payload)}.")
    if len(payload) > expected:
        raise ContainerError(f"{len(payload) - expected} unexpected bytes after the {expected}-byte payload.")
    cube = np.frombuffer(payload, dtype=dtype).reshape(bands, height, width)
    if not np.all(np.isfinite(cube)):
        raise ContainerNonFiniteError('Container holds non-finite values.')
    return np.ascontiguousarray(rearrange(cube, 'd h w -> h w d')).astype(dtype.newbyteorder('='))


def read_hsi(source):
    """Read a container from a path or binary file into an [H, W, D] array."""
    if isinstance(source, (str, Path)):
        return decode_hsi(Path(source).read_bytes())
    return decode_hsi(source.read())


def write_hsi(hsi, sink, dtype=None):
    payload = encode_hsi(hsi, dtype)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(payload)
    else:
        sink.write(payload)


def encode_pgm(band, data_range=1.0):
    """
    One band as a binary 16-bit PGM (P5, maxval 65535), clamped to [0, data_range].
    """
    band = np.asarray(band, dtype=np.float64)
    if band.ndim != 2:
        raise ShapeError(f"expected a single band [H, W], got {band.shape}", axis='rank')
    scaled = np.rint(np.clip(band / data_range, 0.0, 1.0) * 65535).astype('>u2')
    height, width = band.shape
    return f"P5\n{width} {height}\n65535\n".encode('ascii') + scaled.tobytes()


def export_pgm(hsi, directory, prefix='band', data_range=1.0):
    """
    Write every band of an [H, W, D] image as `<prefix>_<d>.pgm`.

    Returns:
        list[Path]: Written files in band order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hsi = np.asarray(hsi)
    paths = []
    for band in range(hsi.shape[-1]):
        path = directory / f"{prefix}_{band:03d}.pgm"
        path.write_bytes(encode_pgm(hsi[..., band], data_range))
        paths.append(path)
    return paths
