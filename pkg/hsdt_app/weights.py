"""
Weight and checkpoint files.

Weights: magic b"HSDTW001", u32 entry count, then per entry a u16 name
length, the UTF-8 name, a u8 rank, rank x u32 extents and the float32
values, all little-endian. Entries are every parameter followed by the
batch-norm running statistics.

Checkpoints are a weight file followed by an optimizer section: magic
b"HSDTADAM", u64 step, then the first and second moments as entries named
"m.<param>" and "v.<param>" in the weight-entry encoding.
"""
import logging
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .exceptions import (BadMagicError, TensorShapeMismatchError, TruncatedFileError, UnknownTensorError,
                         WeightFormatError)
from .network import build_model
from .training import OptimState

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b'HSDTW001'
OPTIMIZER_MAGIC = b'HSDTADAM'
VALUE_DTYPE = np.dtype('<f4')


class _Reader:
    def __init__(self, buffer):
        self.buffer = buffer
        self.offset = 0

    def take(self, count, what):
        end = self.offset + count
        if end > len(self.buffer):
            raise TruncatedFileError(f"File ends inside {what} (needed {count} bytes at offset {self.offset}).")
        chunk = self.buffer[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def remaining(self):
        return len(self.buffer) - self.offset

    def expect_end(self):
        if self.remaining:
            raise WeightFormatError(f"{self.remaining} unexpected bytes at offset {self.offset}.")


def encode_entries(entries):
    """Serialize an ordered name -> array mapping (count + entries)."""
    out = [struct.pack('<I', len(entries))]
    for name, array in entries.items():
        encoded = name.encode('utf-8')
        array = np.asarray(array)
        out.append(struct.pack('<H', len(encoded)))
        out.append(encoded)
        out.append(struct.pack('<B', array.ndim))
        out.append(struct.pack(f"<{array.ndim}I", *array.shape))
        out.append(np.ascontiguousarray(array, dtype=VALUE_DTYPE).tobytes())
    return b''.join(out)


def decode_entries(reader):
    (count,) = reader.unpack('<I', 'entry count')
    entries = OrderedDict()
    for index in range(count):
        (length,) = reader.unpack('<H', f"name length of entry {index}")
        try:
            name = reader.take(length, f"name of entry {index}").decode('utf-8')
        except UnicodeDecodeError:
            raise WeightFormatError(f"Entry {index} has a name that is not UTF-8.")
        (rank,) = reader.unpack('<B', f"rank of '{name}'")
        shape = reader.unpack(f"<{rank}I", f"extents of '{name}'")
        size = int(np.prod(shape, dtype=np.int64))
        values = reader.take(size * VALUE_DTYPE.itemsize, f"values of '{name}'")
        entries[name] = np.frombuffer(values, dtype=VALUE_DTYPE).reshape(shape)
    return entries


def _read_bytes(source):
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _write_bytes(sink, payload):
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(payload)
    else:
        sink.write(payload)


def weights_bytes(model):
    return WEIGHTS_MAGIC + encode_entries(model.state_entries())


def save_weights(model, sink):
    """Write every parameter and running statistic of `model` to a path or binary file."""
    payload = weights_bytes(model)
    _write_bytes(sink, payload)
    logger.info("Saved %d tensors (%d bytes).", len(model.state_entries()), len(payload))


def _read_weights(reader):
    magic = reader.take(len(WEIGHTS_MAGIC), 'magic')
    if magic != WEIGHTS_MAGIC:
        raise BadMagicError(f"Not a weight file (magic {magic!r}).")
    return decode_entries(reader)


def _read_optimizer(reader):
    magic = reader.take(len(OPTIMIZER_MAGIC), 'optimizer magic')
    if magic != OPTIMIZER_MAGIC:
        raise BadMagicError(f"Missing optimizer section (magic {magic!r}).")
    (step,) = reader.unpack('<Q', 'optimizer step')
    moments = decode_entries(reader)
    reader.expect_end()
    return step, moments


def _assign(model, entries):
    """Validate the full manifest first, then copy; a failure leaves `model` untouched."""
    targets = model.state_entries()
    for name, array in entries.items():
        if name not in targets:
            raise UnknownTensorError(f"Unknown tensor '{name}'.")
        if array.shape != targets[name].shape:
            raise TensorShapeMismatchError(name, targets[name].shape, array.shape)
    missing = [name for name in targets if name not in entries]
    if missing:
        raise WeightFormatError(f"Missing tensors: {', '.join(missing)}.")
    for name, array in entries.items():
        targets[name][...] = array


def load_weights(source, config, dtype=None):
    """
    Build a model for `config` and fill it from a weight file.

    A checkpoint is accepted too; its optimizer section is read and discarded.

    Raises:
        BadMagicError, TruncatedFileError, UnknownTensorError,
        TensorShapeMismatchError, WeightFormatError
    """
    reader = _Reader(_read_bytes(source))
    entries = _read_weights(reader)
    if reader.buffer[reader.offset:reader.offset + len(OPTIMIZER_MAGIC)] == OPTIMIZER_MAGIC:
        _read_optimizer(reader)
    reader.expect_end()
    model = build_model(config, seed=0, dtype=dtype)
    _assign(model, entries)
    logger.info("Loaded %d tensors.", len(entries))
    return model


def save_checkpoint(model, state, sink):
    """Weights followed by the Adam section."""
    moments = OrderedDict()
    for name, _ in model.named_parameters():
        if name in state.first_moment:
            moments[f"m.{name}"] = state.first_moment[name]
            moments[f"v.{name}"] = state.second_moment[name]
    payload = b''.join([
        weights_bytes(model),
        OPTIMIZER_MAGIC,
        struct.pack('<Q', state.step),
        encode_entries(moments),
    ])
    _write_bytes(sink, payload)
    logger.info("Saved checkpoint at step %d (%d bytes).", state.step, len(payload))


def load_checkpoint(source, config, dtype=None):
    """
    Inverse of `save_checkpoint`.

    Returns:
        tuple[HsdtModel, OptimState]
    """
    reader = _Reader(_read_bytes(source))
    entries = _read_weights(reader)
    step, moments = _read_optimizer(reader)

    model = build_model(config, seed=0, dtype=dtype)
    _assign(model, entries)
    shapes = {name: param.shape for name, param in model.named_parameters()}
    state = OptimState(step=step)
    for key, array in moments.items():
        prefix, _, name = key.partition('.')
        if prefix not in ('m', 'v') or name not in shapes:
            raise UnknownTensorError(f"Unknown optimizer tensor '{key}'.")
        if array.shape != shapes[name]:
            raise TensorShapeMismatchError(key, shapes[name], array.shape)
        target = state.first_moment if prefix == 'm' else state.second_moment
        target[name] = array.astype(model.dtype)
    return model, state

