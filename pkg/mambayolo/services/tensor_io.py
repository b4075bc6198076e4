"""
MYT1 tensor dumps.

Layout: magic b"MYT1", u8 rank, rank x u32 little-endian dims, then the
row-major float32 little-endian payload.
"""
import os
import struct

import numpy as np

from mambayolo.exceptions import TensorFormatError
from mambayolo.models.tensor import Tensor, as_tensor

MAGIC = b'MYT1'
_PAYLOAD_DTYPE = np.dtype('<f4')


def encode_tensor(tensor: Tensor) -> bytes:
    """Serialize a tensor to MYT1 bytes."""
    arr = np.asarray(tensor)
    if arr.ndim < 1 or arr.ndim > 255:
        raise TensorFormatError(f"MYT1 supports rank 1..255, got rank {arr.ndim}")
    if any(dim < 1 or dim > 0xFFFFFFFF for dim in arr.shape):
        raise TensorFormatError(f"MYT1 dims must be in 1..2^32-1, got {arr.shape}")
    header = MAGIC + struct.pack('<B', arr.ndim) + struct.pack(f'<{arr.ndim}I', *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_PAYLOAD_DTYPE).tobytes()


def decode_tensor(data: bytes, source: str = '<bytes>') -> Tensor:
    """Parse MYT1 bytes back into a read-only float32 tensor."""
    if len(data) < 5 or data[:4] != MAGIC:
        raise TensorFormatError(f"{source}: not a MYT1 tensor dump (bad magic)")
    rank = data[4]
    if rank < 1:
        raise TensorFormatError(f"{source}: rank must be >= 1")
    dims_end = 5 + 4 * rank
    if len(data) < dims_end:
        raise TensorFormatError(f"{source}: truncated header, expected {rank} dims")
    shape = struct.unpack(f'<{rank}I', data[5:dims_end])
    if any(dim < 1 for dim in shape):
        raise TensorFormatError(f"{source}: zero-sized dimension in {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    payload = data[dims_end:]
    if len(payload) != count * _PAYLOAD_DTYPE.itemsize:
        raise TensorFormatError(
            f"{source}: payload is {len(payload)} bytes, shape {shape} needs {count * _PAYLOAD_DTYPE.itemsize}"
        )
    values = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(shape)
    return as_tensor(values.astype(np.float32), name=source)


def write_tensor(path: str, tensor: Tensor) -> str:
    """Write a tensor dump, creating parent directories as needed."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(encode_tensor(tensor))
    return path


def read_tensor(path: str) -> Tensor:
    """Read a tensor dump from disk."""
    with open(path, 'rb') as fh:
        return decode_tensor(fh.read(), source=path)
