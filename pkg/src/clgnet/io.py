"""Little-endian binary tensor format.

Layout: ``b"CLGT"``, u32 rank, u32 dims[rank], f64 payload (row-major).
"""

import struct
from typing import BinaryIO, Union

import numpy as np

from .errors import IntegrityError
from .tensor import Tensor

MAGIC = b"CLGT"


def tensor_to_bytes(t: Union[Tensor, np.ndarray]) -> bytes:
    arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    head = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Decode one tensor starting at ``offset``; returns (Tensor, next_offset)."""
    if buf[offset:offset + 4] != MAGIC:
        raise IntegrityError("bad tensor magic")
    try:
        (rank,) = struct.unpack_from("<I", buf, offset + 4)
        dims = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    except struct.error:
        raise IntegrityError("truncated tensor header") from None
    start = offset + 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    end = start + 8 * count
    if end > len(buf):
        raise IntegrityError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=start).astype(np.float64)
    return Tensor(arr.reshape(dims)), end


def write_tensor(fh: BinaryIO, t) -> int:
    blob = tensor_to_bytes(t)
    fh.write(blob)
    return len(blob)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IntegrityError("truncated tensor stream")
    return data


def read_tensor(fh: BinaryIO) -> Tensor:
    """Read exactly one tensor from a stream, leaving it positioned after it."""
    head = _read_exact(fh, 8)
    (rank,) = struct.unpack_from("<I", head, 4)
    dims = _read_exact(fh, 4 * rank)
    count = int(np.prod(struct.unpack(f"<{rank}I", dims))) if rank else 1
    t, _ = tensor_from_bytes(head + dims + _read_exact(fh, 8 * count))
    return t
