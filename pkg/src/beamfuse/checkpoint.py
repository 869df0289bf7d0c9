"""Binary parameter checkpoints.

Layout: magic "AMBP", format version u16, entry count u32, then one record
per parameter: path length u16, UTF-8 path, dtype u8 (0 = f32, 1 = f64),
rank u8, extents u32 each, row-major little-endian payload. All integers
little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AMBP"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(Exception):
    pass


def write_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Write arrays keyed by parameter path; entries sorted by path."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            if arr.dtype not in _CODES:
                raise CheckpointError(
                    f"unsupported dtype {arr.dtype} for parameter {name!r}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(_DTYPES[_CODES[arr.dtype]]).tobytes())


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()

    def fail(offset: int, why: str):
        raise CheckpointError(f"{path}: {why} at offset {offset}")

    if blob[:4] != MAGIC:
        fail(0, f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 10:
        fail(len(blob), "truncated header")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        fail(4, f"unsupported format version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 10
    for _ in range(count):
        if pos + 2 > len(blob):
            fail(pos, "truncated path length")
        (plen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + plen].decode("utf-8")
        pos += plen
        if pos + 2 > len(blob):
            fail(pos, f"truncated record header for {name!r}")
        code, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        if code not in _DTYPES:
            fail(pos - 2, f"unknown dtype code {code} for {name!r}")
        if pos + 4 * rank > len(blob):
            fail(pos, f"truncated dims for {name!r}")
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(blob):
            fail(pos, f"truncated payload for {name!r}")
        arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)),
                            offset=pos).reshape(dims)
        out[name] = arr.astype(dtype.newbyteorder("=")).reshape(dims)
        pos += nbytes
    if pos != len(blob):
        fail(pos, f"{len(blob) - pos} trailing bytes")
    return out
