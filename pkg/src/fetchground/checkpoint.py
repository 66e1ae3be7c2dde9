"""Flat binary checkpoint format.

Layout (all integers little-endian):

    magic     8 bytes  b"ABCKPT1\\x00"
    count     u32      number of records
    record*   u16 name length, name bytes (UTF-8),
              u8 rank, rank * u32 dims,
              prod(dims) * f64 payload
    footer?   b"ABRNGS1\\x00" + u64 generator state (optional)

Round-trips are bit-exact: floats are written raw, never formatted.
"""

import struct

import numpy as np

from .errors import DataFormatError

MAGIC = b"ABCKPT1\x00"
RNG_MAGIC = b"ABRNGS1\x00"


def save_arrays(path, arrays: dict, rng_state: int | None = None):
    """Write name->float64-array mapping; optionally append the RNG state."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes(order="C"))
        if rng_state is not None:
            fh.write(RNG_MAGIC)
            fh.write(struct.pack("<Q", rng_state & 0xFFFFFFFFFFFFFFFF))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise DataFormatError(
                f"{self.path}: truncated while reading {what} at offset {self.off}")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out


def load_arrays(path) -> tuple[dict, int | None]:
    """Read a checkpoint back; returns (arrays, rng_state or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    rd = _Reader(blob, path)
    if rd.take(8, "magic") != MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a checkpoint file")
    (count,) = struct.unpack("<I", rd.take(4, "record count"))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", rd.take(2, "name length"))
        name = rd.take(nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", rd.take(1, f"rank of '{name}'"))
        dims = [struct.unpack("<I", rd.take(4, f"dim of '{name}'"))[0]
                for _ in range(rank)]
        n = 1
        for d in dims:
            n *= d
        payload = rd.take(8 * n, f"payload of '{name}'")
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    rng_state = None
    if rd.off < len(blob):
        if rd.take(8, "footer magic") != RNG_MAGIC:
            raise DataFormatError(f"{path}: unrecognized trailing bytes at "
                                  f"offset {rd.off - 8}")
        (rng_state,) = struct.unpack("<Q", rd.take(8, "generator state"))
        if rd.off != len(blob):
            raise DataFormatError(f"{path}: {len(blob) - rd.off} extra bytes "
                                  f"after footer at offset {rd.off}")
    return arrays, rng_state


def save_params(path, params, extra: dict | None = None,
                rng_state: int | None = None):
    """Checkpoint a parameter list (plus optional named extras)."""
    arrays = {p.name: p.data for p in params}
    if extra:
        for k, v in extra.items():
            arrays[k] = v
    save_arrays(path, arrays, rng_state=rng_state)


def load_params(path, params) -> tuple[dict, int | None]:
    """Restore parameter data in place; returns (leftover arrays, rng state).

    Every parameter must be present; shape mismatches are format errors.
    """
    arrays, rng_state = load_arrays(path)
    for p in params:
        if p.name not in arrays:
            raise DataFormatError(f"{path}: missing parameter '{p.name}'")
        arr = arrays.pop(p.name)
        if arr.shape != p.data.shape:
            raise DataFormatError(
                f"{path}: shape mismatch for '{p.name}': "
                f"file has {arr.shape}, model has {p.data.shape}")
        p.data[...] = arr
    return arrays, rng_state
