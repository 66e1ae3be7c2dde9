"""Raster plumbing: binary PPM (P6) / PGM (P5) files, crops, and a
bit-exact nearest-neighbor resize.

Images are uint8 in files and float64 in [0,1] arrays internally,
channel-first [C,H,W].
"""

import numpy as np

from .errors import DataFormatError, InputError


def _read_header(blob: bytes, magic: bytes, path):
    if not blob.startswith(magic):
        raise DataFormatError(f"{path}: expected {magic.decode()} header")
    # header tokens: magic, width, height, maxval; comments start with '#'
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated header at offset {pos}")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric header field")
    if maxval != 255:
        raise DataFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    return w, h, pos


def read_ppm(path) -> np.ndarray:
    """[3,H,W] float64 in [0,1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    w, h, pos = _read_header(blob, b"P6", path)
    need = 3 * w * h
    data = blob[pos:pos + need]
    if len(data) < need:
        raise DataFormatError(
            f"{path}: pixel data truncated at offset {pos + len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, img: np.ndarray):
    """img: [3,H,W] float in [0,1] or uint8."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise InputError(f"write_ppm expects [3,H,W], got {img.shape}")
    px = to_bytes(img).transpose(1, 2, 0)
    h, w = px.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(px.tobytes())


def read_pgm(path) -> np.ndarray:
    """[H,W] uint8."""
    with open(path, "rb") as fh:
        blob = fh.read()
    w, h, pos = _read_header(blob, b"P5", path)
    need = w * h
    data = blob[pos:pos + need]
    if len(data) < need:
        raise DataFormatError(
            f"{path}: pixel data truncated at offset {pos + len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def write_pgm(path, img: np.ndarray):
    """img: [H,W] uint8."""
    if img.ndim != 2:
        raise InputError(f"write_pgm expects [H,W], got {img.shape}")
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Float [0,1] -> uint8 by round-half-up; uint8 passes through."""
    if img.dtype == np.uint8:
        return img
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def crop(img: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    """Channel-first crop; the box must lie inside the image."""
    _, H, W = img.shape
    if not (0 <= x and 0 <= y and x + w <= W and y + h <= H and w > 0 and h > 0):
        raise InputError(f"crop ({x},{y},{w},{h}) outside {W}x{H} image")
    return img[:, y:y + h, x:x + w]


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of [C,H,W]; index map (i*in)//out."""
    if img.ndim != 3:
        raise InputError(f"resize_nearest expects [C,H,W], got {img.shape}")
    c, h, w = img.shape
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise InputError("resize_nearest needs non-empty input and output")
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return img[:, rows[:, None], cols[None, :]]
