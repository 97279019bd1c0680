"""
Image input and binarization: PGM parsing, dithering and PBM output
"""
import logging
from pathlib import Path
from typing import Literal, Tuple

import numba
import numpy as np
from PIL import Image

import sys
sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from models.schemas import GrayImage, BinaryImage
from .errors import PgmFormatError

logger = logging.getLogger(__name__)

DitherMethod = Literal["riemersma", "floyd", "none"]

_WHITESPACE = b" \t\n\r\v\f"


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Return the next whitespace-delimited header token, skipping # comments"""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmFormatError("unexpected end of PGM header")
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, name: str) -> Tuple[int, int]:
    token, pos = _next_token(data, pos)
    if not token.isdigit():
        raise PgmFormatError(f"PGM {name} is not a positive integer: {token!r}")
    return int(token), pos


def read_pgm(data: bytes) -> GrayImage:
    """
    Parse a binary (P5) or ASCII (P2) PGM file.

    Args:
        data: Raw file contents

    Returns:
        GrayImage with samples[y, x]
    """
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise PgmFormatError(f"bad PGM magic {magic!r}")
    pos = 2
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PgmFormatError(f"PGM dimensions must be positive, got {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PgmFormatError(f"PGM maxval {maxval} outside [1, 65535]")

    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
            raise PgmFormatError("missing whitespace after PGM maxval")
        pos += 1
        depth = 1 if maxval < 256 else 2
        payload = data[pos:pos + count * depth]
        if len(payload) < count * depth:
            raise PgmFormatError(
                f"truncated PGM payload: expected {count * depth} bytes, got {len(payload)}"
            )
        dtype = np.uint8 if depth == 1 else np.dtype(">u2")
        samples = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    else:
        values = []
        for _ in range(count):
            try:
                token, pos = _next_token(data, pos)
            except PgmFormatError:
                raise PgmFormatError(
                    f"truncated PGM payload: expected {count} samples, got {len(values)}"
                )
            if not token.isdigit():
                raise PgmFormatError(f"bad PGM sample {token!r}")
            values.append(int(token))
        samples = np.asarray(values, dtype=np.int64)

    if samples.max(initial=0) > maxval:
        raise PgmFormatError("PGM sample exceeds maxval")
    return GrayImage(width=width, height=height, maxval=maxval,
                     samples=samples.reshape(height, width))


def read_pgm_file(path: str | Path) -> GrayImage:
    with open(path, "rb") as f:
        return read_pgm(f.read())


@numba.njit(cache=True, nogil=True)
def _hilbert_d2xy(side, d):
    x = 0
    y = 0
    s = 1
    t = d
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


@numba.njit(cache=True, nogil=True)
def _hilbert_kernel(width, height, side):
    order = np.empty((width * height, 2), dtype=np.int64)
    k = 0
    for d in range(side * side):
        x, y = _hilbert_d2xy(side, d)
        if x < width and y < height:
            order[k, 0] = x
            order[k, 1] = y
            k += 1
    return order


def hilbert_order(width: int, height: int) -> np.ndarray:
    """
    Hilbert-curve visiting order of the pixels of a width x height image.

    The curve covers the smallest power-of-two square containing the image;
    off-image cells are skipped. Returns (width*height, 2) rows of 0-based (x, y).
    """
    side = 1
    while side < max(width, height):
        side *= 2
    return _hilbert_kernel(width, height, side)


@numba.njit(cache=True, nogil=True)
def _floyd_kernel(values, threshold):
    height, width = values.shape
    buf = values.copy()
    spins = np.empty((height, width), dtype=np.int8)
    made = np.zeros(height)
    inrow = np.zeros(height)
    carry = np.zeros(height)
    lost = np.zeros(height)
    for y in range(height):
        for x in range(width):
            old = buf[y, x]
            if old < threshold:
                q = 0.0
                spins[y, x] = 1
            else:
                q = 1.0
                spins[y, x] = -1
            e = old - q
            made[y] += e
            if x + 1 < width:
                buf[y, x + 1] += e * 7.0 / 16.0
                inrow[y] += e * 7.0 / 16.0
            else:
                lost[y] += e * 7.0 / 16.0
            if y + 1 < height:
                if x >= 1:
                    buf[y + 1, x - 1] += e * 3.0 / 16.0
                    carry[y] += e * 3.0 / 16.0
                else:
                    lost[y] += e * 3.0 / 16.0
                buf[y + 1, x] += e * 5.0 / 16.0
                carry[y] += e * 5.0 / 16.0
                if x + 1 < width:
                    buf[y + 1, x + 1] += e * 1.0 / 16.0
                    carry[y] += e * 1.0 / 16.0
                else:
                    lost[y] += e * 1.0 / 16.0
            else:
                lost[y] += e * 9.0 / 16.0
    return spins, buf, made, inrow, carry, lost


@numba.njit(cache=True, nogil=True)
def _riemersma_kernel(values, threshold, order, weights):
    height, width = values.shape
    spins = np.empty((height, width), dtype=np.int8)
    size = weights.shape[0]
    norm = weights[size - 1]
    queue = np.zeros(size)
    for k in range(order.shape[0]):
        x = order[k, 0]
        y = order[k, 1]
        err = 0.0
        for i in range(size):
            err += queue[i] * weights[i]
        val = values[y, x] + err / norm
        if val < threshold:
            q = 0.0
            spins[y, x] = 1
        else:
            q = 1.0
            spins[y, x] = -1
        for i in range(size - 1):
            queue[i] = queue[i + 1]
        queue[size - 1] = values[y, x] - q
    return spins


def riemersma_weights(size: int | None = None, ratio: float | None = None) -> np.ndarray:
    """Exponential queue weights, oldest first; newest / oldest == ratio"""
    size = size or settings.RIEMERSMA_QUEUE
    ratio = ratio or settings.RIEMERSMA_RATIO
    if size == 1:
        return np.ones(1)
    return ratio ** (np.arange(size) / (size - 1))


def _check_floyd_bookkeeping(values, buf, made, inrow, carry, lost) -> None:
    """Assert that every row's quantization error is accounted for"""
    scale = 1.0 + np.abs(made).sum()
    if not np.allclose(made, inrow + carry + lost, rtol=0.0, atol=1e-9 * scale):
        raise AssertionError("Floyd-Steinberg error bookkeeping broken within a row")
    received = (buf - values).sum(axis=1)
    expected = inrow + np.concatenate(([0.0], carry[:-1]))
    if not np.allclose(received, expected, rtol=0.0, atol=1e-9 * scale):
        raise AssertionError("Floyd-Steinberg error not conserved between rows")


def binarize(
    img: GrayImage,
    method: DitherMethod = "riemersma",
    threshold: float = settings.DEFAULT_THRESHOLD,
    debug: bool = False,
) -> BinaryImage:
    """
    Binarize a grayscale image into +-1 spins, dark pixels becoming +1.

    Args:
        img: Input image
        method: riemersma (Hilbert-curve error queue), floyd (raster
            Floyd-Steinberg) or none (plain threshold)
        threshold: Luminance fraction; pixels exactly at threshold are light
        debug: Check Floyd-Steinberg per-row error conservation

    Returns:
        BinaryImage of the same size
    """
    values = img.samples.astype(np.float64) / float(img.maxval)
    if method == "none":
        spins = np.where(values < threshold, 1, -1).astype(np.int8)
    elif method == "floyd":
        spins, buf, made, inrow, carry, lost = _floyd_kernel(values, float(threshold))
        if debug:
            _check_floyd_bookkeeping(values, buf, made, inrow, carry, lost)
    elif method == "riemersma":
        order = hilbert_order(img.width, img.height)
        spins = _riemersma_kernel(values, float(threshold), order, riemersma_weights())
    else:
        raise ValueError(f"unknown dither method: {method}")
    logger.debug(f"Binarized {img.width}x{img.height} image with {method}")
    return BinaryImage(width=img.width, height=img.height, spins=spins)


def write_pbm(img: BinaryImage, path: str | Path) -> None:
    """Write a P4 PBM (bit 1 = black = +1)"""
    # Pillow mode "1": 0 is black, 255 is white
    gray = np.where(img.spins == 1, 0, 255).astype(np.uint8)
    bitmap = Image.fromarray(gray).convert("1", dither=Image.Dither.NONE)
    bitmap.save(path, format="PPM")


def read_pbm(path: str | Path) -> BinaryImage:
    """Read a PBM file into spins"""
    with Image.open(path) as im:
        white = np.asarray(im.convert("1"), dtype=bool)
    spins = np.where(white, -1, 1).astype(np.int8)
    height, width = spins.shape
    return BinaryImage(width=width, height=height, spins=spins)
