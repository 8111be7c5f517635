"""Raster container, bit-exact file I/O, cubic interpolation and affine warping.

A :class:`Raster` is an immutable ``height x width x channels`` grid of 32-bit
float samples with a nodata sentinel (NaN by default). Pixel centers sit at
integer coordinates: sample ``(x, y)`` represents continuous position
``(x, y)``, so the valid query domain of a ``w x h`` raster is
``[-0.5, w - 0.5] x [-0.5, h - 0.5]``.

The on-disk format is deliberately trivial and bit-exact:

    SRTK1\\n
    <width> <height> <channels> <nodata>\\n
    <little-endian float32 payload, row-major, channel-interleaved>
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import FileFormatError, SingularMatrixError

RASTER_MAGIC = b"SRTK1\n"

_MAX_CHANNELS = 4


def thread_count() -> int:
    """Worker count for internally parallel operations.

    Controlled by the ``SATRECON_THREADS`` environment variable;
    unset or ``0`` means auto (one per CPU).
    """
    raw = os.environ.get("SATRECON_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


class Raster:
    """Immutable float32 image/depth grid with a nodata sentinel."""

    __slots__ = ("data", "nodata")

    def __init__(self, data, nodata: float = float("nan")):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"raster data must be 2-D or 3-D, got {arr.ndim}-D")
        if not 1 <= arr.shape[2] <= _MAX_CHANNELS:
            raise ValueError(f"channel count must be 1..{_MAX_CHANNELS}, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("raster dimensions must be positive")
        arr = np.ascontiguousarray(arr)
        nodata = np.float32(nodata)
        # Invariant: every sample that is not the nodata sentinel is finite.
        if math.isnan(float(nodata)):
            bad = np.isinf(arr)
        else:
            bad = ~np.isfinite(arr)
        if bad.any():
            raise ValueError("raster contains non-finite samples that are not nodata")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "nodata", float(nodata))

    def __setattr__(self, name, value):
        raise AttributeError("Raster is immutable")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def valid_mask(self) -> np.ndarray:
        """Boolean (h, w, c) mask of samples that are not nodata."""
        if math.isnan(self.nodata):
            return ~np.isnan(self.data)
        return self.data != np.float32(self.nodata)

    def channel(self, index: int) -> np.ndarray:
        if not 0 <= index < self.channels:
            raise ValueError(f"channel {index} out of range (raster has {self.channels})")
        return self.data[:, :, index]

    def with_data(self, data) -> "Raster":
        """New raster with the same nodata sentinel."""
        return Raster(data, nodata=self.nodata)

    def to_masked(self) -> np.ndarray:
        """float64 copy with nodata replaced by NaN (computation form)."""
        out = self.data.astype(np.float64)
        if not math.isnan(self.nodata):
            out[self.data == np.float32(self.nodata)] = np.nan
        return out

    def from_masked(self, values: np.ndarray) -> "Raster":
        """Back from NaN-masked float64 values, restoring the sentinel."""
        out = np.asarray(values, dtype=np.float32)
        if not math.isnan(self.nodata):
            out = np.where(np.isnan(out), np.float32(self.nodata), out)
        return Raster(out, nodata=self.nodata)


class AffineMap2D:
    """2-D affine pixel map as a 3x3 matrix with bottom row (0, 0, 1).

    The upper-left 2x2 block must be invertible. Instances are immutable.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"affine map must be 3x3, got {m.shape}")
        if not np.array_equal(m[2], [0.0, 0.0, 1.0]):
            raise ValueError("affine map bottom row must be (0, 0, 1)")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) <= 1e-12:
            raise SingularMatrixError(f"affine map is singular (det={det:.3e})")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("AffineMap2D is immutable")

    @classmethod
    def identity(cls) -> "AffineMap2D":
        return cls(np.eye(3))

    def inverse(self) -> "AffineMap2D":
        a, b, tx = self.matrix[0]
        c, d, ty = self.matrix[1]
        det = a * d - b * c
        inv = np.array(
            [
                [d / det, -b / det, (b * ty - d * tx) / det],
                [-c / det, a / det, (c * tx - a * ty) / det],
                [0.0, 0.0, 1.0],
            ]
        )
        return AffineMap2D(inv)

    def apply(self, xs, ys):
        """Map pixel coordinates; accepts scalars or arrays."""
        m = self.matrix
        return (
            m[0, 0] * xs + m[0, 1] * ys + m[0, 2],
            m[1, 0] * xs + m[1, 1] * ys + m[1, 2],
        )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def save_raster(raster: Raster, path) -> None:
    """Write a raster losslessly (bit-exact round trip guaranteed)."""
    header = f"{raster.width} {raster.height} {raster.channels} {repr(float(raster.nodata))}\n"
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(header.encode("ascii"))
        fh.write(raster.data.astype("<f4", copy=False).tobytes())


def load_raster(path) -> Raster:
    """Read a raster written by :func:`save_raster`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(RASTER_MAGIC))
        if magic != RASTER_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        header = bytearray()
        while True:
            ch = fh.read(1)
            if not ch:
                raise FileFormatError(f"{path}: unterminated header")
            if ch == b"\n":
                break
            header += ch
            if len(header) > 256:
                raise FileFormatError(f"{path}: header too long")
        parts = header.decode("ascii", errors="replace").split()
        if len(parts) != 4:
            raise FileFormatError(f"{path}: header must have 4 fields, got {len(parts)}")
        try:
            width, height, channels = int(parts[0]), int(parts[1]), int(parts[2])
            nodata = float(parts[3])
        except ValueError as exc:
            raise FileFormatError(f"{path}: malformed header: {exc}") from exc
        if width < 1 or height < 1 or not 1 <= channels <= _MAX_CHANNELS:
            raise FileFormatError(f"{path}: invalid dimensions {width}x{height}x{channels}")
        expected = width * height * channels * 4
        payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise FileFormatError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    if len(payload) > expected:
        raise FileFormatError(f"{path}: trailing data after payload")
    samples = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
    try:
        return Raster(samples, nodata=nodata)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Cubic interpolation
# ---------------------------------------------------------------------------


def _catmull_rom_weights(t: np.ndarray):
    """Weights of the four support samples for fractional offset t in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    w0 = 0.5 * (-t + 2.0 * t2 - t3)
    w1 = 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3)
    w2 = 0.5 * (t + 4.0 * t2 - 3.0 * t3)
    w3 = 0.5 * (-t2 + t3)
    return w0, w1, w2, w3


def _sample_bicubic(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Catmull-Rom sampling of a 2-D float64 array with clamp-to-edge support.

    Queries outside ``[-0.5, w-0.5] x [-0.5, h-0.5]`` yield NaN; NaN support
    samples propagate to the result regardless of their weight.
    """
    h, w = values.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = (xs >= -0.5) & (xs <= w - 0.5) & (ys >= -0.5) & (ys <= h - 0.5)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    ix = x0.astype(np.int64)
    iy = y0.astype(np.int64)

    wx = _catmull_rom_weights(tx)
    wy = _catmull_rom_weights(ty)

    acc = np.zeros(xs.shape, dtype=np.float64)
    for j in range(4):
        row = np.clip(iy + (j - 1), 0, h - 1)
        row_acc = np.zeros(xs.shape, dtype=np.float64)
        for i in range(4):
            col = np.clip(ix + (i - 1), 0, w - 1)
            row_acc += wx[i] * values[row, col]
        acc += wy[j] * row_acc
    return np.where(inside, acc, np.nan)


def cubic_interpolate(raster: Raster, x: float, y: float, channel: int = 0) -> float:
    """Catmull-Rom value of one channel at continuous pixel position (x, y).

    The query must lie within the raster's continuous domain
    ``[-0.5, width-0.5] x [-0.5, height-0.5]``; support samples beyond the
    border clamp to the edge. Returns the nodata sentinel when any of the
    16 support samples is nodata.
    """
    if not 0 <= channel < raster.channels:
        raise ValueError(f"channel {channel} out of range (raster has {raster.channels})")
    if not (-0.5 <= x <= raster.width - 0.5 and -0.5 <= y <= raster.height - 0.5):
        raise ValueError(f"query ({x}, {y}) outside raster domain")
    plane = raster.to_masked()[:, :, channel]
    value = _sample_bicubic(plane, np.float64(x), np.float64(y))
    value = float(value)
    if math.isnan(value):
        return raster.nodata
    return value


# ---------------------------------------------------------------------------
# Affine warping
# ---------------------------------------------------------------------------


def warp_affine(raster: Raster, amap: AffineMap2D) -> Raster:
    """Resample ``raster`` under the pixel-content map ``amap``.

    ``out(p) = in(amap^-1 . p)`` (inverse mapping over output pixel centers),
    so the image content moves the way ``amap`` maps coordinates. The output
    canvas equals the input canvas; output pixels whose source coordinate
    falls outside the input domain become nodata.
    """
    inv = amap.inverse()
    h, w = raster.height, raster.width
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx, sy = inv.apply(xs, ys)
    src = raster.to_masked()

    out = np.empty((h, w, raster.channels), dtype=np.float64)
    workers = min(thread_count(), h)
    if workers > 1 and h >= 64:
        bounds = np.linspace(0, h, workers + 1, dtype=int)

        def run(lo, hi):
            for c in range(raster.channels):
                out[lo:hi, :, c] = _sample_bicubic(src[:, :, c], sx[lo:hi], sy[lo:hi])

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run, lo, hi)
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for fut in futures:
                fut.result()
    else:
        for c in range(raster.channels):
            out[:, :, c] = _sample_bicubic(src[:, :, c], sx, sy)

    return raster.from_masked(out)
