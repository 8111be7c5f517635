"""Image preparation: cloud filtering, AOI extraction, tone mapping, PAN-sharpening.

Satellite scenes arrive as high-dynamic-range panchromatic/multispectral pairs
with per-scene metadata. This module filters cloudy scenes, projects the UTM
area of interest into pixel space, compresses intensities for display, and
fuses panchromatic detail with multispectral color via the Brovey ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .camera import RpcCamera, rpc_project
from .errors import EmptyIntersectionError
from .geodesy import utm_to_geodetic
from .raster import Raster, _sample_bicubic

DEFAULT_CLOUD_THRESHOLD = 0.5
DEFAULT_LO_PERCENTILE = 0.5
DEFAULT_HI_PERCENTILE = 99.5
GAMMA = 1.0 / 2.2
_BROVEY_DEN_EPSILON = 1e-6

SENSOR_PANCHROMATIC = "panchromatic"
SENSOR_MULTISPECTRAL = "multispectral"


@dataclass(frozen=True)
class SceneMetadata:
    """Per-scene sidecar facts used for filtering and pairing."""

    image_id: str
    cloud_cover: float
    acquired: str = ""
    sensor: str = SENSOR_PANCHROMATIC

    def __post_init__(self):
        if not 0.0 <= self.cloud_cover <= 1.0:
            raise ValueError(f"cloud_cover must be in [0, 1], got {self.cloud_cover}")
        if self.sensor not in (SENSOR_PANCHROMATIC, SENSOR_MULTISPECTRAL):
            raise ValueError(f"unknown sensor kind {self.sensor!r}")


@dataclass(frozen=True)
class AoiBox:
    """Area of interest as a UTM-aligned bounding box."""

    easting_min: float
    northing_min: float
    easting_max: float
    northing_max: float
    zone: int
    hemisphere: str

    def __post_init__(self):
        if not (self.easting_min < self.easting_max and self.northing_min < self.northing_max):
            raise ValueError("AOI must have min < max on both axes")

    def corners(self):
        return (
            (self.easting_min, self.northing_min),
            (self.easting_min, self.northing_max),
            (self.easting_max, self.northing_min),
            (self.easting_max, self.northing_max),
        )


def filter_by_cloud_cover(
    scenes: Sequence[SceneMetadata], threshold: float = DEFAULT_CLOUD_THRESHOLD
) -> list[SceneMetadata]:
    """Keep scenes whose cloud cover does not exceed the threshold (strict >excluded)."""
    return [scene for scene in scenes if scene.cloud_cover <= threshold]


def aoi_to_pixel_bbox(
    rpc: RpcCamera,
    aoi: AoiBox,
    height: float = 0.0,
    image_width: Optional[int] = None,
    image_height: Optional[int] = None,
) -> tuple[int, int, int, int]:
    """Project the AOI corners and return their integer pixel hull.

    The four UTM corners are converted to geodetic coordinates at the given
    reference height and pushed through the RPC; the result is the half-open
    axis-aligned hull ``(x0, y0, x1, y1)`` with floored minima and ceiled
    maxima, at least one pixel wide, clamped to the image when dimensions are
    supplied. Raises :class:`EmptyIntersectionError` when the hull lies
    entirely outside the image.
    """
    samples = []
    lines = []
    for easting, northing in aoi.corners():
        lat, lon = utm_to_geodetic(easting, northing, aoi.zone, aoi.hemisphere)
        proj = rpc_project(rpc, lat, lon, height)
        samples.append(proj.sample)
        lines.append(proj.line)
    x0 = math.floor(min(samples))
    y0 = math.floor(min(lines))
    x1 = math.ceil(max(samples))
    y1 = math.ceil(max(lines))
    if x1 == x0:
        x1 += 1
    if y1 == y0:
        y1 += 1
    if image_width is not None and image_height is not None:
        cx0 = max(x0, 0)
        cy0 = max(y0, 0)
        cx1 = min(x1, image_width)
        cy1 = min(y1, image_height)
        if cx0 >= cx1 or cy0 >= cy1:
            raise EmptyIntersectionError(
                f"AOI pixel hull ({x0},{y0})-({x1},{y1}) does not intersect "
                f"the {image_width}x{image_height} image"
            )
        return cx0, cy0, cx1, cy1
    return x0, y0, x1, y1


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile: value at round((n-1) * p / 100), half-up."""
    n = sorted_values.size
    idx = int(math.floor((n - 1) * percentile / 100.0 + 0.5))
    return float(sorted_values[min(max(idx, 0), n - 1)])


def percentile_clip(
    raster: Raster,
    lo: float = DEFAULT_LO_PERCENTILE,
    hi: float = DEFAULT_HI_PERCENTILE,
) -> Raster:
    """Clamp each channel's tails at its lo/hi nearest-rank percentiles.

    Tail values are clamped to the percentile levels, not dropped to nodata,
    so pixel counts are preserved. Nodata samples are ignored when computing
    the percentiles and preserved in the output. A channel with no valid
    samples is an error.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got {lo} >= {hi}")
    values = raster.to_masked()
    out = values.copy()
    for c in range(raster.channels):
        plane = values[:, :, c]
        valid = plane[np.isfinite(plane)]
        if valid.size == 0:
            raise ValueError(f"channel {c} has no valid samples")
        ordered = np.sort(valid)
        p_lo = _nearest_rank(ordered, lo)
        p_hi = _nearest_rank(ordered, hi)
        out[:, :, c] = np.clip(plane, p_lo, p_hi)
    return raster.from_masked(out)


def tonemap(
    raster: Raster,
    lo: float = DEFAULT_LO_PERCENTILE,
    hi: float = DEFAULT_HI_PERCENTILE,
) -> Raster:
    """Compress a high-dynamic-range raster to the 8-bit display range.

    Per channel: percentile clip, min-max normalize to [0, 1], apply the
    gamma curve ``I ** (1/2.2)``, scale to [0, 255] and round half-up.
    A constant channel maps to 0. Values stay float32 in {0, ..., 255};
    use the PNG exporter for an actual 8-bit file.
    """
    clipped = percentile_clip(raster, lo, hi)
    values = clipped.to_masked()
    out = values.copy()
    for c in range(raster.channels):
        plane = values[:, :, c]
        finite = np.isfinite(plane)
        mn = plane[finite].min()
        mx = plane[finite].max()
        if mx > mn:
            normalized = (plane - mn) / (mx - mn)
        else:
            normalized = np.zeros_like(plane)
            normalized[~finite] = np.nan
        with np.errstate(invalid="ignore"):
            mapped = np.floor(255.0 * np.power(normalized, GAMMA) + 0.5)
        out[:, :, c] = mapped
    return raster.from_masked(out)


def _upsample_cubic(msi: Raster, width: int, height: int) -> np.ndarray:
    """Resample all channels of ``msi`` onto a width x height pixel grid.

    Pixel centers align the two continuous image domains: destination pixel
    ``x`` samples the source at ``(x + 0.5) * (src_w / dst_w) - 0.5``.
    """
    sx = msi.width / width
    sy = msi.height / height
    xs = (np.arange(width, dtype=np.float64) + 0.5) * sx - 0.5
    ys = (np.arange(height, dtype=np.float64) + 0.5) * sy - 0.5
    gx, gy = np.meshgrid(xs, ys)
    gx = np.clip(gx, -0.5, msi.width - 0.5)
    gy = np.clip(gy, -0.5, msi.height - 0.5)
    src = msi.to_masked()
    out = np.empty((height, width, msi.channels), dtype=np.float64)
    for c in range(msi.channels):
        out[:, :, c] = _sample_bicubic(src[:, :, c], gx, gy)
    return out


def pansharpen_brovey(pan: Raster, msi: Raster, weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3)) -> Raster:
    """Brovey-transform fusion of a panchromatic and a multispectral raster.

    The multispectral raster is upsampled to the panchromatic grid with cubic
    interpolation, then each band is scaled by ``pan / sum_k(w_k * msi_k)``
    with the weights normalized to sum one. Pixels whose weighted intensity
    is smaller than 1e-6 in magnitude become nodata, as do pixels with any
    nodata input.
    """
    if pan.channels != 1:
        raise ValueError(f"pan must be single-channel, got {pan.channels}")
    if msi.channels != 3:
        raise ValueError(f"msi must have 3 channels, got {msi.channels}")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (3,):
        raise ValueError(f"need 3 weights, got {w.size}")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weight vector must not be all zero")
    w = w / total

    up = _upsample_cubic(msi, pan.width, pan.height)
    pan_values = pan.to_masked()[:, :, 0]
    intensity = up @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = pan_values / intensity
        out = up * ratio[:, :, np.newaxis]
    out[np.abs(intensity) < _BROVEY_DEN_EPSILON, :] = np.nan
    return pan.from_masked(out)
